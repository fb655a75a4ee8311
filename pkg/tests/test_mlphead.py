from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clsboost import metrics
from clsboost.mlphead import (
    AdamState,
    MLPConfig,
    MLPParams,
    adam_step,
    backward,
    bce_loss,
    forward,
    init_params,
    load_head,
    predict_proba,
    save_head,
    train_head,
)
from oracles import finite_difference_grad, random_kink_free_network, relative_error


def _tiny(w1=1.0, b1=0.0, w2=1.0, b2=0.0):
    return MLPParams(np.array([[w1]]), np.array([b1]), np.array([w2]), b2)


def _blobs(n, seed):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(size=(n, 2))
    X[:, 0] += np.where(y == 1, 2.0, -2.0)
    return X, y


class TestForward:
    def test_zero_network(self):
        assert forward(MLPParams.zeros(3, 2), np.array([1.0, -2.0, 5.0])) == 0.5

    def test_relu_kill(self):
        assert forward(_tiny(), np.array([-3.0])) == 0.5

    def test_sigmoid_two(self):
        assert forward(_tiny(), np.array([2.0])) == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-15)
        assert forward(_tiny(), np.array([2.0])) == pytest.approx(0.8808, abs=1e-4)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            forward(MLPParams.zeros(3, 2), np.zeros(2))

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-1e6, 1e6), st.floats(-1e3, 1e3))
    def test_output_strictly_inside_unit_interval(self, x, w):
        p = forward(_tiny(w1=w, w2=w), np.array([x]))
        assert 0.0 < p < 1.0

    def test_inconsistent_shapes(self):
        with pytest.raises(ValueError):
            MLPParams(np.zeros((2, 3)), np.zeros(2), np.zeros(3), 0.0)


class TestLoss:
    @pytest.mark.parametrize("y", [0, 1])
    def test_midpoint(self, y):
        assert bce_loss(0.5, y) == pytest.approx(math.log(2), rel=1e-12)

    def test_near_perfect(self):
        assert bce_loss(1 - 1e-7, 1) == pytest.approx(1e-7, rel=1e-6)

    def test_confident_wrong(self):
        assert bce_loss(0.9, 0) == pytest.approx(-math.log(0.1), rel=1e-12)
        assert bce_loss(0.9, 0) == pytest.approx(2.3026, abs=1e-4)

    def test_clamped(self):
        assert bce_loss(0.0, 1) == pytest.approx(-math.log(1e-7), rel=1e-9)
        assert math.isfinite(bce_loss(1.0, 0))

    @given(st.floats(0, 1), st.sampled_from([0, 1]))
    def test_non_negative(self, p, y):
        assert bce_loss(p, y) >= 0.0


class TestBackward:
    def test_soft_target_zero_output_bias_grad(self):
        g = backward(MLPParams.zeros(3, 2), np.ones((1, 3)), np.array([0.5]))
        assert g.b2 == 0.0

    def test_hand_derived_single_unit(self):
        w, c, v, d, x, y = 0.5, 0.1, -1.5, 0.2, 2.0, 1.0
        a = w * x + c  # positive, so the ReLU is the identity here
        p = 1 / (1 + math.exp(-(v * a + d)))
        g = backward(_tiny(w, c, v, d), np.array([[x]]), np.array([y]))
        assert g.b2 == pytest.approx(p - y, rel=1e-12)
        assert g.W2[0] == pytest.approx((p - y) * a, rel=1e-12)
        assert g.b1[0] == pytest.approx((p - y) * v, rel=1e-12)
        assert g.W1[0, 0] == pytest.approx((p - y) * v * x, rel=1e-12)

    def test_dead_unit_has_zero_first_layer_grad(self):
        g = backward(_tiny(1.0, -5.0, 2.0, 0.0), np.array([[1.0]]), np.array([1.0]))
        assert g.W1[0, 0] == 0.0 and g.b1[0] == 0.0

    def test_random_networks_match_finite_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            p, X, y = random_kink_free_network(rng)
            fd = finite_difference_grad(p, X, y, h=1e-4)
            for a, b in zip(backward(p, X, y).arrays(), fd):
                assert relative_error(a, b) <= 1e-4

    def test_8x4_network(self):
        rng = np.random.default_rng(3)
        while True:
            p = init_params(8, 4, rng)
            p.b1[:] = rng.normal(size=4)
            X = rng.normal(size=(16, 8))
            if np.abs(X @ p.W1 + p.b1).min() > 1e-2:
                break
        y = rng.integers(0, 2, 16).astype(float)
        fd = finite_difference_grad(p, X, y)
        for a, b in zip(backward(p, X, y).arrays(), fd):
            assert relative_error(a, b) <= 1e-4

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            backward(MLPParams.zeros(2, 2), np.zeros((0, 2)), np.zeros(0))


class TestAdam:
    def _scalar(self, value):
        return MLPParams(np.zeros((1, 1)), np.zeros(1), np.zeros(1), value)

    def _grad(self, value):
        return MLPParams(np.zeros((1, 1)), np.zeros(1), np.zeros(1), value)

    def test_zero_gradient_fresh_state(self):
        rng = np.random.default_rng(0)
        p = init_params(3, 2, rng)
        q, s = adam_step(p, MLPParams.zeros(3, 2), AdamState())
        for a, b in zip(p.arrays(), q.arrays()):
            np.testing.assert_array_equal(a, b)
        assert s.t == 1

    def test_single_step_example(self):
        q, _ = adam_step(self._scalar(1.0), self._grad(1.0), AdamState(lr=0.1))
        assert q.b2 == pytest.approx(1.0 - 0.1 / (1 + 1e-8), rel=1e-12)
        assert q.b2 == pytest.approx(0.9, abs=1e-7)

    def test_constant_gradient_monotone(self):
        p, s = self._scalar(1.0), AdamState(lr=0.1)
        values = [p.b2]
        for _ in range(5):
            p, s = adam_step(p, self._grad(1.0), s)
            values.append(p.b2)
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_inputs_untouched(self):
        p, s = self._scalar(1.0), AdamState(lr=0.1)
        adam_step(p, self._grad(1.0), s)
        assert p.b2 == 1.0 and s.t == 0 and s.m is None

    @pytest.mark.parametrize("kwargs", [{"lr": 0.0}, {"beta1": 1.0}, {"eps": 0.0}, {"beta2": -0.1}])
    def test_invalid_hyperparameters(self, kwargs):
        with pytest.raises(ValueError):
            AdamState(**kwargs)


class TestTrainHead:
    def test_separable_blobs(self):
        X, y = _blobs(200, 0)
        Xv, yv = _blobs(200, 1)
        params, hist = train_head(X, y, Xv, yv, MLPConfig(hidden=8, epochs=50, lr=1e-2, seed=0))
        pred = (predict_proba(params, Xv) >= 0.5).astype(int)
        assert metrics.f1(metrics.confusion(yv, pred)) >= 0.95
        assert max(hist.val_f1) == hist.val_f1[hist.best_epoch]

    def test_repeated_sample_loss_non_increasing(self):
        X = np.tile([[0.3, -1.2, 0.7]], (32, 1))
        y = np.ones(32, dtype=int)
        _, hist = train_head(X, y, config=MLPConfig(hidden=4, epochs=10, seed=2))
        assert len(hist.train_loss) == 10
        assert all(b <= a for a, b in zip(hist.train_loss, hist.train_loss[1:]))

    def test_zero_epochs_returns_initial_params(self):
        X, y = _blobs(20, 0)
        cfg = MLPConfig(hidden=4, epochs=0, seed=5)
        params, hist = train_head(X, y, X, y, cfg)
        init = init_params(2, 4, np.random.default_rng(5))
        for a, b in zip(params.arrays(), init.arrays()):
            np.testing.assert_array_equal(a, b)
        assert hist.train_loss == [] and hist.val_f1 == [] and hist.best_epoch is None

    def test_deterministic(self):
        X, y = _blobs(100, 3)
        cfg = MLPConfig(hidden=6, epochs=5, batch_size=16, seed=9)
        p1, h1 = train_head(X, y, X, y, cfg)
        p2, h2 = train_head(X, y, X, y, cfg)
        assert h1.as_dict() == h2.as_dict()
        for a, b in zip(p1.arrays(), p2.arrays()):
            assert a.tobytes() == b.tobytes()

    def test_declared_dim_mismatch(self):
        X, y = _blobs(10, 0)
        with pytest.raises(ValueError):
            train_head(X, y, config=MLPConfig(hidden=2, epochs=1), d_in=3)

    def test_divergence_raises(self):
        X, y = _blobs(64, 0)
        with pytest.raises(FloatingPointError):
            train_head(X, y, config=MLPConfig(hidden=4, epochs=3, lr=1e300))

    def test_bad_labels(self):
        with pytest.raises(ValueError):
            train_head(np.zeros((2, 2)), np.array([0, 2]), config=MLPConfig(hidden=2, epochs=1))


class TestModelFile:
    def test_roundtrip_float32(self, tmp_path):
        p = init_params(5, 3, np.random.default_rng(0))
        path = tmp_path / "h.mlph"
        save_head(p, path)
        q, scaler = load_head(path)
        assert scaler is None
        for a, b in zip(p.arrays(), q.arrays()):
            np.testing.assert_array_equal(a.astype(np.float32), b)
        assert path.read_bytes()[:4] == b"MLPH"

    def test_roundtrip_with_scaler(self, tmp_path):
        p = init_params(2, 2, np.random.default_rng(0))
        path = tmp_path / "h.mlph"
        mean, scale = np.array([1.0, 2.0], np.float32), np.array([0.5, 4.0], np.float32)
        save_head(p, path, (mean, scale))
        _, scaler = load_head(path)
        np.testing.assert_array_equal(scaler[0], mean)
        np.testing.assert_array_equal(scaler[1], scale)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(ValueError):
            load_head(path)
