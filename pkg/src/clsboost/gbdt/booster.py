"""Boosting loop, model object and prediction for binary logistic loss."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from .._math import sigmoid
from .binning import BinMapper, fit_bins
from .grower import Tree, grow_tree, predict_tree_binned

__all__ = [
    "GBDTConfig",
    "GBDTModel",
    "logistic_grad_hess",
    "sigmoid",
    "log_loss",
    "train",
    "predict_raw",
    "predict_proba",
    "BASE_SCORE_CLAMP",
]

BASE_SCORE_CLAMP = math.log(1e6)


@dataclass(frozen=True)
class GBDTConfig:
    n_trees: int = 100
    num_leaves: int = 31
    min_data_in_leaf: int = 20
    max_bins: int = 255
    learning_rate: float = 0.1
    lambda_l2: float = 0.0
    feature_fraction: float = 1.0
    bagging_fraction: float = 1.0
    scale_pos_weight: float = 1.0
    early_stopping_rounds: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if self.num_leaves < 2:
            raise ValueError("num_leaves must be >= 2")
        if not 2 <= self.max_bins <= 65536:
            raise ValueError("max_bins must lie in [2, 65536]")
        if self.min_data_in_leaf < 1:
            raise ValueError("min_data_in_leaf must be >= 1")
        if self.learning_rate < 0 or self.lambda_l2 < 0:
            raise ValueError("learning_rate and lambda_l2 must be >= 0")
        if not (0 < self.feature_fraction <= 1 and 0 < self.bagging_fraction <= 1):
            raise ValueError("feature_fraction and bagging_fraction must lie in (0, 1]")
        if not self.scale_pos_weight > 0:
            raise ValueError("scale_pos_weight must be > 0")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ValueError("early_stopping_rounds must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "GBDTConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown GBDT config keys: {unknown}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class GBDTModel:
    """Base log-odds plus trees whose leaf values already include the learning rate."""

    base_score: float
    trees: list[Tree]
    bin_mapper: BinMapper
    config: GBDTConfig = GBDTConfig()
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_iteration: Optional[int] = None

    @property
    def n_features(self) -> int:
        return self.bin_mapper.n_features


def logistic_grad_hess(y, score, w=1.0):
    """First and second derivative of the weighted logistic loss at ``score``."""
    p = sigmoid(score)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    g = w * (p - y)
    h = w * p * (1.0 - p)
    if g.ndim == 0:
        return float(g), float(h)
    return g, h


def log_loss(y, score, w=None) -> float:
    """Mean (weighted) logistic loss computed stably from log-odds."""
    y = np.asarray(y, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    per = np.logaddexp(0.0, score) - y * score
    if w is None:
        return float(per.mean())
    return float(np.sum(w * per) / np.sum(w))


def _base_score(y, w) -> float:
    p = float(np.sum(w * y) / np.sum(w))
    if p <= 0.0:
        return -BASE_SCORE_CLAMP
    if p >= 1.0:
        return BASE_SCORE_CLAMP
    return float(np.clip(math.log(p / (1.0 - p)), -BASE_SCORE_CLAMP, BASE_SCORE_CLAMP))


def _labels(y, n) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return y.astype(np.float64)


def train(
    X,
    y,
    config: GBDTConfig = GBDTConfig(),
    X_val=None,
    y_val=None,
    callback: Optional[Callable[[int, float], None]] = None,
) -> GBDTModel:
    """Fit a boosted ensemble.

    Each iteration computes gradients at the current scores, draws a row
    subset (``bagging_fraction``) and then a feature subset
    (``feature_fraction``) from one ``numpy`` generator seeded with
    ``config.seed``, grows a tree and adds ``learning_rate`` times its output.

    With a validation set the mean validation log-loss is recorded after
    every iteration and passed to ``callback(iteration, val_loss)``; if
    ``early_stopping_rounds`` is set, training stops after that many
    iterations without improvement and the ensemble is cut back to the best
    iteration.
    """
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D matrix")
    if not np.isfinite(X).all():
        raise ValueError("training features must be finite")
    n = X.shape[0]
    y = _labels(y, n)
    w = np.where(y == 1, config.scale_pos_weight, 1.0)

    mapper = fit_bins(X, config.max_bins)
    codes = mapper.transform(X)
    base = _base_score(y, w)
    scores = np.full(n, base)
    model = GBDTModel(base_score=base, trees=[], bin_mapper=mapper, config=config)
    model.train_loss.append(log_loss(y, scores, w))

    has_val = X_val is not None
    if has_val:
        codes_val = mapper.transform(X_val)
        yv = _labels(y_val, codes_val.shape[0])
        val_scores = np.full(codes_val.shape[0], base)
        model.val_loss.append(log_loss(yv, val_scores))
        best_loss, best_iter = model.val_loss[0], 0

    rng = np.random.default_rng(config.seed)
    n_features = X.shape[1]
    for it in range(config.n_trees):
        g, h = logistic_grad_hess(y, scores, w)
        rows = None
        if config.bagging_fraction < 1.0:
            k = max(1, int(round(config.bagging_fraction * n)))
            rows = np.sort(rng.choice(n, size=k, replace=False))
        features = None
        if config.feature_fraction < 1.0:
            k = max(1, int(round(config.feature_fraction * n_features)))
            features = np.sort(rng.choice(n_features, size=k, replace=False))
        tree = grow_tree(codes, g, h, config, rows=rows, features=features).scaled(config.learning_rate)
        model.trees.append(tree)
        predict_tree_binned(tree, codes, scores)
        model.train_loss.append(log_loss(y, scores, w))
        if has_val:
            predict_tree_binned(tree, codes_val, val_scores)
            loss = log_loss(yv, val_scores)
            model.val_loss.append(loss)
            if callback is not None:
                callback(it + 1, loss)
            if loss < best_loss:
                best_loss, best_iter = loss, it + 1
            elif config.early_stopping_rounds is not None and it + 1 - best_iter >= config.early_stopping_rounds:
                break
    if has_val and config.early_stopping_rounds is not None:
        del model.trees[best_iter:]
        model.best_iteration = best_iter
    return model


def predict_raw(model: GBDTModel, X) -> np.ndarray:
    """Log-odds: base score plus the routed leaf value of every tree."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float32))
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got {X.shape[1]}")
    codes = model.bin_mapper.transform(X)
    out = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        predict_tree_binned(tree, codes, out)
    return out


def predict_proba(model: GBDTModel, X) -> np.ndarray:
    return sigmoid(predict_raw(model, X))
