from __future__ import annotations

import json
from collections import Counter

import numpy as np
import pytest

from clsboost import cli, metrics
from clsboost.embedio import EmbeddingMatrix, read_embeddings, write_embeddings
from clsboost.pipeline import (
    CUE_WORDS,
    SIGNAL_PHRASES,
    ConfigError,
    DataError,
    PipelineConfig,
    StageError,
    SyntheticSpec,
    embed_records,
    labels_of,
    load_dataset,
    make_synthetic,
    read_predictions,
    run_eval,
    run_predict,
    run_train,
    write_dataset,
)
from clsboost.textprep import Record, preprocess
from oracles import bayes_f1

SMALL = SyntheticSpec(n_train=600, n_val=200, n_test=300, seed=3)
DIM = 256
STUB = {"stub": {"dim": DIM, "seed": 0}}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    paths = {}
    for name, recs in zip(("train", "val", "test"), make_synthetic(SMALL)):
        paths[name] = d / f"{name}.tsv"
        write_dataset(recs, paths[name])
    return paths


def _gbdt_config(**extra):
    return PipelineConfig.from_dict({"embedding": STUB, "model": {"kind": "gbdt", "params": {
        "n_trees": 50, "min_data_in_leaf": 5}}, **extra})


def _signal_rule(tokens) -> int:
    text = " " + " ".join(tokens) + " "
    has_signal = any(" " + " ".join(p) + " " in text for p in SIGNAL_PHRASES)
    has_cue = any(f" {c} " in text for c in CUE_WORDS)
    return int(has_signal and not has_cue)


class TestLoadDataset:
    def test_well_formed(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("a\thello\t1\nb\tworld\t0\n", "utf-8")
        assert load_dataset(p) == [Record("a", "hello", 1), Record("b", "world", 0)]

    def test_header(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("id\ttext\tlabel\na\thello\t1\n", "utf-8")
        assert load_dataset(p, has_header=True) == [Record("a", "hello", 1)]

    def test_bad_label_names_line(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("a\thello\t1\nb\tworld\t2\n", "utf-8")
        with pytest.raises(DataError, match=r"d\.tsv:2: label"):
            load_dataset(p)

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("a\thello\t1\nno tabs here\n", "utf-8")
        with pytest.raises(DataError, match=":2:"):
            load_dataset(p)

    def test_unlabeled(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("a\thello\nb\tworld\n", "utf-8")
        recs = load_dataset(p)
        assert [r.label for r in recs] == [None, None]
        with pytest.raises(DataError):
            labels_of(recs)

    def test_roundtrip(self, tmp_path):
        recs = [Record("x1", "some text", 1), Record("x2", "tab\tinside", None)]
        p = tmp_path / "d.tsv"
        write_dataset(recs, p)
        assert load_dataset(p) == [recs[0], Record("x2", "tab inside", None)]


class TestSynthetic:
    def test_exact_counts(self):
        train, val, test = make_synthetic(SyntheticSpec(n_train=10, n_val=4, n_test=6, positive_rate=0.5))
        assert [sum(r.label for r in s) for s in (train, val, test)] == [5, 2, 3]
        assert (len(train), len(val), len(test)) == (10, 4, 6)

    def test_default_counts(self):
        spec = SyntheticSpec()
        assert (spec.n_train, spec.n_val, spec.n_test) == (7600, 400, 10000)
        assert spec.positives(spec.n_train) == 1334

    def test_deterministic(self):
        assert make_synthetic(SMALL) == make_synthetic(SMALL)
        assert make_synthetic(SMALL) != make_synthetic(SyntheticSpec(n_train=600, n_val=200, n_test=300, seed=4))

    def test_invalid(self):
        with pytest.raises(ConfigError):
            SyntheticSpec(n_train=0)
        with pytest.raises(ConfigError):
            SyntheticSpec(positive_rate=1.0)

    def test_signal_rates(self):
        train, _, _ = make_synthetic(SyntheticSpec(n_train=4000, n_val=1, n_test=1, seed=0))
        rates = Counter()
        for r in train:
            text = " " + " ".join(preprocess(r.text, stopwords=False)) + " "
            rates[(r.label, any(" " + " ".join(p) + " " in text for p in SIGNAL_PHRASES))] += 1
        pos = rates[(1, True)] / (rates[(1, True)] + rates[(1, False)])
        neg = rates[(0, True)] / (rates[(0, True)] + rates[(0, False)])
        assert abs(pos - 0.95) < 0.02 and abs(neg - 0.05) < 0.015

    def test_bayes_bound_analytic(self):
        rate = 1334 / 7600
        assert bayes_f1(0.95, 0.05, rate) == pytest.approx(2 * 0.95 / 1.95)
        assert bayes_f1(0.95, 0.05, rate) >= 0.9
        # even a rule blind to the cue words stays above 0.85
        assert bayes_f1(0.95, 0.05, rate, cues_observable=False) > 0.85

    def test_bayes_rule_on_default_test_split(self):
        _, _, test = make_synthetic(SyntheticSpec())
        y = [r.label for r in test]
        pred = [_signal_rule(preprocess(r.text)) for r in test]
        assert metrics.f1(metrics.confusion(y, pred)) >= 0.9


class TestConfig:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            PipelineConfig.from_dict({"embedding": STUB, "learning_rate": 0.1})

    def test_unknown_model_param(self):
        with pytest.raises(ConfigError, match="depth"):
            PipelineConfig.from_dict({"embedding": STUB, "model": {"kind": "gbdt", "params": {"depth": 3}}})

    @pytest.mark.parametrize("emb", [{}, {"stub": {"dim": 8}, "file": {}}, {"stub": {"dim": 0}}])
    def test_exactly_one_embedding_source(self, emb):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"embedding": emb})

    @pytest.mark.parametrize("t", [0.0, 1.0, 1.5])
    def test_threshold_open_interval(self, t):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"embedding": STUB, "threshold": t})

    def test_roundtrip(self):
        cfg = _gbdt_config(seed=4)
        assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
        assert cfg.model_config().seed == 4

    def test_file_embeddings(self, tmp_path):
        recs = [Record("a", "x", 1), Record("b", "y", 0)]
        for i in range(2):
            write_embeddings(EmbeddingMatrix(np.full((2, 3), i, np.float32)), tmp_path / f"l{i}.clsb")
        cfg = PipelineConfig.from_dict({"embedding": {"file": {
            "train": [str(tmp_path / "l0.clsb"), str(tmp_path / "l1.clsb")]}}})
        assert embed_records(recs, cfg, "train").dim == 6
        with pytest.raises(ConfigError):
            embed_records(recs, cfg, "val")


class TestRunTrain:
    def test_gbdt(self, corpus, tmp_path):
        report = run_train(_gbdt_config(), corpus["train"], corpus["val"], tmp_path / "m", tmp_path / "r.json")
        assert (tmp_path / "m").read_bytes()[:4] == b"GBDT"
        saved = json.loads((tmp_path / "r.json").read_text())
        assert saved == json.loads(json.dumps(report))
        assert set(saved) >= {"config", "history", "validation"}
        assert saved["validation"]["f1"] > 0.75

    def test_mlp(self, corpus, tmp_path):
        cfg = PipelineConfig.from_dict({"embedding": STUB, "model": {"kind": "mlp", "params": {
            "hidden": 32, "epochs": 5, "lr": 0.003}}, "standardize": True})
        report = run_train(cfg, corpus["train"], corpus["val"], tmp_path / "m")
        assert (tmp_path / "m").read_bytes()[:4] == b"MLPH"
        assert len(report["history"]["train_loss"]) == 5
        assert report["validation"]["f1"] > 0.6

    def test_zero_trees(self, corpus, tmp_path):
        cfg = PipelineConfig.from_dict({"embedding": STUB, "model": {"kind": "gbdt", "params": {"n_trees": 0}}})
        report = run_train(cfg, corpus["train"], corpus["val"], tmp_path / "m")
        # prior is below 0.5, so nothing is predicted positive
        assert report["validation"]["tp"] == report["validation"]["fp"] == 0
        assert report["validation"]["f1"] == 0.0

    def test_stage_name_on_failure(self, tmp_path, corpus):
        bad = tmp_path / "bad.tsv"
        bad.write_text("a\ttext\t7\n", "utf-8")
        with pytest.raises(StageError, match="load") as info:
            run_train(_gbdt_config(), bad, corpus["val"], tmp_path / "m")
        assert isinstance(info.value.cause, DataError)

    def test_deterministic(self, corpus, tmp_path):
        for k in (1, 2):
            run_train(_gbdt_config(), corpus["train"], corpus["val"], tmp_path / f"m{k}", tmp_path / f"r{k}.json")
        assert (tmp_path / "m1").read_bytes() == (tmp_path / "m2").read_bytes()
        assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    d = tmp_path_factory.mktemp("trained")
    cfg = _gbdt_config()
    report = run_train(cfg, corpus["train"], corpus["val"], d / "m")
    return cfg, d / "m", report


class TestPredictEval:
    def test_empty_dataset(self, trained, tmp_path):
        _, model, _ = trained
        out = tmp_path / "p.tsv"
        run_predict(model, [], np.zeros((0, DIM), np.float32), out)
        assert out.read_text() == "id\tprobability\tlabel\n"

    @pytest.mark.parametrize("threshold,label", [(0.0, 1), (1.0, 0)])
    def test_extreme_thresholds(self, trained, corpus, tmp_path, threshold, label):
        cfg, model, _ = trained
        recs = load_dataset(corpus["val"])
        out = tmp_path / "p.tsv"
        proba = run_predict(model, recs, embed_records(recs, cfg).values, out, threshold)
        assert np.all((proba > 0) & (proba < 1))
        preds = read_predictions(out)
        assert list(preds) == [r.id for r in recs]
        assert {lab for _, lab in preds.values()} == {label}

    def test_dimension_mismatch(self, trained, corpus, tmp_path):
        _, model, _ = trained
        recs = load_dataset(corpus["val"])[:3]
        with pytest.raises(DataError, match="dim"):
            run_predict(model, recs, np.zeros((3, 10), np.float32), tmp_path / "p.tsv")

    def test_unknown_magic(self, tmp_path):
        m = tmp_path / "m"
        m.write_bytes(b"ABCD1234")
        with pytest.raises(DataError, match="magic"):
            run_predict(m, [Record("a", "x")], np.zeros((1, 2), np.float32), tmp_path / "p.tsv")

    def test_matches_training_validation(self, trained, corpus, tmp_path):
        cfg, model, report = trained
        recs = load_dataset(corpus["val"])
        out = tmp_path / "p.tsv"
        run_predict(model, recs, embed_records(recs, cfg).values, out, cfg.threshold)
        c = run_eval(out, corpus["val"])
        assert metrics.evaluate([r.label for r in recs], [read_predictions(out)[r.id][1] for r in recs]) \
            == report["validation"]
        assert (c.tp, c.fp, c.fn, c.tn) == tuple(report["validation"][k] for k in ("tp", "fp", "fn", "tn"))


class TestRunEval:
    def _write(self, tmp_path, gold, pred):
        g, p = tmp_path / "gold.tsv", tmp_path / "pred.tsv"
        write_dataset([Record(f"r{i}", "t", y) for i, y in enumerate(gold)], g)
        p.write_text("id\tprobability\tlabel\n" + "".join(f"r{i}\t0.5\t{y}\n" for i, y in enumerate(pred)))
        return p, g

    def test_identical(self, tmp_path):
        p, g = self._write(tmp_path, [1, 0, 1, 0], [1, 0, 1, 0])
        assert metrics.f1(run_eval(p, g)) == 1.0

    def test_flipped(self, tmp_path):
        p, g = self._write(tmp_path, [1, 0, 1, 0], [0, 1, 0, 1])
        c = run_eval(p, g)
        assert metrics.recall(c) == 0.0 and metrics.f1(c) == 0.0

    def test_mixed(self, tmp_path):
        p, g = self._write(tmp_path, [1, 1, 0, 0], [1, 0, 1, 0])
        assert run_eval(p, g) == metrics.Confusion(tp=1, fp=1, fn=1, tn=1)

    def test_missing_prediction(self, tmp_path):
        p, g = self._write(tmp_path, [1, 0, 1], [1, 0])
        with pytest.raises(DataError, match="r2"):
            run_eval(p, g)

    def test_extra_predictions_ignored(self, tmp_path):
        p, g = self._write(tmp_path, [1, 0], [1, 0, 1, 1])
        assert run_eval(p, g).total == 2


class TestCLI:
    def _run(self, argv, capsys):
        code = cli.main([str(a) for a in argv])
        out = capsys.readouterr()
        return code, out.out, out.err

    def test_stagewise_equals_pipeline(self, corpus, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"embedding": STUB, "model": {"kind": "gbdt", "params": {
            "n_trees": 50, "min_data_in_leaf": 5}}}))
        gbdt_cfg = tmp_path / "gbdt.json"
        gbdt_cfg.write_text(json.dumps({"n_trees": 50, "min_data_in_leaf": 5}))
        assert self._run(["train", "--config", cfg_path, "--train", corpus["train"], "--val", corpus["val"],
                          "--out", tmp_path / "a.model"], capsys)[0] == 0
        for split in ("train", "val"):
            assert self._run(["embed-stub", "--in", corpus[split], "--out", tmp_path / f"{split}.clsb",
                              "--dim", DIM, "--seed", 0], capsys)[0] == 0
        assert self._run(["train-gbdt", "--emb", tmp_path / "train.clsb", "--labels", corpus["train"],
                          "--config", gbdt_cfg, "--out", tmp_path / "b.model"], capsys)[0] == 0
        assert (tmp_path / "a.model").read_bytes() == (tmp_path / "b.model").read_bytes()

        assert self._run(["predict", "--model", tmp_path / "b.model", "--data", corpus["val"],
                          "--emb", tmp_path / "val.clsb", "--out", tmp_path / "b.pred"], capsys)[0] == 0
        assert self._run(["predict", "--model", tmp_path / "a.model", "--data", corpus["val"],
                          "--config", cfg_path, "--out", tmp_path / "a.pred"], capsys)[0] == 0
        assert (tmp_path / "a.pred").read_bytes() == (tmp_path / "b.pred").read_bytes()
        code, out, _ = self._run(["eval", "--pred", tmp_path / "a.pred", "--gold", corpus["val"]], capsys)
        assert code == 0 and out.startswith("precision=") and " tn=" in out

    def test_prep_matches_library(self, corpus, tmp_path, capsys):
        assert self._run(["prep", "--in", corpus["val"], "--out", tmp_path / "p.tsv"], capsys)[0] == 0
        for raw, done in zip(load_dataset(corpus["val"]), load_dataset(tmp_path / "p.tsv")):
            assert done.text == " ".join(preprocess(raw.text)) and done.label == raw.label

    def test_embed_stub_matches_library(self, corpus, tmp_path, capsys):
        self._run(["embed-stub", "--in", corpus["val"], "--out", tmp_path / "e.clsb", "--dim", DIM], capsys)
        cfg = PipelineConfig.from_dict({"embedding": STUB})
        assert read_embeddings(tmp_path / "e.clsb") == embed_records(load_dataset(corpus["val"]), cfg)

    def test_synth(self, tmp_path, capsys):
        code, _, _ = self._run(["synth", "--out-dir", tmp_path, "--n-train", 20, "--n-val", 10, "--n-test", 10,
                                "--positive-rate", 0.5], capsys)
        assert code == 0
        assert sum(r.label for r in load_dataset(tmp_path / "train.tsv")) == 10

    def test_train_head(self, corpus, tmp_path, capsys):
        self._run(["embed-stub", "--in", corpus["train"], "--out", tmp_path / "t.clsb", "--dim", DIM], capsys)
        cfg = tmp_path / "h.json"
        cfg.write_text(json.dumps({"hidden": 8, "epochs": 2}))
        code, _, _ = self._run(["train-head", "--emb", tmp_path / "t.clsb", "--labels", corpus["train"],
                                "--config", cfg, "--out", tmp_path / "h.model", "--report", tmp_path / "h.r"],
                               capsys)
        assert code == 0
        assert len(json.loads((tmp_path / "h.r").read_text())["history"]["train_loss"]) == 2

    def test_hpo(self, corpus, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("CLSBOOST_THREADS", "2")
        self._run(["embed-stub", "--in", corpus["val"], "--out", tmp_path / "v.clsb", "--dim", DIM], capsys)
        space = tmp_path / "space.json"
        space.write_text(json.dumps([{"name": "n_trees", "kind": "int", "low": 10, "high": 20}]))
        code, out, _ = self._run(["hpo", "--trials", 3, "--seed", 1, "--space", space,
                                  "--emb", tmp_path / "v.clsb", "--labels", corpus["val"],
                                  "--val-emb", tmp_path / "v.clsb", "--val-labels", corpus["val"],
                                  "--log", tmp_path / "s.ndjson", "--workers", 4], capsys)
        assert code == 0
        assert json.loads(out)["best_trial"] is not None
        assert len((tmp_path / "s.ndjson").read_text().splitlines()) == 3

    def test_exit_code_usage(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["no-such-command"])
        assert info.value.code == 2
        assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "UsageError"

    def test_exit_code_config(self, corpus, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"embedding": STUB, "extra": 1}))
        code, _, err = self._run(["train", "--config", bad, "--train", corpus["train"], "--val", corpus["val"],
                                  "--out", tmp_path / "m"], capsys)
        assert code == 2 and "unknown" in json.loads(err)["message"]

    def test_exit_code_data(self, tmp_path, capsys):
        bad = tmp_path / "bad.tsv"
        bad.write_text("a\tb\t9\n")
        code, _, err = self._run(["embed-stub", "--in", bad, "--out", tmp_path / "e.clsb"], capsys)
        assert code == 3
        assert json.loads(err)["error"] == "DataError"

    def test_exit_code_numeric(self, corpus, tmp_path, capsys):
        # an absurd learning rate makes the head diverge to nan
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"embedding": STUB, "model": {"kind": "mlp", "params": {
            "hidden": 4, "epochs": 2, "lr": 1e300}}}))
        code, _, err = self._run(["train", "--config", cfg, "--train", corpus["train"], "--val", corpus["val"],
                                  "--out", tmp_path / "m"], capsys)
        assert code == 4
        payload = json.loads(err)
        assert payload["error"] == "NumericError" and payload["stage"] == "train"

    def test_bad_thread_cap(self, monkeypatch):
        monkeypatch.setenv("CLSBOOST_THREADS", "zero")
        with pytest.raises(ConfigError):
            cli.thread_cap()
