"""Command-line interface.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric
failure. Errors are printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import gbdt, hpo, metrics, mlphead
from .embedio import (
    DimensionMismatchError,
    EmbeddingFormatError,
    read_embeddings,
    stub_encode_many,
    write_embeddings,
)
from .pipeline import (
    ConfigError,
    DataError,
    NumericError,
    PipelineConfig,
    StageError,
    SyntheticSpec,
    embed_records,
    labels_of,
    load_dataset,
    make_synthetic,
    mlp_config_from_dict,
    run_eval,
    run_predict,
    run_train,
    write_dataset,
)
from .embedio import EmbeddingMatrix
from .textprep import Record, load_stoplist, preprocess

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message)
        sys.exit(EXIT_USAGE)


def _emit_error(kind: str, message: str, stage: str | None = None) -> None:
    payload = {"error": kind, "message": message}
    if stage:
        payload["stage"] = stage
    print(json.dumps(payload), file=sys.stderr)


def thread_cap() -> int:
    """Worker cap from ``CLSBOOST_THREADS`` (default 1)."""
    raw = os.environ.get("CLSBOOST_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CLSBOOST_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("CLSBOOST_THREADS must be >= 1")
    return n


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def _stoplist(args):
    return load_stoplist(args.stoplist) if args.stoplist else None


def _load_xy(emb_path, labels_path, header):
    X = read_embeddings(emb_path).values
    y = labels_of(load_dataset(labels_path, header))
    if X.shape[0] != y.shape[0]:
        raise DataError(f"{emb_path} has {X.shape[0]} rows but {labels_path} has {y.shape[0]} labels")
    return X, y


def _write_report(path, report: dict) -> None:
    if path:
        Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", "utf-8")


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> None:
    spec = SyntheticSpec(
        n_train=args.n_train, n_val=args.n_val, n_test=args.n_test,
        positive_rate=args.positive_rate, seed=args.seed, decorate=not args.no_decorate,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, records in zip(("train", "val", "test"), make_synthetic(spec)):
        write_dataset(records, out / f"{name}.tsv")


def cmd_prep(args) -> None:
    records = load_dataset(args.input, args.header)
    stoplist = _stoplist(args)
    out = [
        Record(r.id, " ".join(preprocess(r.text, clean=not args.no_clean,
                                         stopwords=not args.no_stopwords, stoplist=stoplist)), r.label)
        for r in records
    ]
    write_dataset(out, args.out)


def cmd_embed_stub(args) -> None:
    records = load_dataset(args.input, args.header)
    stoplist = _stoplist(args)
    tokens = [preprocess(r.text, clean=not args.no_clean, stopwords=not args.no_stopwords, stoplist=stoplist)
              for r in records]
    if args.dim < 1:
        raise ConfigError("--dim must be >= 1")
    if tokens:
        m = stub_encode_many(tokens, args.dim, args.seed)
    else:
        m = EmbeddingMatrix(np.zeros((0, args.dim), dtype=np.float32))
    write_embeddings(m, args.out)


def _val_pair(args):
    if (args.val_emb is None) != (args.val_labels is None):
        raise ConfigError("--val-emb and --val-labels must be given together")
    if args.val_emb is None:
        return None, None
    return _load_xy(args.val_emb, args.val_labels, args.header)


def cmd_train_gbdt(args) -> None:
    raw = _read_json(args.config) if args.config else {}
    try:
        config = gbdt.GBDTConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    X, y = _load_xy(args.emb, args.labels, args.header)
    Xv, yv = _val_pair(args)
    model = gbdt.train(X, y, config, Xv, yv)
    gbdt.save_model(model, args.out)
    report = {"config": config.to_dict(), "train_loss": model.train_loss, "val_loss": model.val_loss,
              "n_trees": len(model.trees), "best_iteration": model.best_iteration}
    if Xv is not None:
        pred = (gbdt.predict_proba(model, Xv) >= args.threshold).astype(np.int64)
        report["validation"] = metrics.evaluate(yv, pred)
    _write_report(args.report, report)


def cmd_train_head(args) -> None:
    raw = _read_json(args.config) if args.config else {}
    try:
        config = mlp_config_from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    X, y = _load_xy(args.emb, args.labels, args.header)
    Xv, yv = _val_pair(args)
    scaler = None
    if args.standardize:
        mean, scale = X.mean(axis=0), X.std(axis=0)
        scale[scale == 0] = 1.0
        scaler = (mean.astype(np.float32), scale.astype(np.float32))
        X = (X - scaler[0]) / scaler[1]
        if Xv is not None:
            Xv = (Xv - scaler[0]) / scaler[1]
    params, history = mlphead.train_head(X, y, Xv, yv, config)
    mlphead.save_head(params, args.out, scaler)
    report = {"config": asdict(config), "history": history.as_dict()}
    if Xv is not None:
        pred = (mlphead.predict_proba(params, Xv) >= args.threshold).astype(np.int64)
        report["validation"] = metrics.evaluate(yv, pred)
    _write_report(args.report, report)


def cmd_train(args) -> None:
    config = PipelineConfig.load(args.config)
    report = run_train(config, args.train, args.val, args.out, args.report, args.header)
    print(metrics.format_report(metrics.Confusion(**{k: report["validation"][k] for k in ("tp", "fp", "fn", "tn")})))


def cmd_hpo(args) -> None:
    space = hpo.load_space(args.space) if args.space else list(hpo.DEFAULT_GBDT_SPACE)
    base = gbdt.GBDTConfig.from_dict(_read_json(args.config)) if args.config else gbdt.GBDTConfig()
    X, y = _load_xy(args.emb, args.labels, args.header)
    Xv, yv = _load_xy(args.val_emb, args.val_labels, args.header)
    objective = hpo.gbdt_objective(X, y, Xv, yv, base, checkpoint_every=args.checkpoint_every,
                                   threshold=args.threshold)
    workers = min(args.workers, thread_cap()) if args.workers else thread_cap()
    prune_after = None if args.no_pruning else args.prune_after
    study = hpo.run_study(objective, space, args.trials, args.seed, prune_after=prune_after, workers=workers)
    if args.log:
        hpo.save_study(study, args.log)
    best = study.best_trial
    print(json.dumps({"best_trial": None if best is None else best.id,
                      "best_f1": None if best is None else best.objective,
                      "best_params": None if best is None else best.params}, sort_keys=True))


def cmd_predict(args) -> None:
    records = load_dataset(args.data, args.header)
    if (args.emb is None) == (args.config is None):
        raise ConfigError("give exactly one of --emb or --config")
    if args.emb is not None:
        X = read_embeddings(args.emb).values
    else:
        config = PipelineConfig.load(args.config)
        if "stub" not in config.embedding:
            raise ConfigError("--config for predict must use a stub embedding source; pass --emb otherwise")
        X = embed_records(records, config).values
    run_predict(args.model, records, X, args.out, args.threshold)


def cmd_eval(args) -> None:
    print(metrics.format_report(run_eval(args.pred, args.gold, args.header)))


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clsboost", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def text_opts(sp):
        sp.add_argument("--header", action="store_true", help="skip the first line of TSV inputs")
        sp.add_argument("--no-clean", action="store_true")
        sp.add_argument("--no-stopwords", action="store_true")
        sp.add_argument("--stoplist", help="stoplist file (one word per line)")

    sp = sub.add_parser("synth", help="write a synthetic train/val/test corpus")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-train", type=int, default=SyntheticSpec.n_train)
    sp.add_argument("--n-val", type=int, default=SyntheticSpec.n_val)
    sp.add_argument("--n-test", type=int, default=SyntheticSpec.n_test)
    sp.add_argument("--positive-rate", type=float, default=SyntheticSpec.positive_rate)
    sp.add_argument("--no-decorate", action="store_true", help="omit URLs, emoji, mentions and tags")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("prep", help="clean, tokenize and drop stopwords")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    text_opts(sp)
    sp.set_defaults(func=cmd_prep)

    sp = sub.add_parser("embed-stub", help="hashed n-gram stub embeddings")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--dim", type=int, default=256)
    sp.add_argument("--seed", type=int, default=0)
    text_opts(sp)
    sp.set_defaults(func=cmd_embed_stub)

    for name, func, helptext in (
        ("train-gbdt", cmd_train_gbdt, "train the boosted tree classifier"),
        ("train-head", cmd_train_head, "train the two-layer MLP head"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--emb", required=True)
        sp.add_argument("--labels", required=True, help="dataset TSV aligned with --emb rows")
        sp.add_argument("--val-emb")
        sp.add_argument("--val-labels")
        sp.add_argument("--config", help="JSON object of model parameters")
        sp.add_argument("--out", required=True)
        sp.add_argument("--report")
        sp.add_argument("--threshold", type=float, default=0.5)
        sp.add_argument("--header", action="store_true")
        if name == "train-head":
            sp.add_argument("--standardize", action="store_true")
        sp.set_defaults(func=func)

    sp = sub.add_parser("train", help="full pipeline from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--train", required=True)
    sp.add_argument("--val", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")
    sp.add_argument("--header", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("hpo", help="random search over booster hyperparameters")
    sp.add_argument("--trials", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--space", help="search space JSON (default: built-in booster space)")
    sp.add_argument("--config", help="base booster config JSON")
    sp.add_argument("--emb", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--val-emb", required=True)
    sp.add_argument("--val-labels", required=True)
    sp.add_argument("--log", help="write the study as newline-delimited JSON")
    sp.add_argument("--prune-after", type=int, default=1)
    sp.add_argument("--no-pruning", action="store_true")
    sp.add_argument("--checkpoint-every", type=int, default=10)
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--workers", type=int, default=0, help="0 = CLSBOOST_THREADS")
    sp.add_argument("--header", action="store_true")
    sp.set_defaults(func=cmd_hpo)

    sp = sub.add_parser("predict", help="write id/probability/label predictions")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--emb", help="CLSB embeddings aligned with --data")
    sp.add_argument("--config", help="pipeline config with a stub embedding source")
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--out", required=True)
    sp.add_argument("--header", action="store_true")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("eval", help="precision/recall/F1 of predictions against gold labels")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gold", required=True)
    sp.add_argument("--header", action="store_true", help="gold file has a header line")
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        _emit_error("ConfigError", str(exc))
        return EXIT_USAGE
    except StageError as exc:
        _emit_error(type(exc.cause).__name__, str(exc), exc.stage)
        if isinstance(exc.cause, ConfigError):
            return EXIT_USAGE
        return EXIT_NUMERIC if isinstance(exc.cause, NumericError) else EXIT_DATA
    except (DataError, EmbeddingFormatError, DimensionMismatchError, gbdt.ModelFormatError,
            FileNotFoundError, UnicodeDecodeError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_NUMERIC
    except ValueError as exc:
        # remaining ValueErrors come from parameter validation
        _emit_error("ConfigError", str(exc))
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
