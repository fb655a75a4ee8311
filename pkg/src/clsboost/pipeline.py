"""End-to-end orchestration: datasets, synthetic corpora, train / predict / eval."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import gbdt, metrics, mlphead
from .embedio import (
    DimensionMismatchError,
    EmbeddingFormatError,
    EmbeddingMatrix,
    concat_layers,
    mean_layers,
    read_embeddings,
    stub_encode_many,
)
from .textprep import Record, load_stoplist, preprocess

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "StageError",
    "PipelineConfig",
    "SyntheticSpec",
    "load_dataset",
    "write_dataset",
    "make_synthetic",
    "embed_records",
    "run_train",
    "run_predict",
    "run_eval",
    "predict_model_file",
    "read_predictions",
    "labels_of",
]


class ConfigError(ValueError):
    """Invalid or unknown configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Malformed input data or incompatible dimensions (exit code 3)."""


class NumericError(ArithmeticError):
    """Non-finite values produced during training or prediction (exit code 4)."""


class StageError(RuntimeError):
    """Wraps the failure of one pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# datasets


def load_dataset(path: "str | Path", has_header: bool = False) -> list[Record]:
    """Read ``id<TAB>text[<TAB>label]`` lines; labels must be exactly 0 or 1."""
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if has_header and lineno == 1:
                continue
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise DataError(f"{path}:{lineno}: expected 2 or 3 tab-separated columns, got {len(parts)}")
            if not parts[0]:
                raise DataError(f"{path}:{lineno}: empty id")
            label = None
            if len(parts) == 3:
                if parts[2] not in ("0", "1"):
                    raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {parts[2]!r}")
                label = int(parts[2])
            records.append(Record(parts[0], parts[1], label))
    return records


def write_dataset(records: Sequence[Record], path: "str | Path") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for r in records:
            text = " ".join(r.text.split())  # no tabs or newlines inside a field
            if r.label is None:
                fh.write(f"{r.id}\t{text}\n")
            else:
                fh.write(f"{r.id}\t{text}\t{r.label}\n")


def labels_of(records: Sequence[Record]) -> np.ndarray:
    missing = [r.id for r in records if r.label is None]
    if missing:
        raise DataError(f"{len(missing)} records have no label (first: {missing[0]!r})")
    return np.array([r.label for r in records], dtype=np.int64)


# ---------------------------------------------------------------------------
# synthetic corpus

SIGNAL_PHRASES = (
    ("tested", "positive", "covid"),
    ("diagnosed", "covid", "yesterday"),
    ("covid", "test", "positive"),
    ("got", "covid", "today"),
)
CUE_WORDS = ("friend", "rumor", "news", "cousin", "heard", "coworker")
_EMOJI = ("\U0001F637", "\U0001F912", "\U0001F622", "\U0001F602", "❤️", "\U0001F64F")
_PUNCT = ("!", "!!", ".", "...", "?", ",")


def _noise_vocabulary(size: int) -> tuple[str, ...]:
    # fixed pseudo-words so the vocabulary never depends on the corpus seed
    from .textprep import default_stoplist

    rng = np.random.default_rng(20230)
    onsets = list("bcdfghjklmnprstvwz") + ["ch", "sh", "th", "br", "st", "pl"]
    vowels = list("aeiou") + ["ai", "ou", "ee"]
    reserved = set(default_stoplist()) | {w for p in SIGNAL_PHRASES for w in p} | set(CUE_WORDS)
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < size:
        n_syl = int(rng.integers(2, 4))
        w = "".join(onsets[rng.integers(len(onsets))] + vowels[rng.integers(len(vowels))] for _ in range(n_syl))
        if w not in seen and w not in reserved:
            seen.add(w)
            words.append(w)
    return tuple(words)


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs of the synthetic self-report corpus.

    Positives carry a signal phrase with probability ``p_signal_pos``;
    negatives carry one with probability ``p_signal_neg``, always preceded by
    a third-party cue word ("friend tested positive"). Cue words never occur
    otherwise, so only signal-free positives are ambiguous.
    """

    n_train: int = 7600
    n_val: int = 400
    n_test: int = 10000
    positive_rate: float = 1334 / 7600
    p_signal_pos: float = 0.95
    p_signal_neg: float = 0.05
    noise_vocab_size: int = 400
    min_noise: int = 4
    max_noise: int = 10
    decorate: bool = True
    seed: int = 0

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_test) <= 0:
            raise ConfigError("split sizes must be positive")
        if not 0 < self.positive_rate < 1:
            raise ConfigError("positive_rate must lie in (0, 1)")
        if not 1 <= self.min_noise <= self.max_noise:
            raise ConfigError("need 1 <= min_noise <= max_noise")

    def positives(self, n: int) -> int:
        return int(round(n * self.positive_rate))


def _synth_split(spec: SyntheticSpec, n: int, prefix: str, vocab, weights, rng) -> list[Record]:
    labels = np.zeros(n, dtype=np.int64)
    labels[: spec.positives(n)] = 1
    rng.shuffle(labels)
    records = []
    for i, y in enumerate(labels):
        k = int(rng.integers(spec.min_noise, spec.max_noise + 1))
        tokens = [vocab[j] for j in rng.choice(len(vocab), size=k, p=weights)]
        if y == 1 and rng.random() < spec.p_signal_pos:
            phrase = list(SIGNAL_PHRASES[rng.integers(len(SIGNAL_PHRASES))])
        elif y == 0 and rng.random() < spec.p_signal_neg:
            phrase = [CUE_WORDS[rng.integers(len(CUE_WORDS))]] + list(SIGNAL_PHRASES[rng.integers(len(SIGNAL_PHRASES))])
        else:
            phrase = []
        pos = int(rng.integers(0, k + 1))
        tokens[pos:pos] = phrase
        text = " ".join(tokens)
        if spec.decorate:
            text = _decorate(text, vocab, rng)
        records.append(Record(f"{prefix}{i:06d}", text, int(y)))
    return records


def _decorate(text: str, vocab, rng) -> str:
    # surface noise that the cleaning stage is expected to strip
    if rng.random() < 0.3:
        text = text[:1].upper() + text[1:]
    if rng.random() < 0.3:
        text += _PUNCT[rng.integers(len(_PUNCT))]
    if rng.random() < 0.25:
        text = f"@{vocab[rng.integers(len(vocab))]} " + text
    if rng.random() < 0.25:
        text += f" #{vocab[rng.integers(len(vocab))]}"
    if rng.random() < 0.25:
        text += " " + _EMOJI[rng.integers(len(_EMOJI))]
    if rng.random() < 0.2:
        text += f" https://t.co/{rng.integers(1 << 30):x}"
    return text


def make_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> tuple[list[Record], list[Record], list[Record]]:
    """Deterministic (train, val, test) corpora with exact class counts per split."""
    vocab = _noise_vocabulary(spec.noise_vocab_size)
    ranks = np.arange(1, len(vocab) + 1)
    weights = 1.0 / (ranks + 10.0)
    weights /= weights.sum()
    rng = np.random.default_rng(spec.seed)
    return (
        _synth_split(spec, spec.n_train, "train", vocab, weights, rng),
        _synth_split(spec, spec.n_val, "val", vocab, weights, rng),
        _synth_split(spec, spec.n_test, "test", vocab, weights, rng),
    )


# ---------------------------------------------------------------------------
# configuration

_MODEL_KINDS = ("mlp", "gbdt")


def _strict(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a JSON object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


@dataclass(frozen=True)
class PipelineConfig:
    """One JSON document describing a training run.

    ``embedding`` holds exactly one source: ``{"stub": {"dim", "seed"}}`` or
    ``{"file": {"train": [...], "val": [...], "pooling": "concat"|"mean"}}``
    where each list names one ``CLSB`` file per encoder layer.
    """

    embedding: dict
    model_kind: str = "gbdt"
    model_params: dict = field(default_factory=dict)
    clean: bool = True
    stopwords: bool = True
    stoplist: Optional[str] = None
    threshold: float = 0.5
    standardize: bool = False
    seed: int = 0

    def __post_init__(self):
        emb = self.embedding
        _strict(emb, {"stub", "file"}, "embedding")
        if len(emb) != 1:
            raise ConfigError("embedding: exactly one of 'stub' or 'file' is required")
        if "stub" in emb:
            _strict(emb["stub"], {"dim", "seed"}, "embedding.stub")
            if int(emb["stub"].get("dim", 256)) < 1:
                raise ConfigError("embedding.stub.dim must be >= 1")
        else:
            _strict(emb["file"], {"train", "val", "pooling"}, "embedding.file")
            if emb["file"].get("pooling", "concat") not in ("concat", "mean"):
                raise ConfigError("embedding.file.pooling must be 'concat' or 'mean'")
        if self.model_kind not in _MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {_MODEL_KINDS}")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        try:
            self.model_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model.params: {exc}") from exc

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        _strict(d, {"embedding", "model", "clean", "stopwords", "stoplist", "threshold", "standardize", "seed"}, "config")
        if "embedding" not in d:
            raise ConfigError("config: 'embedding' is required")
        model = d.get("model", {"kind": "gbdt"})
        _strict(model, {"kind", "params"}, "model")
        return cls(
            embedding=d["embedding"],
            model_kind=model.get("kind", "gbdt"),
            model_params=dict(model.get("params", {})),
            clean=bool(d.get("clean", True)),
            stopwords=bool(d.get("stopwords", True)),
            stoplist=d.get("stoplist"),
            threshold=float(d.get("threshold", 0.5)),
            standardize=bool(d.get("standardize", False)),
            seed=int(d.get("seed", 0)),
        )

    @classmethod
    def load(cls, path: "str | Path") -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "embedding": self.embedding,
            "model": {"kind": self.model_kind, "params": self.model_params},
            "clean": self.clean,
            "stopwords": self.stopwords,
            "stoplist": self.stoplist,
            "threshold": self.threshold,
            "standardize": self.standardize,
            "seed": self.seed,
        }

    def model_config(self):
        params = dict(self.model_params)
        params.setdefault("seed", self.seed)
        if self.model_kind == "gbdt":
            return gbdt.GBDTConfig.from_dict(params)
        return mlp_config_from_dict({**params, "threshold": params.get("threshold", self.threshold)})


def mlp_config_from_dict(d: dict) -> mlphead.MLPConfig:
    known = {f.name for f in fields(mlphead.MLPConfig)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ValueError(f"unknown MLP config keys: {unknown}")
    return mlphead.MLPConfig(**d)


# ---------------------------------------------------------------------------
# stages


def _tokens(records: Sequence[Record], config: PipelineConfig) -> list[list[str]]:
    stoplist = load_stoplist(config.stoplist) if config.stoplist else None
    return [preprocess(r.text, clean=config.clean, stopwords=config.stopwords, stoplist=stoplist) for r in records]


def embed_records(records: Sequence[Record], config: PipelineConfig, split: Optional[str] = None) -> EmbeddingMatrix:
    """Embed ``records`` with the configured source.

    File sources need ``split`` (``"train"`` or ``"val"``) to pick the layer files.
    """
    if "stub" in config.embedding:
        stub = config.embedding["stub"]
        dim = int(stub.get("dim", 256))
        if not records:
            return EmbeddingMatrix(np.zeros((0, dim), dtype=np.float32))
        return stub_encode_many(_tokens(records, config), dim, int(stub.get("seed", config.seed)))
    src = config.embedding["file"]
    if split not in ("train", "val") or split not in src:
        raise ConfigError(f"file embedding source has no '{split}' entry")
    paths = src[split]
    paths = [paths] if isinstance(paths, str) else list(paths)
    layers = [read_embeddings(p) for p in paths]
    m = mean_layers(layers) if src.get("pooling", "concat") == "mean" else concat_layers(layers)
    if m.n_rows != len(records):
        raise DataError(f"{split} embeddings have {m.n_rows} rows for {len(records)} records")
    return m


def _scaler(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean.astype(np.float32), scale.astype(np.float32)


def _stage(name: str, fn, *args, **kwargs):
    """Run one stage, re-raising any failure as a StageError that names it."""
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (ConfigError, DataError, NumericError) as exc:
        raise StageError(name, exc) from exc
    except FloatingPointError as exc:
        raise StageError(name, NumericError(str(exc))) from exc
    except (ValueError, OSError) as exc:
        raise StageError(name, DataError(str(exc))) from exc


def _check_finite(name: str, values) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericError(f"{name}: non-finite values")


def run_train(
    config: PipelineConfig,
    train_path: "str | Path",
    val_path: "str | Path",
    model_out: "str | Path",
    report_out: Optional["str | Path"] = None,
    has_header: bool = False,
) -> dict:
    """clean -> tokenize -> embed -> train -> validate; writes the model and a JSON report.

    Validation metrics in the report are computed from the model as written
    to disk, so they agree with a later ``run_predict`` on the same data.
    """
    train_recs = _stage("load", load_dataset, train_path, has_header)
    val_recs = _stage("load", load_dataset, val_path, has_header)
    y = _stage("load", labels_of, train_recs)
    yv = _stage("load", labels_of, val_recs)
    if not train_recs:
        raise StageError("load", DataError("training set is empty"))
    X = _stage("embed", embed_records, train_recs, config, "train").values
    Xv = _stage("embed", embed_records, val_recs, config, "val").values
    if Xv.shape[1] != X.shape[1]:
        raise StageError("embed", DataError(f"validation dim {Xv.shape[1]} differs from training dim {X.shape[1]}"))

    model_cfg = _stage("config", config.model_config)
    if config.model_kind == "gbdt":
        # quantile bins make per-feature standardisation a no-op for the booster
        model = _stage("train", gbdt.train, X, y, model_cfg, Xv, yv)
        for tree in model.trees:
            _stage("train", _check_finite, "leaf values", tree.value)
        gbdt.save_model(model, model_out)
        history = {
            "train_loss": model.train_loss,
            "val_loss": model.val_loss,
            "best_iteration": model.best_iteration,
            "n_trees": len(model.trees),
        }
    else:
        scaler = _scaler(X) if config.standardize else None
        Xs, Xvs = (X, Xv) if scaler is None else ((X - scaler[0]) / scaler[1], (Xv - scaler[0]) / scaler[1])
        params, hist = _stage("train", mlphead.train_head, Xs, y, Xvs, yv, model_cfg)
        _stage("train", _check_finite, "head parameters", np.concatenate([a.ravel() for a in params.arrays()]))
        mlphead.save_head(params, model_out, scaler)
        history = hist.as_dict()

    proba = _stage("validate", predict_model_file, model_out, Xv)
    pred = (proba >= config.threshold).astype(np.int64)
    report = {
        "config": config.to_dict(),
        "model_kind": config.model_kind,
        "model_config": asdict(model_cfg),
        "n_train": len(train_recs),
        "n_val": len(val_recs),
        "dim": int(X.shape[1]),
        "history": history,
        "validation": metrics.evaluate(yv, pred),
    }
    if report_out is not None:
        _stage("write", Path(report_out).write_text, json.dumps(report, indent=2, sort_keys=True) + "\n", "utf-8")
    return report


def model_magic(path: "str | Path") -> bytes:
    with open(path, "rb") as fh:
        return fh.read(4)


def predict_model_file(model_path: "str | Path", X) -> np.ndarray:
    """Probabilities from a ``GBDT`` or ``MLPH`` model file (dispatch on magic)."""
    X = np.asarray(X, dtype=np.float32)
    magic = model_magic(model_path)
    if magic == gbdt.io.MAGIC:
        model = gbdt.load_model(model_path)
        if X.shape[0] and X.shape[1] != model.n_features:
            raise DataError(f"model expects dim {model.n_features}, data has dim {X.shape[1]}")
        if X.shape[0] == 0:
            return np.zeros(0)
        proba = gbdt.predict_proba(model, X)
    elif magic == mlphead.MAGIC:
        params, scaler = mlphead.load_head(model_path)
        if X.shape[0] and X.shape[1] != params.d_in:
            raise DataError(f"model expects dim {params.d_in}, data has dim {X.shape[1]}")
        if X.shape[0] == 0:
            return np.zeros(0)
        Xd = X.astype(np.float64)
        if scaler is not None:
            Xd = (Xd - scaler[0]) / scaler[1]
        proba = mlphead.predict_proba(params, Xd)
    else:
        raise DataError(f"{model_path}: unknown model magic {magic!r}")
    _check_finite("predict", proba)
    return proba


def run_predict(
    model_path: "str | Path",
    records: Sequence[Record],
    X,
    out_path: "str | Path",
    threshold: float = 0.5,
) -> np.ndarray:
    """Write ``id<TAB>probability<TAB>label`` (with header), one line per record in input order."""
    if not 0 <= threshold <= 1:
        raise ConfigError("threshold must lie in [0, 1]")
    X = np.asarray(X, dtype=np.float32)
    if X.shape[0] != len(records):
        raise DataError(f"{X.shape[0]} embedding rows for {len(records)} records")
    proba = predict_model_file(model_path, X)
    labels = (proba >= threshold).astype(np.int64)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("id\tprobability\tlabel\n")
        for r, p, lab in zip(records, proba, labels):
            fh.write(f"{r.id}\t{float(p)!r}\t{lab}\n")
    return proba


def read_predictions(path: "str | Path") -> dict[str, tuple[float, int]]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if lineno == 1 and line.startswith("id\t"):
                continue
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[2] not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: expected id<TAB>probability<TAB>0|1")
            try:
                prob = float(parts[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad probability {parts[1]!r}") from exc
            out[parts[0]] = (prob, int(parts[2]))
    return out


def run_eval(pred_path: "str | Path", gold_path: "str | Path", has_header: bool = False) -> metrics.Confusion:
    """Join predictions to gold labels on id and compute the confusion counts."""
    preds = read_predictions(pred_path)
    gold = load_dataset(gold_path, has_header)
    y_true, y_pred = [], []
    for r in gold:
        if r.label is None:
            raise DataError(f"gold record {r.id!r} has no label")
        if r.id not in preds:
            raise DataError(f"no prediction for gold id {r.id!r}")
        y_true.append(r.label)
        y_pred.append(preds[r.id][1])
    return metrics.confusion(y_true, y_pred)
