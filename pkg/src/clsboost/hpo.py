"""Seeded random search with optional median pruning.

Each trial draws its parameters from its own generator seeded with
``(study seed, trial id)``, so a study is reproducible regardless of how
many worker threads run it. Objectives follow a small protocol::

    def objective(trial):
        for step in ...:
            trial.report(value)            # higher is better
            if trial.should_prune():
                raise TrialPruned()
        return final_value                 # maximised
"""
from __future__ import annotations

import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import metrics

__all__ = [
    "ParamSpec",
    "Trial",
    "Study",
    "TrialContext",
    "TrialPruned",
    "sample",
    "run_study",
    "load_space",
    "save_study",
    "load_study",
    "DEFAULT_GBDT_SPACE",
    "gbdt_objective",
]

MIN_COMPLETED_FOR_PRUNING = 5


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    low: float
    high: float
    scale: str = "linear"

    def __post_init__(self):
        if self.kind not in ("int", "float"):
            raise ValueError(f"{self.name}: kind must be 'int' or 'float'")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"{self.name}: scale must be 'linear' or 'log'")
        if not self.low < self.high:
            raise ValueError(f"{self.name}: low must be < high")
        if self.scale == "log" and self.low <= 0:
            raise ValueError(f"{self.name}: log scale needs low > 0")


DEFAULT_GBDT_SPACE = (
    ParamSpec("num_leaves", "int", 4, 128, "log"),
    ParamSpec("learning_rate", "float", 1e-3, 0.3, "log"),
    ParamSpec("n_trees", "int", 50, 500),
    ParamSpec("min_data_in_leaf", "int", 5, 100, "log"),
    ParamSpec("lambda_l2", "float", 1e-3, 10.0, "log"),
    ParamSpec("feature_fraction", "float", 0.5, 1.0),
    ParamSpec("bagging_fraction", "float", 0.5, 1.0),
)


def sample(space: Sequence[ParamSpec], rng: np.random.Generator) -> dict:
    """Draw every parameter independently, uniform on its (log) range.

    Integers are drawn as floats, rounded, then clamped to ``[low, high]``.
    """
    out = {}
    for spec in space:
        if spec.scale == "log":
            value = math.exp(rng.uniform(math.log(spec.low), math.log(spec.high)))
        else:
            value = rng.uniform(spec.low, spec.high)
        if spec.kind == "int":
            value = int(min(max(round(value), math.ceil(spec.low)), math.floor(spec.high)))
        else:
            value = float(min(max(value, spec.low), spec.high))
        out[spec.name] = value
    return out


class TrialPruned(Exception):
    """Raised by an objective to stop a trial the pruner rejected."""


@dataclass
class Trial:
    id: int
    params: dict
    status: str = "running"  # complete | pruned | failed
    checkpoints: list[float] = field(default_factory=list)
    objective: Optional[float] = None
    error: Optional[str] = None

    def to_record(self, study_seed: int) -> dict:
        return {
            "id": self.id,
            "params": self.params,
            "status": self.status,
            "checkpoints": self.checkpoints,
            "objective": self.objective,
            "error": self.error,
            "study_seed": study_seed,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Trial":
        return cls(
            id=int(rec["id"]),
            params=dict(rec["params"]),
            status=rec["status"],
            checkpoints=[float(v) for v in rec["checkpoints"]],
            objective=None if rec["objective"] is None else float(rec["objective"]),
            error=rec.get("error"),
        )


@dataclass
class Study:
    seed: int
    trials: list[Trial] = field(default_factory=list)

    @property
    def best_trial(self) -> Optional[Trial]:
        """Completed trial with the highest objective; the earliest wins ties."""
        best = None
        for t in self.trials:
            if t.status == "complete" and (best is None or t.objective > best.objective):
                best = t
        return best

    @property
    def best_trial_id(self) -> Optional[int]:
        b = self.best_trial
        return None if b is None else b.id

    def completed(self) -> list[Trial]:
        return [t for t in self.trials if t.status == "complete"]


class TrialContext:
    """Handle passed to the objective: parameters, reporting and pruning."""

    def __init__(self, trial: Trial, runner: "_Runner"):
        self._trial = trial
        self._runner = runner

    @property
    def id(self) -> int:
        return self._trial.id

    @property
    def params(self) -> dict:
        return dict(self._trial.params)

    def report(self, value: float) -> None:
        self._trial.checkpoints.append(float(value))

    def should_prune(self) -> bool:
        return self._runner.should_prune(self._trial)


class _Runner:
    def __init__(self, n_trials: int, prune_after: Optional[int]):
        self.trials: list[Optional[Trial]] = [None] * n_trials
        self.done = [False] * n_trials
        self.prune_after = prune_after
        self.cond = threading.Condition()

    def finish(self, trial: Trial) -> None:
        with self.cond:
            self.trials[trial.id] = trial
            self.done[trial.id] = True
            self.cond.notify_all()

    def should_prune(self, trial: Trial) -> bool:
        if self.prune_after is None:
            return False
        step = len(trial.checkpoints)
        if step == 0 or step < self.prune_after:
            return False
        # only lower ids count, and they must all be settled first
        with self.cond:
            self.cond.wait_for(lambda: all(self.done[: trial.id]))
            prior = [t for t in self.trials[: trial.id] if t.status == "complete"]
        if len(prior) < MIN_COMPLETED_FOR_PRUNING:
            return False
        values = [t.checkpoints[step - 1] for t in prior if len(t.checkpoints) >= step]
        if not values:
            return False
        return trial.checkpoints[-1] < float(np.median(values))


def run_study(
    objective: Callable[[TrialContext], float],
    space: Sequence[ParamSpec],
    n_trials: int,
    seed: int = 0,
    prune_after: Optional[int] = None,
    workers: int = 1,
) -> Study:
    """Run ``n_trials`` random-search trials and return the study.

    ``prune_after=None`` disables pruning; ``prune_after=k`` lets the median
    rule stop a trial from its k-th checkpoint on, once at least five
    lower-id trials have completed. An exception (or a non-finite return)
    from the objective marks the trial failed; the study carries on.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if prune_after is not None and prune_after < 1:
        raise ValueError("prune_after must be >= 1")
    space = list(space)
    runner = _Runner(n_trials, prune_after)

    def run_one(trial_id: int) -> None:
        rng = np.random.default_rng([seed, trial_id])
        trial = Trial(trial_id, sample(space, rng))
        try:
            value = objective(TrialContext(trial, runner))
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"objective returned {value}")
            trial.status, trial.objective = "complete", value
        except TrialPruned:
            trial.status = "pruned"
        except Exception as exc:  # noqa: BLE001 - any objective failure is recorded
            trial.status, trial.error = "failed", f"{type(exc).__name__}: {exc}"
        runner.finish(trial)

    if workers <= 1:
        for i in range(n_trials):
            run_one(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_one, range(n_trials)))
    return Study(seed=seed, trials=list(runner.trials))


def load_space(path: "str | Path") -> list[ParamSpec]:
    """Search space JSON: a list of ``{"name", "kind", "low", "high", "scale"?}``."""
    raw = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(raw, list):
        raise ValueError("search space must be a JSON list")
    allowed = {"name", "kind", "low", "high", "scale"}
    specs = []
    for entry in raw:
        unknown = sorted(set(entry) - allowed)
        if unknown:
            raise ValueError(f"unknown search-space keys: {unknown}")
        specs.append(ParamSpec(**entry))
    return specs


def save_study(study: Study, path: "str | Path") -> None:
    """One JSON object per trial, in trial order."""
    lines = [json.dumps(t.to_record(study.seed), sort_keys=True) for t in study.trials]
    Path(path).write_text("".join(line + "\n" for line in lines), "utf-8")


def load_study(path: "str | Path") -> Study:
    records = [json.loads(line) for line in Path(path).read_text("utf-8").splitlines() if line.strip()]
    if not records:
        raise ValueError(f"{path}: empty study log")
    seeds = {r["study_seed"] for r in records}
    if len(seeds) != 1:
        raise ValueError(f"{path}: records disagree on the study seed")
    trials = sorted((Trial.from_record(r) for r in records), key=lambda t: t.id)
    return Study(seed=seeds.pop(), trials=trials)


def gbdt_objective(X, y, X_val, y_val, base_config=None, checkpoint_every: int = 10, threshold: float = 0.5):
    """Objective that trains a booster and returns validation F1.

    Every ``checkpoint_every`` boosting iterations the negated validation
    log-loss is reported (so that higher is better for the pruner).
    """
    from . import gbdt

    base_config = base_config or gbdt.GBDTConfig()
    y_val = np.asarray(y_val)

    def objective(trial: TrialContext) -> float:
        config = replace(base_config, **trial.params)

        def on_iteration(it: int, val_loss: float) -> None:
            if it % checkpoint_every == 0:
                trial.report(-val_loss)
                if trial.should_prune():
                    raise TrialPruned()

        model = gbdt.train(X, y, config, X_val, y_val, callback=on_iteration)
        pred = (gbdt.predict_proba(model, X_val) >= threshold).astype(np.int64)
        return metrics.f1(metrics.confusion(y_val, pred))

    return objective
