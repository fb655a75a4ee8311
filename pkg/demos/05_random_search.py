"""Seeded random search with median pruning and a replayable log."""
from __future__ import annotations

import tempfile
from pathlib import Path

from clsboost.hpo import ParamSpec, TrialPruned, load_study, run_study, save_study

space = [ParamSpec("x", "float", 0.0, 1.0), ParamSpec("k", "int", 1, 64, "log")]


def objective(trial):
    final = 1.0 - (trial.params["x"] - 0.3) ** 2 - 0.001 * abs(trial.params["k"] - 8)
    # intermediate values, higher is better
    for step in range(1, 6):
        trial.report(final * step / 5)
        if trial.should_prune():
            raise TrialPruned()
    return final


study = run_study(objective, space, 100, seed=0, prune_after=2, workers=4)
counts = {s: sum(t.status == s for t in study.trials) for s in ("complete", "pruned", "failed")}
print("statuses:", counts)
best = study.best_trial
print(f"best trial {best.id}: x={best.params['x']:.4f} k={best.params['k']} objective={best.objective:.5f}")

# the same seed gives the same study whatever the worker count
assert run_study(objective, space, 100, seed=0, prune_after=2, workers=1) == study

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "study.ndjson"
    save_study(study, path)
    print(path.read_text().splitlines()[0])
    assert load_study(path) == study
    print("log replays to an identical study")
