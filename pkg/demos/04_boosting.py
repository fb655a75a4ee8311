"""Histogram boosting: binning, one stump, then a full ensemble."""
from __future__ import annotations

import numpy as np

from clsboost import metrics
from clsboost.gbdt import GBDTConfig, fit_bins, grow_tree, logistic_grad_hess, predict_proba, train

rng = np.random.default_rng(1)

# quantile bins: edges are sample values, so monotone maps keep the same partition
col = np.arange(1, 9, dtype=np.float32)[:, None]
mapper = fit_bins(col, max_bins=4)
print("edges for 1..8 with 4 bins:", mapper.thresholds[0])
print("bin codes:", mapper.transform(col).ravel())

# one split from the second-order gain
X = np.array([[1.0], [2.0], [3.0], [4.0]], np.float32)
yy = np.array([0, 0, 1, 1])
g, h = logistic_grad_hess(yy, np.zeros(4))
m = fit_bins(X)
stump = grow_tree(m.transform(X), g, h, GBDTConfig(num_leaves=2, min_data_in_leaf=1))
print("stump splits feature", stump.feature[0], "at value", m.threshold_value(0, stump.threshold_bin[0]),
      "leaf values", stump.value[1], stump.value[2])

# an ensemble with bagging, feature sampling and early stopping
n, d = 2000, 10
y = rng.integers(0, 2, n)
Xd = (rng.normal(size=(n, d)) + 0.6 * (2 * y[:, None] - 1)).astype(np.float32)
cfg = GBDTConfig(n_trees=200, num_leaves=15, feature_fraction=0.8, bagging_fraction=0.8,
                 early_stopping_rounds=20, seed=0)
model = train(Xd[:1500], y[:1500], cfg, Xd[1500:1800], y[1500:1800])
print("trees kept:", len(model.trees), "best iteration:", model.best_iteration)
pred = (predict_proba(model, Xd[1800:]) >= 0.5).astype(int)
print(metrics.format_report(metrics.confusion(y[1800:], pred)))

# cubing a feature leaves predictions unchanged
Xc = Xd.copy()
Xc[:, 3] **= 3
same = predict_proba(train(Xc[:1500], y[:1500], GBDTConfig(n_trees=30)), Xc[1800:]).tobytes() == \
    predict_proba(train(Xd[:1500], y[:1500], GBDTConfig(n_trees=30)), Xd[1800:]).tobytes()
print("invariant under x -> x^3:", same)
