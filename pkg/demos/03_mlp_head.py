"""A one-hidden-layer classifier trained with Adam, checked against finite differences."""
from __future__ import annotations

import numpy as np

from clsboost import metrics
from clsboost.mlphead import MLPConfig, backward, init_params, mean_loss, predict_proba, train_head

rng = np.random.default_rng(0)

# analytic gradient vs central differences on a small network
p = init_params(5, 3, rng)
X = rng.normal(size=(16, 5))
y = rng.integers(0, 2, 16).astype(float)
g = backward(p, X, y)
h = 1e-5
W = p.W1
i, j = 2, 1
W[i, j] += h
up = mean_loss(p, X, y)
W[i, j] -= 2 * h
down = mean_loss(p, X, y)
W[i, j] += h
print(f"dL/dW1[{i},{j}] analytic {g.W1[i, j]:.8f}  numeric {(up - down) / (2 * h):.8f}")

# two Gaussian blobs
n = 400
labels = np.arange(n) % 2
feats = rng.normal(size=(n, 4)) + np.where(labels[:, None] == 1, 1.0, -1.0)
params, hist = train_head(feats[:300], labels[:300], feats[300:], labels[300:],
                          MLPConfig(hidden=16, epochs=15, lr=1e-2))
print("train loss per epoch:", [round(v, 4) for v in hist.train_loss])
print("best epoch:", hist.best_epoch, "val F1:", round(hist.val_f1[hist.best_epoch], 3))
pred = (predict_proba(params, feats[300:]) >= 0.5).astype(int)
print(metrics.format_report(metrics.confusion(labels[300:], pred)))
