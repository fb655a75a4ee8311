import numpy as np

# keeps probabilities strictly inside (0, 1) even for huge |logit|
_P_MIN = np.finfo(np.float64).tiny
_P_MAX = 1.0 - 2.0**-53


def sigmoid(z):
    """Overflow-free logistic function, clipped to the open unit interval."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    out = np.clip(out, _P_MIN, _P_MAX)
    return float(out) if out.ndim == 0 else out
