"""Log-log power-law fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    amplitude: float
    r_squared: float
    stderr: float


def loglog_fit(x, y) -> PowerLawFit:
    """Least-squares fit of ``log|y| = log A + p log|x|``."""
    x = np.abs(np.asarray(x, dtype=float))
    y = np.abs(np.asarray(y, dtype=float))
    if x.size < 2:
        raise ValueError("need at least two points for a power-law fit")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs strictly positive data")
    if x.size == 2:
        p = float(np.diff(np.log(y))[0] / np.diff(np.log(x))[0])
        return PowerLawFit(p, float(y[0] / x[0] ** p), 1.0, 0.0)
    res = stats.linregress(np.log(x), np.log(y))
    return PowerLawFit(float(res.slope), float(np.exp(res.intercept)),
                       float(res.rvalue ** 2), float(res.stderr))
