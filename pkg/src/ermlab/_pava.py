"""Pool-adjacent-violators core, shared by the isotonic fitter and the
localized-sup solvers."""

from __future__ import annotations

import numpy as np


def pava(y: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Weighted least-squares projection of y onto the nondecreasing cone.

    Stack-based pooling; O(n). Returns the unique minimizer of
    sum_i w_i (y_i - v_i)^2 over nondecreasing v.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    # blocks as (weighted mean, weight, count)
    means = np.empty(n)
    wts = np.empty(n)
    counts = np.empty(n, dtype=np.intp)
    top = 0
    for i in range(n):
        means[top] = y[i]
        wts[top] = w[i]
        counts[top] = 1
        top += 1
        while top > 1 and means[top - 2] >= means[top - 1]:
            wtot = wts[top - 2] + wts[top - 1]
            means[top - 2] = (
                wts[top - 2] * means[top - 2] + wts[top - 1] * means[top - 1]
            ) / wtot
            wts[top - 2] = wtot
            counts[top - 2] += counts[top - 1]
            top -= 1
    return np.repeat(means[:top], counts[:top])


def pava_box(y: np.ndarray, lo: float, hi: float,
             weights: np.ndarray | None = None) -> np.ndarray:
    """Projection onto {nondecreasing} intersect [lo, hi]^n: clipped PAVA
    (clipping block means preserves optimality for box constraints)."""
    return np.clip(pava(y, weights), lo, hi)
