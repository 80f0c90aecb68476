"""Input validation helpers used by the estimators and numeric routines."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NonPositiveWeight, ShapeMismatch


def as_points(x, dim: int | None = None) -> np.ndarray:
    """Coerce to an (n, d) float array; 1-d input becomes a column."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected 2-d point array, got ndim={arr.ndim}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatch(
            f"points have dimension {arr.shape[1]}, class expects {dim}"
        )
    return arr


def as_vector(y, n: int | None = None, name: str = "y") -> np.ndarray:
    arr = np.asarray(y, dtype=float)
    if arr.ndim != 1:
        raise ShapeMismatch(f"{name} must be 1-d, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ShapeMismatch(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


def check_xy(x, y, dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    xa = as_points(x, dim=dim)
    ya = as_vector(y, n=xa.shape[0])
    return xa, ya


def check_sample_weight(sample_weight, n: int) -> np.ndarray | None:
    if sample_weight is None:
        return None
    w = as_vector(sample_weight, n=n, name="sample_weight")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise NonPositiveWeight("weights must be positive and finite")
    return w


def check_fitted(estimator, attr: str = "handle_") -> None:
    if not hasattr(estimator, attr):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )
