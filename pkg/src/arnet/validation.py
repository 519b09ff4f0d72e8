"""Input validation helpers shared by the numeric modules."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DataError, NumericError, ShapeError


def as_matrix(x, name: str = "matrix", *, require_finite: bool = True) -> np.ndarray:
    """Coerce to a 2-D float64 array and check the basic matrix contract."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must be at least 1x1, got shape {m.shape}")
    if require_finite and not np.all(np.isfinite(m)):
        raise NumericError(f"{name} contains non-finite entries")
    return m


def check_same_shape(a: np.ndarray, b: np.ndarray, name_a: str = "a", name_b: str = "b") -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name_a} shape {a.shape} != {name_b} shape {b.shape}")


def check_cols(m: np.ndarray, n_cols: int, name: str = "matrix") -> None:
    if m.shape[1] != n_cols:
        raise ShapeError(f"{name} must have {n_cols} columns, got {m.shape[1]}")


def as_labels(y, n_classes: int, name: str = "labels") -> np.ndarray:
    """Coerce to a 1-D int64 label vector with entries in [0, n_classes)."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if arr.size == 0:
        raise DataError(f"{name} is empty")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.asarray(arr, dtype=np.float64)
        if not np.all(rounded == np.round(rounded)):
            raise DataError(f"{name} must be integer-valued")
        arr = rounded.astype(np.int64)
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= n_classes:
        raise DataError(f"{name} entries must lie in [0, {n_classes})")
    return arr


def check_prob_rows(m: np.ndarray, name: str = "matrix", tol: float = 1e-6) -> None:
    """Every row must be a probability vector within `tol`."""
    if np.any(m < -tol):
        raise NumericError(f"{name} has negative entries")
    sums = m.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > tol):
        worst = float(np.abs(sums - 1.0).max())
        raise NumericError(f"{name} rows must sum to 1 within {tol} (worst deviation {worst:.3g})")


def check_unit_interval(value: float, name: str) -> float:
    if not (0.0 <= value <= 1.0):
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return float(value)


def check_positive(value: float, name: str) -> float:
    if not value > 0:
        raise ConfigError(f"{name} must be > 0, got {value}")
    return float(value)


def check_at_least(value: int, minimum: int, name: str) -> int:
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return int(value)
