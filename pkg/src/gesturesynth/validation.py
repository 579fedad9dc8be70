"""Input validation helpers.

Small check functions used at module boundaries so that estimator-style
entry points (fit/predict) and file loaders reject bad input early with
a clear message instead of failing deep inside array math.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, ShapeError


def as_float_array(values, name: str, ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 array, rejecting non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name}: expected {ndim} dimensions, got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: contains non-finite values")
    return arr


def check_shape(arr: np.ndarray, expected: tuple, name: str) -> None:
    """Check a shape tuple; ``None`` entries match any extent."""
    if len(arr.shape) != len(expected) or any(
        e is not None and a != e for a, e in zip(arr.shape, expected)
    ):
        raise ShapeError(f"{name}: expected shape {expected}, got {arr.shape}")


def check_positive(value, name: str) -> None:
    if not value > 0:
        raise InvalidInputError(f"{name}: must be > 0, got {value!r}")


def check_in_open_interval(value, lo, hi, name: str) -> None:
    if not (lo < value < hi):
        raise InvalidInputError(f"{name}: must lie in ({lo}, {hi}), got {value!r}")


def freeze(arr: np.ndarray) -> np.ndarray:
    """Mark an array read-only so value types stay immutable after construction."""
    arr.flags.writeable = False
    return arr
