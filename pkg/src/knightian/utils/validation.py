"""Input checks shared by the estimator and the harness."""

from __future__ import annotations

from numbers import Integral, Real

import numpy as np

from ..observation import AlphabetSchedule


def check_symbols(X, schedule: AlphabetSchedule, start: int = 0) -> np.ndarray:
    """Coerce ``X`` to a 1-d integer array of symbols valid from step ``start`` on."""
    arr = np.asarray(X)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.reshape(-1)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d sequence of symbols, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("symbols must be integers")
    arr = arr.astype(np.int64)
    for i, s in enumerate(arr):
        size = schedule.size(start + i)
        if not 0 <= s < size:
            raise ValueError(f"symbol {s} at step {start + i} outside alphabet of size {size}")
    return arr


def check_probability_vector(p, size: int | None = None, tol: float = 1e-9, name="probabilities") -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if size is not None and p.size != size:
        raise ValueError(f"{name} must have length {size}, got {p.size}")
    if not np.all(np.isfinite(p)) or np.any(p < -tol) or abs(p.sum() - 1.0) > tol:
        raise ValueError(f"{name} must be a probability vector, got {p.tolist()}")
    return np.clip(p, 0.0, None) / np.clip(p, 0.0, None).sum()


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_positive_real(value, name: str, strict: bool = True) -> float:
    if isinstance(value, bool) or not isinstance(value, Real):
        raise ValueError(f"{name} must be a real number, got {value!r}")
    if (value <= 0) if strict else (value < 0):
        raise ValueError(f"{name} must be {'>' if strict else '>='} 0, got {value!r}")
    return float(value)


def check_ladder(ladder) -> tuple[int, ...]:
    ladder = tuple(ladder)
    if not ladder:
        raise ValueError("precision ladder must be nonempty")
    return tuple(check_positive_int(k, "ladder entry") for k in ladder)
