"""Dense parameter vectors.

Parameter vectors are plain 1-D float64 numpy arrays; these helpers add the
finiteness and dimension checks the rest of the package relies on.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NonFiniteError


def as_vec(values) -> np.ndarray:
    """Coerce to a finite 1-D float64 array."""
    x = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if x.ndim != 1:
        raise DimensionError(f"expected 1-D vector, got shape {x.shape}")
    check_finite(x)
    return x


def check_finite(x: np.ndarray, what: str = "vector") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite entries in {what}")
    return x


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """a*x + y, entrywise."""
    x = as_vec(x)
    y = as_vec(y)
    if x.shape != y.shape:
        raise DimensionError(f"dim mismatch: {x.shape} vs {y.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a * x + y
    return check_finite(out, "axpy result")


def norm(x) -> float:
    return float(np.linalg.norm(as_vec(x)))
