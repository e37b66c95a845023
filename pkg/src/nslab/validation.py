"""Input validation helpers in the style of ``sklearn.utils.validation``."""
from __future__ import annotations

import math

import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted  # noqa: F401

from nslab.exceptions import DomainError, NumericError


def check_fields(X, n_cells: int | None = None) -> np.ndarray:
    """Return ``X`` as a finite 2-D float array of fields (one per row)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=np.float64, ensure_min_features=3)
    if n_cells is not None and X.shape[1] != n_cells:
        raise DomainError(f"expected fields with {n_cells} cells, got {X.shape[1]}")
    return X


def check_slopes(X) -> np.ndarray:
    """Validate rows of ``(inf_slope, sup_slope)`` pairs."""
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != 2:
        raise DomainError(f"expected two columns (inf_slope, sup_slope), got {X.shape[1]}")
    if np.any(X[:, 0] > 0) or np.any(X[:, 1] < 0):
        raise DomainError("slopes must satisfy inf_slope <= 0 <= sup_slope")
    return X


def check_positive(name: str, value) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise NumericError(f"{name} must be finite, got {value}")
    if value <= 0:
        raise DomainError(f"{name} must be positive, got {value}")
    return value


def check_finite(name: str, value) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise NumericError(f"{name} must be finite, got {value}")
    return value
