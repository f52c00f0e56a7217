"""Input validation helpers shared by the estimators and functional API."""
from __future__ import annotations

import numpy as np

MIN_TAU = 1e-6


class NotFittedError(ValueError, AttributeError):
    """Raised when an estimator is used before ``fit``."""


def check_vector(x, length: int, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_samples(X, dim: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-D float array with ``dim`` columns."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if dim is None or X.shape[0] == dim else X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"{name} must have {dim} columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_tau(tau) -> float:
    tau = float(tau)
    if not np.isfinite(tau) or tau < MIN_TAU:
        raise ValueError(f"tau must lie in [{MIN_TAU:g}, 1], got {tau!r}")
    if tau > 1.0:
        raise ValueError(f"tau must not exceed 1 (surrogate would extrapolate), got {tau!r}")
    return tau


def check_taus(taus) -> list[float]:
    """Validate every value before any work is done."""
    return [check_tau(t) for t in taus]


def check_is_fitted(estimator, attributes) -> None:
    if isinstance(attributes, str):
        attributes = [attributes]
    if not all(getattr(estimator, a, None) is not None for a in attributes):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; call 'fit' first."
        )
