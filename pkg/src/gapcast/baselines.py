"""Error metric and two classical reference forecasters."""
from __future__ import annotations

import warnings

import numpy as np

from .errors import ShapeError

RIDGE_LAMBDA = 1e-6


def rmse(actual, pred) -> float:
    """Root mean squared error over N paired values."""
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(pred, dtype=np.float64).ravel()
    if a.shape != p.shape:
        raise ShapeError(f"rmse needs equal lengths, got {a.size} and {p.size}")
    if a.size == 0:
        raise ShapeError("rmse of zero values is undefined")
    return float(np.sqrt(np.mean((a - p) ** 2)))


def _values(series) -> np.ndarray:
    return np.asarray(getattr(series, "values", series), dtype=np.float64)


def persistence_baseline(series, horizon: int | None = None) -> np.ndarray:
    """Predict each of the last ``horizon`` bins as the bin before it.

    Default horizon is every bin but the first.
    """
    x = _values(series)
    if len(x) < 1:
        raise ValueError("persistence baseline needs a non-empty series")
    if horizon is None:
        horizon = len(x) - 1
    if not 0 <= horizon <= len(x) - 1:
        raise ValueError(f"horizon {horizon} impossible for a series of length {len(x)}")
    return x[len(x) - horizon - 1:len(x) - 1].copy()


def persistence_at(series, target_indices) -> np.ndarray:
    x = _values(series)
    return x[np.asarray(target_indices) - 1]


def _lag_matrix(x: np.ndarray, p: int, targets: np.ndarray) -> np.ndarray:
    """Design rows ``[1, x[t-1], ..., x[t-p]]`` for each target index t."""
    lags = np.stack([x[targets - k] for k in range(1, p + 1)], axis=1)
    return np.hstack([np.ones((len(targets), 1)), lags])


def fit_ar(series, p: int) -> tuple[float, np.ndarray]:
    """Least-squares AR(p) with intercept via the normal equations.

    Returns ``(intercept, coefficients)`` with ``coefficients[k]`` the weight
    of lag k+1. A singular normal matrix falls back to ridge (lambda = 1e-6 on
    the lag weights) with a warning.
    """
    x = _values(series)
    if p < 1:
        raise ValueError(f"AR order must be >= 1, got {p}")
    if len(x) < p + 1:
        raise ValueError(f"AR({p}) needs at least {p + 1} points, got {len(x)}")
    targets = np.arange(p, len(x))
    X = _lag_matrix(x, p, targets)
    y = x[targets]
    gram = X.T @ X
    rhs = X.T @ y
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        warnings.warn(f"singular AR({p}) normal matrix; using ridge fallback", RuntimeWarning, stacklevel=2)
        penalty = RIDGE_LAMBDA * np.eye(p + 1)
        penalty[0, 0] = 0.0
        gram = gram + penalty
        beta = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    else:
        beta = np.linalg.solve(gram, rhs)
    return float(beta[0]), beta[1:]


def ar_predict(series, intercept: float, coefs: np.ndarray, target_indices) -> np.ndarray:
    x = _values(series)
    return _lag_matrix(x, len(coefs), np.asarray(target_indices)) @ np.concatenate([[intercept], coefs])


def ar_baseline(series, p: int, train_end: int | None = None, target_indices=None) -> np.ndarray:
    """Fit AR(p) on ``series[:train_end]`` and forecast one step ahead at each target index.

    Defaults: ``train_end`` is the 85% chronological cut and the targets are
    every bin from ``train_end`` on.
    """
    x = _values(series)
    if train_end is None:
        train_end = int(np.floor(0.85 * len(x) + 1e-9))
    if target_indices is None:
        target_indices = np.arange(max(train_end, p), len(x))
    intercept, coefs = fit_ar(x[:train_end], p)
    return ar_predict(x, intercept, coefs, target_indices)
