"""Least-squares helpers shared by the nowcasting and forecasting models."""

from __future__ import annotations

import numpy as np

from .errors import InsufficientDataError, RankError

MIN_EXTRA_OBS = 10


def ols(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients and residuals of ``y`` on ``X``; ``y`` may hold several columns."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise RankError(f"design matrix has rank {rank} < {X.shape[1]} columns")
    return coef, y - X @ coef


def require_obs(n: int, k: int, what: str = "regression") -> None:
    if n < k + MIN_EXTRA_OBS:
        raise InsufficientDataError(f"{what}: {n} observations for {k} coefficients (need {k + MIN_EXTRA_OBS})")


def lag_matrix(x: np.ndarray, p: int, rows: slice | np.ndarray) -> np.ndarray:
    """Columns x_t, x_{t-1}, ..., x_{t-p+1} evaluated at the row positions ``rows``."""
    t = np.arange(len(x))[rows]
    return np.column_stack([x[t - i] for i in range(p)]) if p else np.empty((len(t), 0))
