"""Principal-component factors of a standardized predictor panel.

Loadings are scaled so that ``L @ L.T / N`` is the identity; factor scores are
``x @ L.T / N`` (the usual PC scores) unless ``scale_by_n=False``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import months
from .errors import DegenerateColumnError, DimensionError, MetalcastError


@dataclass(frozen=True)
class StandardizedPanel:
    values: np.ndarray
    ids: tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray
    excluded_ids: tuple[str, ...] = ()


def standardize_panel(data: np.ndarray | Mapping[str, np.ndarray], ids: Sequence[str] | None = None,
                      exclude: Sequence[str] = ()) -> StandardizedPanel:
    """Demean and scale every included column to unit (population) variance."""
    if isinstance(data, Mapping):
        ids = list(data)
        x = np.column_stack([np.asarray(data[k], dtype=float) for k in ids]) if ids else np.empty((0, 0))
    else:
        x = np.asarray(data, dtype=float)
        if x.ndim != 2:
            raise DimensionError("panel must be a 2-d array")
        ids = list(ids) if ids is not None else [f"x{j}" for j in range(x.shape[1])]
    if len(ids) != x.shape[1]:
        raise DimensionError("ids do not match panel width")
    keep = [j for j, k in enumerate(ids) if k not in set(exclude)]
    x = x[:, keep]
    kept = tuple(ids[j] for j in keep)
    if np.isnan(x).any():
        raise MetalcastError("panel has missing cells; fill the ragged edge first")
    means = x.mean(axis=0)
    sds = x.std(axis=0)
    for j, sd in enumerate(sds):
        if not sd > 0:
            raise DegenerateColumnError(kept[j])
    z = (x - means) / sds
    return StandardizedPanel(z, kept, means, sds, tuple(k for k in ids if k in set(exclude)))


@dataclass(frozen=True)
class FactorModel:
    loadings: np.ndarray
    factors: np.ndarray
    eigenvalues: np.ndarray
    total_variance: float
    column_means: np.ndarray
    column_sds: np.ndarray
    ids: tuple[str, ...] = ()
    excluded_ids: tuple[str, ...] = ()
    scale_by_n: bool = True

    @property
    def r(self) -> int:
        return self.loadings.shape[0]

    @property
    def n_series(self) -> int:
        return self.loadings.shape[1]

    @property
    def variance_share(self) -> float:
        return float(self.eigenvalues.sum() / self.total_variance) if self.total_variance > 0 else 0.0

    def reconstruct(self) -> np.ndarray:
        """Common component implied by the factors (equals x when r = N)."""
        common = self.factors @ self.loadings
        return common if self.scale_by_n else common / self.n_series

    def project(self, x_std: np.ndarray) -> np.ndarray:
        f = np.asarray(x_std, dtype=float) @ self.loadings.T
        return f / self.n_series if self.scale_by_n else f


def extract_factors(x: StandardizedPanel | np.ndarray, r: int, scale_by_n: bool = True) -> FactorModel:
    if isinstance(x, StandardizedPanel):
        z, ids, means, sds, excl = x.values, x.ids, x.means, x.sds, x.excluded_ids
    else:
        z = np.asarray(x, dtype=float)
        ids, excl = tuple(f"x{j}" for j in range(z.shape[1])), ()
        means, sds = np.zeros(z.shape[1]), np.ones(z.shape[1])
    T, N = z.shape
    if r < 0 or r > min(T - 1, N):
        raise DimensionError(f"cannot extract {r} factors from a {T}x{N} panel")
    cov = z.T @ z / T
    try:
        evals, evecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise MetalcastError(f"eigen-decomposition failed: {exc}") from None
    evals = np.clip(evals[::-1], 0.0, None)
    evecs = evecs[:, ::-1]
    vecs = evecs[:, :r].T.copy()
    for i in range(r):
        j = int(np.argmax(np.abs(vecs[i])))
        if vecs[i, j] < 0:
            vecs[i] = -vecs[i]
    loadings = np.sqrt(N) * vecs
    fm = FactorModel(loadings, np.empty((T, r)), evals[:r].copy(), float(np.trace(cov)), means, sds, ids, excl, scale_by_n)
    object.__setattr__(fm, "factors", fm.project(z))
    return fm


def write_factor_paths(path: str | Path, dates: Sequence[int], model: FactorModel) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date"] + [f"factor_{i + 1}" for i in range(model.r)])
        for d, row in zip(dates, model.factors):
            w.writerow([months.fmt(d)] + [repr(float(v)) for v in row])
