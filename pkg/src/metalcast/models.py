"""Direct multi-horizon forecasting models for real metal price growth.

Every model forecasts the one-month log growth of the real price at month
T+h with a separate least-squares projection per horizon h. Level forecasts
cumulate the fan of growth forecasts for horizons 1..h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, IncompleteFanError, InsufficientDataError, ModelError, MetalcastError
from .factors import extract_factors, standardize_panel
from .regression import ols, require_obs
from .vintages import GROUPS

FAMILIES = ("RWD", "AR", "ARDL", "ARDI", "VAR", "FAVAR")
MAX_HORIZON = 24
ROLES = ("price", "inventory", "demand")


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model description.

    ``p`` and ``s`` are lag counts or ``"aic"``; ``predictors`` lists variable
    ids or group tags (ARDL); ``endogenous`` lists roles or ids (VAR/FAVAR).
    """

    name: str
    family: str
    p: int | str = 1
    s: int | str = 1
    predictors: tuple[str, ...] = ()
    r: int = 0
    endogenous: tuple[str, ...] = ROLES
    p_max: int = 6
    s_max: int = 6
    iterated: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"{self.name}: unknown model family {self.family!r}")
        for lag, label in ((self.p, "p"), (self.s, "s")):
            if lag != "aic" and (not isinstance(lag, int) or lag < 1):
                raise ConfigError(f"{self.name}: {label} must be a positive integer or 'aic'")
        if self.family == "ARDL" and not self.predictors:
            raise ConfigError(f"{self.name}: ARDL needs predictors")
        if self.family in ("ARDI", "FAVAR") and self.r < 0:
            raise ConfigError(f"{self.name}: factor count must be >= 0")
        if self.family in ("VAR", "FAVAR"):
            if not self.endogenous or self.endogenous[0] != "price":
                raise ConfigError(f"{self.name}: the first endogenous variable must be the price")
            if self.p == "aic":
                raise ConfigError(f"{self.name}: VAR lag selection by AIC is not supported")
        if self.p_max < 1 or self.s_max < 1:
            raise ConfigError(f"{self.name}: lag grids must be >= 1")

    @property
    def stochastic(self) -> bool:
        return False


@dataclass(frozen=True)
class WindowSnapshot:
    """Transformed data of one rolling window, rows ordered by date.

    ``target`` is the real-price log growth of the metal being forecast. The
    predictor arrays are aligned with ``dates`` and may start with NaN where a
    transform is undefined.
    """

    dates: tuple[int, ...]
    target: np.ndarray
    predictors: Mapping[str, np.ndarray]
    groups: Mapping[str, str]
    price_level: float
    target_id: str = "price"
    roles: Mapping[str, str] = field(default_factory=dict)

    def role(self, name: str) -> np.ndarray:
        if name == "price":
            return self.target
        var = self.roles.get(name, name)
        if var == self.target_id:
            return self.target
        if var not in self.predictors:
            raise ConfigError(f"unknown variable {name!r}")
        return self.predictors[var]

    def role_id(self, name: str) -> str:
        if name == "price":
            return self.target_id
        return self.roles.get(name, name)


@dataclass(frozen=True)
class DirectProjection:
    horizon: int
    intercept: float | np.ndarray
    coefs: np.ndarray
    sigma2: float | np.ndarray
    nobs: int
    names: tuple[str, ...] = ()

    def predict(self, x) -> float | np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.intercept + x @ self.coefs

    def aic(self) -> float:
        s2 = float(np.mean(np.atleast_1d(self.sigma2)))
        k = 1 + self.coefs.shape[0]
        return self.nobs * math.log(s2) + 2 * k if s2 > 0 else -math.inf


@dataclass(frozen=True)
class ForecastRecord:
    metal: str
    model: str
    origin: int
    horizon: int
    growth: float
    level: float
    realized: float | None = None

    def __post_init__(self):
        if not 1 <= self.horizon <= MAX_HORIZON:
            raise ValueError(f"horizon {self.horizon} outside 1..{MAX_HORIZON}")
        if not self.level > 0:
            raise ValueError("level forecast must be positive")


# ---------------------------------------------------------------------------
# Estimation primitives


def lagged(x: np.ndarray, lags: int) -> np.ndarray:
    """Columns x_t, x_{t-1}, ..., x_{t-lags+1}; undefined leading entries are NaN.

    ``x`` may be 1-d or (T, K); the output has lags*K columns ordered lag-major.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T, K = x.shape
    out = np.full((T, lags * K), np.nan)
    for i in range(lags):
        out[i:, i * K:(i + 1) * K] = x[: T - i]
    return out


def direct_projection_fit(y, X, h: int, rows: np.ndarray | None = None,
                          names: Sequence[str] = ()) -> DirectProjection:
    """Least squares of y_{t+h} on (1, X_t) over the rows where everything is defined."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    T = X.shape[0]
    if h < 0:
        raise ValueError("horizon must be >= 0")
    lead = y[h:] if h else y
    Xs = X[: T - h]
    if rows is None:
        ok = ~np.isnan(Xs).any(axis=1) & ~np.isnan(lead.reshape(len(lead), -1)).any(axis=1)
        rows = np.flatnonzero(ok)
    k = X.shape[1] + 1
    require_obs(len(rows), k, f"direct projection h={h}")
    D = np.column_stack([np.ones(len(rows)), Xs[rows]])
    coef, resid = ols(D, lead[rows])
    sigma2 = np.mean(resid * resid, axis=0)
    return DirectProjection(h, coef[0], coef[1:], sigma2, len(rows), tuple(names))


def reconstruct_level(origin_price: float, growths, h: int) -> float:
    """P_T * exp(sum of growth forecasts for horizons 1..h)."""
    g = np.asarray(growths, dtype=float)
    if h < 1:
        raise ValueError("horizon must be >= 1")
    if g.size < h or np.isnan(g[:h]).any():
        raise IncompleteFanError(f"growth forecasts missing for some horizon in 1..{h}")
    if not origin_price > 0:
        raise ValueError("origin price must be positive")
    return float(origin_price * math.exp(math.fsum(g[:h])))


def resolve_predictors(tokens: Iterable[str], window: WindowSnapshot) -> list[str]:
    out: list[str] = []
    for tok in tokens:
        if tok in GROUPS:
            members = [v for v, g in window.groups.items() if g == tok and v != window.target_id]
            if not members:
                raise ConfigError(f"group {tok!r} has no variables")
            out.extend(m for m in members if m not in out)
        elif tok in window.roles:
            out.append(window.roles[tok])
        elif tok in window.predictors:
            if tok not in out:
                out.append(tok)
        else:
            raise ConfigError(f"unknown predictor {tok!r}")
    return out


# ---------------------------------------------------------------------------
# Model families


def _own_block(window: WindowSnapshot, p: int) -> np.ndarray:
    return lagged(window.target, p)


def _fit_predict(y, X, h, rows=None) -> float:
    fit = direct_projection_fit(y, X, h, rows)
    return float(fit.predict(X[-1]))


def _common_rows(X: np.ndarray, y: np.ndarray, h: int) -> np.ndarray:
    T = X.shape[0]
    ok = ~np.isnan(X[: T - h]).any(axis=1) & ~np.isnan(y[h:])
    return np.flatnonzero(ok)


def _select_ardl(y: np.ndarray, Z: np.ndarray | None, h: int, p_opts, s_opts) -> tuple[int, int]:
    p_big = max(p_opts)
    s_big = max(s_opts) if Z is not None else 0
    full = [lagged(y, p_big)]
    if Z is not None:
        full.append(lagged(Z, s_big))
    rows = _common_rows(np.column_stack(full), y, h)
    K = 0 if Z is None else (Z.shape[1] if Z.ndim == 2 else 1)
    best, best_aic = (p_opts[0], s_opts[0]), math.inf
    for p in p_opts:
        for s in (s_opts if Z is not None else [0]):
            X = lagged(y, p)
            if Z is not None:
                X = np.column_stack([X, lagged(Z, s)])
            fit = direct_projection_fit(y, X, h, rows)
            a = fit.aic()
            if a < best_aic:
                best, best_aic = (p, s), a
    return best


def _ardl_fan(y: np.ndarray, Z: np.ndarray | None, spec: ModelSpec, horizons: Sequence[int],
              restrict: bool = False) -> np.ndarray:
    out = np.empty(len(horizons))
    for i, h in enumerate(horizons):
        if spec.p == "aic" or (Z is not None and spec.s == "aic"):
            p_opts = list(range(1, spec.p_max + 1)) if spec.p == "aic" else [spec.p]
            s_opts = list(range(1, spec.s_max + 1)) if spec.s == "aic" else [spec.s]
            p, s = _select_ardl(y, Z, h, p_opts, s_opts)
        else:
            p, s = spec.p, spec.s
        X = lagged(y, p)
        if Z is not None:
            full = np.column_stack([X, lagged(Z, s)])
            rows = _common_rows(full, y, h)
            if not restrict:
                X = full
        else:
            rows = None
        out[i] = _fit_predict(y, X, h, rows)
    return out


def forecast_rwd(window: WindowSnapshot, horizons: Sequence[int] = range(1, MAX_HORIZON + 1)) -> np.ndarray:
    """Random walk with drift in log prices: every monthly growth equals the window mean."""
    g = window.target[~np.isnan(window.target)]
    if g.size == 0:
        raise InsufficientDataError("empty window")
    return np.full(len(horizons), float(np.mean(g)))


def forecast_ardl(window: WindowSnapshot, spec: ModelSpec, horizons: Sequence[int] = range(1, MAX_HORIZON + 1),
                  restrict: bool = False) -> np.ndarray:
    """AR / ARDL direct forecasts; ``restrict`` fixes the predictor block at zero."""
    y = window.target
    if spec.family == "AR" or not spec.predictors:
        return _ardl_fan(y, None, spec, horizons)
    ids = resolve_predictors(spec.predictors, window)
    Z = np.column_stack([window.predictors[v] for v in ids])
    return _ardl_fan(y, Z, spec, horizons, restrict)


def window_factors(window: WindowSnapshot, r: int, exclude: Sequence[str], scale_by_n: bool = True):
    """Factors from every predictor except ``exclude``, on rows where all are defined.

    Returns a (T, r) array with NaN rows where the panel is incomplete.
    """
    ids = [v for v in window.predictors if v not in set(exclude)]
    X = np.column_stack([window.predictors[v] for v in ids])
    rows = ~np.isnan(X).any(axis=1)
    panel = standardize_panel(X[rows], ids)
    fm = extract_factors(panel, r, scale_by_n)
    F = np.full((X.shape[0], r), np.nan)
    F[rows] = fm.factors
    return F, fm


def forecast_ardi(window: WindowSnapshot, spec: ModelSpec, horizons: Sequence[int] = range(1, MAX_HORIZON + 1),
                  restrict: bool = False) -> np.ndarray:
    if spec.r == 0:
        return _ardl_fan(window.target, None, spec, horizons)
    F, _ = window_factors(window, spec.r, [window.target_id])
    return _ardl_fan(window.target, F, spec, horizons, restrict)


def _var_fan(Y: np.ndarray, extra: np.ndarray | None, spec: ModelSpec, horizons: Sequence[int],
             restrict: bool = False) -> np.ndarray:
    p = spec.p
    X = lagged(Y, p)
    if extra is not None:
        s = spec.s if spec.s != "aic" else p
        full = np.column_stack([X, lagged(extra, s)])
    else:
        full = X
    if spec.iterated:
        state = Y if extra is None else np.column_stack([Y, extra])
        return _iterated_var(state, p, horizons)
    out = np.empty(len(horizons))
    for i, h in enumerate(horizons):
        rows = _common_rows(np.column_stack([full, Y]), Y[:, 0], h) if h else None
        design = X if (restrict and extra is not None) else full
        # every equation is estimated in one multi-column solve; the price
        # equation (column 0) is the forecast
        fit = direct_projection_fit(Y if Y.shape[1] > 1 else Y[:, 0], design, h, rows)
        out[i] = float(np.atleast_1d(fit.predict(design[-1]))[0])
    return out


def _iterated_var(state: np.ndarray, p: int, horizons: Sequence[int]) -> np.ndarray:
    X = lagged(state, p)
    rows = _common_rows(np.column_stack([X, state]), state[:, 0], 1)
    rows = rows[~np.isnan(state[rows + 1]).any(axis=1)]
    fits = [direct_projection_fit(state[:, j], X, 1, rows) for j in range(state.shape[1])]
    hist = [row for row in state[-p:]]
    preds = {}
    for step in range(1, max(horizons) + 1):
        x = np.concatenate([hist[-1 - i] for i in range(p)])
        nxt = np.array([float(f.predict(x)) for f in fits])
        hist.append(nxt)
        preds[step] = nxt[0]
    return np.array([preds[h] for h in horizons])


def forecast_var(window: WindowSnapshot, spec: ModelSpec, horizons: Sequence[int] = range(1, MAX_HORIZON + 1)) -> np.ndarray:
    Y = np.column_stack([window.role(e) for e in spec.endogenous])
    return _var_fan(Y, None, spec, horizons)


def forecast_favar(window: WindowSnapshot, spec: ModelSpec, horizons: Sequence[int] = range(1, MAX_HORIZON + 1),
                   restrict: bool = False) -> np.ndarray:
    Y = np.column_stack([window.role(e) for e in spec.endogenous])
    if spec.r == 0:
        return _var_fan(Y, None, spec, horizons)
    exclude = [window.role_id(e) for e in spec.endogenous]
    F, _ = window_factors(window, spec.r, exclude)
    return _var_fan(Y, F, spec, horizons, restrict)


def forecast_growth(window: WindowSnapshot, spec: ModelSpec,
                    horizons: Sequence[int] = range(1, MAX_HORIZON + 1)) -> np.ndarray:
    """Growth forecast fan for one model on one window."""
    fam = spec.family
    try:
        if fam == "RWD":
            return forecast_rwd(window, horizons)
        if fam in ("AR", "ARDL"):
            return forecast_ardl(window, spec, horizons)
        if fam == "ARDI":
            return forecast_ardi(window, spec, horizons)
        if fam == "VAR":
            return forecast_var(window, spec, horizons)
        return forecast_favar(window, spec, horizons)
    except ConfigError:
        raise
    except MetalcastError as exc:
        raise ModelError(spec.name, exc) from exc


def level_fan(origin_price: float, growths: np.ndarray) -> np.ndarray:
    """Level forecasts for horizons 1..len(growths)."""
    return np.array([reconstruct_level(origin_price, growths, h) for h in range(1, len(growths) + 1)])
