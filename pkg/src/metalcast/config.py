"""INI configuration for backtests.

Sections: ``[data]``, ``[backtest]``, ``[nowcast]``, ``[evaluation]``,
``[pooling]``, ``[model_free]`` and one ``[model <id>]`` section per model, in
display order. Paths are resolved relative to the config file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from . import months
from .errors import ConfigError
from .models import MAX_HORIZON, ModelSpec
from .nowcast import FAMILIES as NOWCAST_FAMILIES
from .nowcast import NowcastModelSpec
from .pooling import PoolingSpec
from .vintages import DEFAULT_BASE_MONTH, METALS


@dataclass(frozen=True)
class EvaluationSpec:
    benchmark: str = "RW-D"
    dm_variance: str = "hac"
    mcs_B: int = 2000
    mcs_block: int = 6
    mcs_alphas: tuple[float, ...] = (0.10, 0.25)
    mcs_statistic: str = "Tmax"
    cumpath_skip: int = 12
    cumpath_horizons: tuple[int, ...] = (1, 3, 6, 9, 12, 15, 18, 21, 24)


@dataclass(frozen=True)
class BacktestConfig:
    manifest: Path
    models: tuple[ModelSpec, ...]
    metals: tuple[str, ...] = METALS
    horizons: tuple[int, ...] = tuple(range(1, MAX_HORIZON + 1))
    window: int = 184
    first_origin: int = 201504
    last_origin: int | None = None
    base_month: int = DEFAULT_BASE_MONTH
    nowcast: NowcastModelSpec = field(default_factory=lambda: NowcastModelSpec("RWD"))
    nowcast_window: int | None = 120
    race_models: tuple[str, ...] = ("RWD", "AR", "ARAIC")
    race_window: int | None = 120
    race_draws: int = 300
    race_burn_in: int = 150
    evaluation: EvaluationSpec = field(default_factory=EvaluationSpec)
    pooling: tuple[PoolingSpec, ...] = (PoolingSpec(variant="SSM"), PoolingSpec(variant="Top2"))
    futures: bool = True
    surveys: bool = True
    survey_nominal: bool = True
    seed: int = 0
    workers: int = 1
    out: Path = Path("out")

    def __post_init__(self):
        bad = [h for h in self.horizons if not 1 <= h <= MAX_HORIZON]
        if bad:
            raise ConfigError(f"horizons must lie in 1..{MAX_HORIZON}, got {bad}")
        if not self.horizons or list(self.horizons) != sorted(set(self.horizons)):
            raise ConfigError("horizons must be a non-empty increasing list")
        for m in self.metals:
            if m not in METALS:
                raise ConfigError(f"unknown metal {m!r}")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError("duplicated model ids")
        if self.evaluation.benchmark in names and self.models[names.index(self.evaluation.benchmark)].family != "RWD":
            raise ConfigError("the benchmark id must name an RWD model")
        if self.window < 24:
            raise ConfigError("rolling window must be at least 24 months")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.last_origin is not None and self.last_origin < self.first_origin:
            raise ConfigError("last origin precedes first origin")

    def with_models(self) -> tuple[ModelSpec, ...]:
        """Configured models with the RW-D benchmark inserted first if absent."""
        if any(m.name == self.evaluation.benchmark for m in self.models):
            return self.models
        return (ModelSpec(self.evaluation.benchmark, "RWD"),) + self.models

    def echo(self) -> dict[str, Any]:
        """JSON-friendly view used in the run manifest."""

        def conv(v):
            if isinstance(v, Path):
                return str(v)
            if isinstance(v, tuple):
                return [conv(x) for x in v]
            if hasattr(v, "__dataclass_fields__"):
                return {f.name: conv(getattr(v, f.name)) for f in fields(v)}
            return v

        d = conv(self)
        # execution settings that cannot change results stay out of the echo
        d.pop("out", None)
        d.pop("workers", None)
        d["manifest"] = Path(self.manifest).name
        return d


def _list(value: str) -> list[str]:
    return [v.strip() for v in value.replace(";", ",").split(",") if v.strip()]


def _lag(value: str) -> int | str:
    v = value.strip().lower()
    return "aic" if v == "aic" else int(v)


def _bool(sec: configparser.SectionProxy, key: str, default: bool) -> bool:
    try:
        return sec.getboolean(key, fallback=default)
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key}: {exc}") from None


def _horizons(value: str) -> tuple[int, ...]:
    out: list[int] = []
    for tok in _list(value):
        if "-" in tok:
            a, b = tok.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(tok))
    return tuple(out)


def _date(value: str) -> int:
    return months.parse(value)


def parse_model(name: str, sec: configparser.SectionProxy) -> ModelSpec:
    kw: dict[str, Any] = {"name": name, "family": sec.get("family", "").strip().upper()}
    if "p" in sec:
        kw["p"] = _lag(sec["p"])
    if "s" in sec:
        kw["s"] = _lag(sec["s"])
    if "predictors" in sec:
        kw["predictors"] = tuple(_list(sec["predictors"]))
    if "r" in sec:
        kw["r"] = int(sec["r"])
    if "endogenous" in sec:
        kw["endogenous"] = tuple(_list(sec["endogenous"]))
    for k in ("p_max", "s_max"):
        if k in sec:
            kw[k] = int(sec[k])
    if "iterated" in sec:
        kw["iterated"] = _bool(sec, "iterated", False)
    return ModelSpec(**kw)


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> BacktestConfig:
    """Parse an INI file; ``overrides`` (seed, workers, out) win over file values."""
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        read = cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not read:
        raise ConfigError(f"cannot read config {path}")
    root = path.parent
    try:
        data = cp["data"] if cp.has_section("data") else None
        if data is None or "manifest" not in data:
            raise ConfigError("[data] manifest is required")
        kw: dict[str, Any] = {"manifest": (root / data["manifest"]).resolve()}
        if "base_month" in data:
            kw["base_month"] = _date(data["base_month"])

        if cp.has_section("backtest"):
            bt = cp["backtest"]
            if "metals" in bt:
                kw["metals"] = tuple(m.lower() for m in _list(bt["metals"]))
            if "horizons" in bt:
                kw["horizons"] = _horizons(bt["horizons"])
            if "window" in bt:
                kw["window"] = int(bt["window"])
            if "first_origin" in bt:
                kw["first_origin"] = _date(bt["first_origin"])
            if "last_origin" in bt:
                kw["last_origin"] = _date(bt["last_origin"])
            if "seed" in bt:
                kw["seed"] = int(bt["seed"])
            if "workers" in bt:
                kw["workers"] = int(bt["workers"])
            if "out" in bt:
                kw["out"] = (root / bt["out"]).resolve()

        seed = (overrides or {}).get("seed")
        seed = kw.get("seed", 0) if seed is None else seed

        if cp.has_section("nowcast"):
            nc = cp["nowcast"]
            fam = nc.get("model", "RWD").strip().upper()
            if fam not in NOWCAST_FAMILIES:
                raise ConfigError(f"unknown nowcast model {fam!r}")
            nkw: dict[str, Any] = {"family": fam, "seed": seed}
            for k in ("draws", "burn_in", "max_lag"):
                if k in nc:
                    nkw[k] = int(nc[k])
            kw["nowcast"] = NowcastModelSpec(**nkw)
            if "window" in nc:
                kw["nowcast_window"] = int(nc["window"]) or None
            if "race_models" in nc:
                race = tuple(m.upper() for m in _list(nc["race_models"]))
                for m in race:
                    if m not in NOWCAST_FAMILIES:
                        raise ConfigError(f"unknown nowcast model {m!r}")
                kw["race_models"] = race
            if "race_window" in nc:
                kw["race_window"] = int(nc["race_window"]) or None
            for k in ("race_draws", "race_burn_in"):
                if k in nc:
                    kw[k] = int(nc[k])

        ev_kw: dict[str, Any] = {}
        if cp.has_section("evaluation"):
            ev = cp["evaluation"]
            for k in ("benchmark", "dm_variance", "mcs_statistic"):
                if k in ev:
                    ev_kw[k] = ev[k].strip()
            for k in ("mcs_B", "mcs_block", "cumpath_skip"):
                if k in ev:
                    ev_kw[k] = int(ev[k])
            if "mcs_alphas" in ev:
                ev_kw["mcs_alphas"] = tuple(float(a) for a in _list(ev["mcs_alphas"]))
            if "cumpath_horizons" in ev:
                ev_kw["cumpath_horizons"] = _horizons(ev["cumpath_horizons"])
        evaluation = EvaluationSpec(**ev_kw)
        if evaluation.dm_variance not in ("hac", "hln"):
            raise ConfigError("dm_variance must be hac or hln")
        if evaluation.mcs_statistic not in ("Tmax", "TR"):
            raise ConfigError("mcs_statistic must be Tmax or TR")
        kw["evaluation"] = evaluation

        if cp.has_section("pooling"):
            pl = cp["pooling"]
            base: dict[str, Any] = {}
            for k in ("warmup", "screen_window", "B", "block"):
                if k in pl:
                    base[k] = int(pl[k])
            if "alpha" in pl:
                base["alpha"] = float(pl["alpha"])
            variants = _list(pl.get("variants", "SSM, Top2"))
            kw["pooling"] = tuple(PoolingSpec(variant=v, seed=seed, **base) for v in variants)
        else:
            kw["pooling"] = tuple(replace(p, seed=seed) for p in BacktestConfig.__dataclass_fields__["pooling"].default)

        if cp.has_section("model_free"):
            mf = cp["model_free"]
            kw["futures"] = _bool(mf, "futures", True)
            kw["surveys"] = _bool(mf, "surveys", True)
            kw["survey_nominal"] = _bool(mf, "survey_nominal", True)

        models = []
        for name in cp.sections():
            if name.startswith("model "):
                models.append(parse_model(name[len("model "):].strip(), cp[name]))
        kw["models"] = tuple(models)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from None

    for key in ("seed", "workers", "out"):
        val = (overrides or {}).get(key)
        if val is not None:
            kw[key] = Path(val).resolve() if key == "out" else val
    return BacktestConfig(**kw)
