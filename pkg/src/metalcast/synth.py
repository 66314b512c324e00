"""Synthetic real-time panel and the Industrial Production vintage fixture.

The synthetic panel mimics the predictor list of the application (ids, groups,
transforms and publication lags) with a two-factor DGP, so the whole pipeline
runs without proprietary data.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import months
from .model_free import FixedEventSurvey, FuturesQuote, write_futures_csv, write_survey_csv
from .vintages import DEFAULT_BASE_MONTH, METALS, Vintage, write_series_csv, write_vintage_csv

# id, group, transform, publication lag
PREDICTORS: tuple[tuple[str, str, str, int], ...] = (
    ("CPI", "Prices", "D2Log", 2),
    ("PPI-M", "Prices", "DLog", 2),
    ("IP", "EcAct", "DLog", 2),
    ("HEM", "EcAct", "Log", 2),
    ("NO-M", "EcAct", "Log", 2),
    ("NO-A", "EcAct", "Log", 3),
    ("CU-P", "CU", "Log", 2),
    ("CU-M", "CU", "Log", 2),
    ("PPI-B", "ET", "DLog", 2),
    ("MVS", "ET", "Log", 3),
    ("AUS", "ExRates", "DLog", 2),
    ("CHL", "ExRates", "DLog", 2),
    ("CHN", "ExRates", "DLog", 2),
    ("IDN", "ExRates", "DLog", 2),
    ("PER", "ExRates", "DLog", 2),
    ("PHL", "ExRates", "DLog", 2),
    ("RUS", "ExRates", "DLog", 2),
)
INVENTORIES = {"aluminum": "ALU-V", "copper": "COP-V", "nickel": "NIC-V", "zinc": "ZNC-V"}
PRICES = {"aluminum": "ALUMINUM", "copper": "COPPER", "nickel": "NICKEL", "zinc": "ZINC"}
PRICE_BASE = {"aluminum": 1900.0, "copper": 6500.0, "nickel": 15000.0, "zinc": 2100.0}


@dataclass(frozen=True)
class SynthSpec:
    start: int = 200001
    end: int = 202205
    seed: int = 7
    n_factors: int = 2
    factor_ar: tuple[float, ...] = (0.7, 0.5)
    price_ar: float = 0.15
    price_loading: float = 0.02
    price_noise: float = 0.045
    futures_from: int = 201401


def _ar(rng: np.random.Generator, n: int, phi: float, sd: float = 1.0) -> np.ndarray:
    e = rng.normal(0.0, sd, n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - phi * phi)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x


def generate(spec: SynthSpec = SynthSpec()) -> dict:
    """Final (unrevised) monthly paths of every variable plus futures and surveys."""
    rng = np.random.default_rng(spec.seed)
    dates = months.span(spec.start, spec.end)
    n = len(dates)
    f = np.column_stack([_ar(rng, n, spec.factor_ar[k]) for k in range(spec.n_factors)])
    series: dict[str, np.ndarray] = {}

    def signal() -> np.ndarray:
        lam = rng.normal(0.0, 1.0, spec.n_factors)
        return f @ lam + 0.7 * _ar(rng, n, 0.3)

    for vid, _, code, _ in PREDICTORS:
        s = signal()
        if vid == "CPI":
            infl = 0.0018 + 0.0008 * s / 2.0 + 0.0006 * _ar(rng, n, 0.8)
            series[vid] = 100.0 * np.exp(np.cumsum(infl))
        elif code == "DLog":
            series[vid] = 100.0 * np.exp(np.cumsum(0.001 + 0.008 * s))
        else:
            series[vid] = np.exp(np.log(100.0) + 0.04 * s)

    cpi = series["CPI"]
    base_idx = months.diff(DEFAULT_BASE_MONTH, spec.start)
    futures: list[FuturesQuote] = []
    surveys: dict[str, list[FixedEventSurvey]] = {}
    for m in METALS:
        gamma = rng.normal(0.0, 1.0, spec.n_factors)
        g = np.empty(n)
        eps = rng.normal(0.0, spec.price_noise, n)
        g[0] = eps[0]
        for t in range(1, n):
            g[t] = 0.0004 + spec.price_ar * g[t - 1] + spec.price_loading * (f[t - 1] @ gamma) + eps[t]
        real = PRICE_BASE[m] * np.exp(np.cumsum(g) - np.sum(g[: base_idx + 1]))
        nominal = real * cpi / cpi[base_idx]
        series[PRICES[m]] = nominal
        inv_growth = -0.4 * g + 0.03 * rng.normal(size=n)
        series[INVENTORIES[m]] = 1e5 * np.exp(np.cumsum(inv_growth))

        rounds = []
        for t in range(months.diff(spec.futures_from, spec.start), n):
            T = dates[t]
            for h in (3, 15):
                price = nominal[t] * np.exp(0.0015 * h + 0.01 * rng.normal())
                futures.append(FuturesQuote(m, T, h, round(float(price), 2)))
            events = {}
            for k in range(3, 22):
                e = months.add(T, k)
                if (e % 100) % 3 == 0:
                    events[e] = round(float(nominal[t] * np.exp(0.0015 * k + 0.03 * rng.normal())), 2)
            rounds.append(FixedEventSurvey(T, events))
        surveys[m] = rounds
    return {"dates": dates, "series": series, "futures": futures, "surveys": surveys}


def write_panel(out_dir: str | Path, spec: SynthSpec = SynthSpec()) -> Path:
    """Write series files, futures, surveys and a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = generate(spec)
    dates = data["dates"]
    lines = ["# synthetic panel", f"# seed {spec.seed}"]
    entries = [(vid, grp, code, lag) for vid, grp, code, lag in PREDICTORS]
    entries += [(INVENTORIES[m], "Inventories", "DLog", 0) for m in METALS]
    entries += [(PRICES[m], "Target", "DLog", 0) for m in METALS]
    for vid, grp, code, lag in entries:
        fname = f"{vid.lower()}.csv"
        values = data["series"][vid]
        write_series_csv(out / fname, {d: round(float(v), 6) for d, v in zip(dates, values)})
        lines.append(f"series.{vid} = {fname}, {code}, {grp}, {lag}")
    lines.append("cpi = CPI")
    lines.append("demand = NO-M")
    for m in METALS:
        lines.append(f"metal.{m} = {PRICES[m]}, {INVENTORIES[m]}")
    write_futures_csv(out / "futures.csv", data["futures"])
    lines.append("futures = futures.csv")
    for m in METALS:
        write_survey_csv(out / f"survey_{m}.csv", data["surveys"][m])
        lines.append(f"survey.{m} = survey_{m}.csv")
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# Industrial Production vintage fixture

IP_KNOWN = {
    199201: 100.00, 199202: 100.60, 199203: 100.90,
    201109: 155.28, 201110: 156.28, 201111: 155.94,
    201112: 156.59, 201201: 156.63, 201202: 156.66,
}
IP_VINTAGES = (201201, 201202, 201203, 201204)
IP_LAG = 2


def ip_first_release() -> dict[int, float]:
    """First-release IP path Jan 1992 to Feb 2012.

    Published rows are kept as printed; the elided stretch Apr 1992 to Aug 2011
    is a geometric interpolation between the neighbouring printed values,
    rounded to two decimals.
    """
    lo, hi = 199203, 201109
    steps = months.diff(hi, lo)
    ratio = (IP_KNOWN[hi] / IP_KNOWN[lo]) ** (1.0 / steps)
    out = {}
    for d in months.span(199201, 201202):
        if d in IP_KNOWN:
            out[d] = IP_KNOWN[d]
        else:
            out[d] = round(IP_KNOWN[lo] * ratio ** months.diff(d, lo), 2)
    return out


def ip_vintages() -> list[Vintage]:
    path = ip_first_release()
    out = []
    for v in IP_VINTAGES:
        last = months.add(v, -IP_LAG)
        out.append(Vintage(v, {d: x for d, x in path.items() if d <= last}))
    return out


def write_ip_fixture(out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "ip_vintages.csv"
    write_vintage_csv(path, ip_vintages(), decimals=2)
    return path


SYNTH_CONFIG = """\
# Backtest over the bundled synthetic panel.
[data]
manifest = manifest.txt
base_month = 2015-02

[backtest]
metals = aluminum, copper, nickel, zinc
horizons = 1-24
window = 184
first_origin = 2015-04
last_origin = 2020-05
seed = {seed}
workers = 1
out = out

[nowcast]
model = BARSV
draws = 150
burn_in = 100
window = 120
race_models = RWD, AR, ARAIC
race_window = 120

[evaluation]
benchmark = RW-D
dm_variance = hac
mcs_B = 2000
mcs_block = 6
mcs_alphas = 0.10, 0.25
cumpath_skip = 12

[pooling]
variants = SSM, Top2, All
warmup = 12
screen_window = 12
alpha = 0.25
B = 500
block = 6

[model_free]
futures = yes
surveys = yes
survey_nominal = yes

[model RW-D]
family = RWD

[model AR(1)]
family = AR
p = 1

[model AR(AIC)]
family = AR
p = aic

[model ARDL(1) - EcAct]
family = ARDL
predictors = EcAct

[model ARDL(1) - Inventories]
family = ARDL
predictors = inventory

[model ARDL(1) - ExRates]
family = ARDL
predictors = ExRates

[model ARDI(1)]
family = ARDI
r = 1

[model ARDI(2)]
family = ARDI
r = 2

[model VAR(1)]
family = VAR
p = 1

[model FAVAR(1)]
family = FAVAR
p = 1
r = 1

[model FAVAR(2)]
family = FAVAR
p = 1
r = 2
"""


def write_config(out_dir: str | Path, seed: int = 0) -> Path:
    path = Path(out_dir) / "backtest.ini"
    path.write_text(SYNTH_CONFIG.format(seed=seed))
    return path
