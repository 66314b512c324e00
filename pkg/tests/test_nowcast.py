import numpy as np
import pytest

from metalcast import months
from metalcast.errors import ConfigError, InsufficientDataError, ModelError
from metalcast.nowcast import (
    NowcastModelSpec,
    ar_ols_fit,
    bar_posterior,
    bar_sv_posterior,
    bar_svo_posterior,
    fill_missing_tail,
    nowcast_forecast,
    nowcast_horse_race,
    rwd_forecast,
    select_lag_aic,
)
from metalcast.synth import write_ip_fixture
from metalcast.vintages import RealTimePanel, SeriesMeta, ingest_vintage_csv


def _ar(seed, n, phi, c=0.0, sd=1.0):
    rng = np.random.default_rng(seed)
    phi = np.atleast_1d(phi)
    y = np.zeros(n + 100)
    for t in range(len(phi), len(y)):
        y[t] = c + phi @ y[t - len(phi):t][::-1] + sd * rng.standard_normal()
    return y[100:]


def _spec(family, seed=1, draws=600, burn_in=300, **kw):
    return NowcastModelSpec(family, draws=draws, burn_in=burn_in, seed=seed, **kw)


# -- frequentist ----------------------------------------------------------


def test_rwd_examples():
    assert rwd_forecast([5, 5, 5, 5], 3) == 5.0
    assert rwd_forecast([0, 1, 2, 3], 2) == 5.0
    with pytest.raises(InsufficientDataError):
        rwd_forecast([1.0], 1)


def test_rwd_closed_form():
    rng = np.random.default_rng(0)
    y = np.cumsum(0.3 + rng.standard_normal(200))
    for h in (1, 2, 3):
        assert rwd_forecast(y, h) - y[-1] == pytest.approx(h * np.diff(y).mean(), abs=1e-10)


def test_ar_noiseless_recovery():
    y = 10.0 * 0.5 ** np.arange(40)
    fit = ar_ols_fit(y, 1)
    assert fit.coefs[0] == pytest.approx(0.5, abs=1e-8)
    assert fit.intercept == pytest.approx(0.0, abs=1e-8)


def test_ar_white_noise_coefficient_small():
    T = 200
    hits = sum(abs(ar_ols_fit(np.random.default_rng(s).standard_normal(T), 1).coefs[0]) < 3 / np.sqrt(T)
               for s in range(100))
    assert hits >= 95


def test_ar_matches_normal_equations():
    y = np.random.default_rng(5).standard_normal(80).cumsum()
    p = 3
    X = np.column_stack([np.ones(len(y) - p)] + [y[p - i:len(y) - i] for i in range(1, p + 1)])
    beta = np.linalg.solve(X.T @ X, X.T @ y[p:])
    fit = ar_ols_fit(y, p)
    np.testing.assert_allclose(np.r_[fit.intercept, fit.coefs], beta, atol=1e-8)


def test_ar_h1_equals_fitted_prediction():
    y = _ar(2, 60, 0.7, c=1.0)
    fit = ar_ols_fit(y, 1)
    assert fit.forecast(y, 1)[0] == fit.intercept + fit.coefs[0] * y[-1]


def test_ar_too_short():
    with pytest.raises(InsufficientDataError):
        ar_ols_fit(np.arange(10.0), 1)


@pytest.mark.xfail(strict=True, reason="AIC admits each spurious lag with probability P(chi2(1) > 2), about 0.16; "
                                        "with p_max=6 roughly 30% of seeds overfit")
def test_aic_selects_ar2():
    hits = sum(select_lag_aic(_ar(s, 500, [1.2, -0.5]), 6) == 2 for s in range(100))
    assert hits >= 90


def test_aic_never_underfits_ar2():
    picks = [select_lag_aic(_ar(s, 500, [1.2, -0.5]), 6) for s in range(100)]
    assert min(picks) == 2
    assert max(set(picks), key=picks.count) == 2


def test_aic_white_noise_prefers_one():
    hits = sum(select_lag_aic(np.random.default_rng(s).standard_normal(200), 6) == 1 for s in range(100))
    assert hits > 50


def test_aic_single_candidate():
    assert select_lag_aic(_ar(3, 100, [1.2, -0.5]), 1) == 1


# -- Bayesian -------------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ConfigError):
        NowcastModelSpec("BAR", draws=10, burn_in=10, seed=0)
    with pytest.raises(ConfigError):
        NowcastModelSpec("BAR", seed=None)
    with pytest.raises(ConfigError):
        NowcastModelSpec("XYZ")
    with pytest.raises(ConfigError):
        NowcastModelSpec("ARAIC", max_lag=0)


def test_bar_flat_prior_matches_ols():
    y = _ar(11, 300, 0.6, c=2.0)
    post = bar_posterior(y, _spec("BAR", draws=2000, burn_in=500, prior_coef_var=1e8))
    fit = ar_ols_fit(y, 1)
    tol = 3 * post.coef_sd / np.sqrt(post.draws)
    assert abs(post.coef_mean[0] - fit.intercept) < tol[0]
    assert abs(post.coef_mean[1] - fit.coefs[0]) < tol[1]


def test_bar_constant_series():
    fc = bar_posterior(np.full(30, 4.2), _spec("BAR")).forecasts
    np.testing.assert_allclose(fc, 4.2, atol=1e-6)


@pytest.mark.parametrize("family,fn", [("BAR", bar_posterior), ("BARSV", bar_sv_posterior), ("BARSVO", bar_svo_posterior)])
def test_bayesian_determinism(family, fn):
    y = _ar(4, 120, 0.5)
    a = fn(y, _spec(family, seed=9)).forecasts
    b = fn(y, _spec(family, seed=9)).forecasts
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ConfigError):
        fn(y, _spec("BAR" if family != "BAR" else "BARSV"))


def test_sv_close_to_bar_when_homoskedastic():
    y = _ar(21, 300, 0.6, c=1.0)
    bar = bar_posterior(y, _spec("BAR", draws=1500, burn_in=500))
    sv = bar_sv_posterior(y, _spec("BARSV", draws=1500, burn_in=500))
    sd = np.maximum(bar.forecast_sd, sv.forecast_sd)
    assert np.all(np.abs(sv.forecasts - bar.forecasts) < 2 * sd)


def test_sv_detects_volatility_break():
    hits = 0
    for s in range(20):
        rng = np.random.default_rng(100 + s)
        e = rng.standard_normal(200) * np.r_[np.ones(100), 2 * np.ones(100)]
        y = np.zeros(200)
        for t in range(1, 200):
            y[t] = 0.5 * y[t - 1] + e[t]
        lv = bar_sv_posterior(y, _spec("BARSV", seed=s)).log_vol
        hits += lv[-10:].mean() > lv[1:11].mean()
    assert hits >= 18


def test_svo_no_outliers_low_probability():
    probs = [np.nanmean(bar_svo_posterior(_ar(200 + s, 150, 0.5), _spec("BARSVO", seed=s)).outlier_prob)
             for s in range(10)]
    assert np.mean(probs) < 0.2


def test_svo_flags_spike():
    hits = 0
    for s in range(20):
        y = _ar(300 + s, 150, 0.5)
        y[90] += 10.0
        prob = bar_svo_posterior(y, _spec("BARSVO", seed=s)).outlier_prob
        others = np.delete(prob[1:], [89, 90])
        hits += prob[90] > others.max()
    assert hits >= 18


def test_nowcast_forecast_dispatch():
    y = _ar(6, 80, 0.4)
    np.testing.assert_array_equal(nowcast_forecast(y, NowcastModelSpec("AR"), 3), ar_ols_fit(y, 1).forecast(y, 3))
    assert nowcast_forecast(y, NowcastModelSpec("RWD"), 2)[1] == rwd_forecast(y, 2)


# -- gap filling ----------------------------------------------------------


def _ip_panel(tmp_path):
    meta = SeriesMeta("IP", "EcAct", "DLog", 2)
    return RealTimePanel.from_vintages({"IP": meta}, {"IP": ingest_vintage_csv(write_ip_fixture(tmp_path), meta)})


def test_fill_ip_with_rwd(tmp_path):
    panel = _ip_panel(tmp_path)
    snap = fill_missing_tail(panel, 201201)
    _, hist = panel.history("IP", 201201)
    assert snap.filled["IP"] == 2
    s = snap.series("IP")
    d = (hist[-1] - hist[0]) / (len(hist) - 1)
    assert s[201112] == pytest.approx(hist[-1] + d, abs=1e-12)
    assert s[201201] == pytest.approx(hist[-1] + 2 * d, abs=1e-12)
    np.testing.assert_array_equal(snap.values["IP"][: len(hist)], hist)


def test_fill_identity_and_counts(tmp_path):
    start = 200001
    dates = months.span(start, 201012)
    rng = np.random.default_rng(0)
    meta = {"A": SeriesMeta("A", "Target", "DLog", 0), "MVS": SeriesMeta("MVS", "EcAct", "DLog", 3)}
    series = {k: dict(zip(dates, np.exp(rng.normal(0, 0.01, len(dates)).cumsum()).tolist())) for k in meta}
    panel = RealTimePanel.from_series(meta, series)
    snap = fill_missing_tail(panel, 201006)
    assert snap.filled == {"A": 0, "MVS": 3}
    np.testing.assert_array_equal(snap.values["A"], panel.history("A", 201006)[1])
    _, mvs = panel.history("MVS", 201006)
    assert len(snap.values["MVS"]) == len(mvs) + 3
    np.testing.assert_array_equal(snap.values["MVS"][: len(mvs)], mvs)


def test_fill_tags_model_errors(tmp_path):
    meta = {"X": SeriesMeta("X", "EcAct", "DLog", 1)}
    dates = months.span(201001, 201005)
    panel = RealTimePanel.from_series(meta, {"X": dict(zip(dates, [1.0, 2.0, 3.0, 4.0, 5.0]))})
    with pytest.raises(ModelError, match="X"):
        fill_missing_tail(panel, 201006, NowcastModelSpec("AR"))


# -- horse race -----------------------------------------------------------


def _race_panel(seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    dates = months.span(200001, 201512)
    meta = {"IP": SeriesMeta("IP", "EcAct", "DLog", 2), "MVS": SeriesMeta("MVS", "EcAct", "DLog", 3),
            "P": SeriesMeta("P", "Target", "DLog", 0)}
    series = {}
    for k in meta:
        y = np.zeros(len(dates))
        for t in range(1, len(y)):
            y[t] = 0.5 * y[t - 1] + rng.standard_normal()
        series[k] = dict(zip(dates, (scale * (100 + y)).tolist()))
    return RealTimePanel.from_series(meta, series)


def test_race_shape():
    rep = nowcast_horse_race(_race_panel(), [NowcastModelSpec("AR")], window=60, first=201001, last=201212)
    assert rep.variables == ("IP", "MVS")
    assert rep.horizons("IP") == [1, 2]
    assert rep.horizons("MVS") == [1, 2, 3]
    assert not rep.cells[("IP", 1, "RWD")].is_ratio
    assert rep.cells[("IP", 1, "AR")].is_ratio
    assert rep.header() == ["ID", "Horizon", "RW-D", "AR(1)"]


def test_race_all_rwd_is_unity():
    rep = nowcast_horse_race(_race_panel(), [NowcastModelSpec("RWD")], window=60, first=201001, last=201212)
    assert rep.models == ("RWD",)
    panel = _race_panel()
    rep2 = nowcast_horse_race(panel, [NowcastModelSpec("RWD"), NowcastModelSpec("AR")], window=60,
                              first=201001, last=201212)
    for (v, h, m), c in rep2.cells.items():
        if m == "RWD":
            assert c.rmsfe == rep.cells[(v, h, m)].rmsfe


def test_race_ar_beats_rwd_on_ar_data():
    hits = 0
    for s in range(50):
        rep = nowcast_horse_race(_race_panel(s), [NowcastModelSpec("AR")], window=60, variables=["IP"],
                                 first=201101, last=201412)
        hits += rep.cells[("IP", 1, "AR")].value < 1
    assert hits >= 40


def test_race_scale_invariance():
    a = nowcast_horse_race(_race_panel(3), [NowcastModelSpec("AR")], window=60, first=201001, last=201212)
    b = nowcast_horse_race(_race_panel(3, 7.5), [NowcastModelSpec("AR")], window=60, first=201001, last=201212)
    for k, c in a.cells.items():
        if c.is_ratio:
            assert b.cells[k].value == pytest.approx(c.value, rel=1e-8)
        else:
            assert b.cells[k].rmsfe == pytest.approx(7.5 * c.rmsfe, rel=1e-8)


def test_race_requires_vintages():
    with pytest.raises(InsufficientDataError):
        nowcast_horse_race(_race_panel(), [NowcastModelSpec("AR")], window=60, first=201501, last=201506)


def test_race_outputs(tmp_path):
    rep = nowcast_horse_race(_race_panel(), [NowcastModelSpec("AR")], window=60, first=201001, last=201212)
    rep.to_csv(tmp_path / "r.csv")
    rep.to_json(tmp_path / "r.json")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "ID,Horizon,RW-D,AR(1)"
    assert lines[1].startswith("IP,1,")
    assert lines[3] == "IP,3,-,-"
