import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metalcast import months
from metalcast.errors import (
    CoverageError,
    DomainError,
    FirstReleaseError,
    IntegrityError,
    MissingVintageError,
    ParseError,
)
from metalcast.synth import IP_KNOWN, ip_first_release, write_ip_fixture, write_panel
from metalcast.vintages import (
    RealTimePanel,
    SeriesMeta,
    Vintage,
    apply_transform,
    deflate_nominal,
    ingest_series_csv,
    ingest_vintage_csv,
    load_manifest,
    merge_first_release,
    ragged_edge_profile,
    rebase_index,
)

IP_META = SeriesMeta("IP", "EcAct", "DLog", 2)


def _series(start, values):
    return dict(zip(months.span(start, months.add(start, len(values) - 1)), values))


# -- months ---------------------------------------------------------------


def test_month_arithmetic_roundtrip():
    assert months.add(201211, 3) == 201302
    assert months.add(201301, -1) == 201212
    assert months.diff(201202, 201111) == 3
    assert months.parse("2015-04") == 201504
    assert months.parse("2015-04-17") == 201504
    assert months.fmt(199201) == "1992-01"
    assert len(months.span(199201, 201202)) == 242


def test_month_rejects_bad_text():
    with pytest.raises(ValueError):
        months.parse("2015/04")
    with pytest.raises(ValueError):
        months.ym(2015, 13)


# -- ingestion ------------------------------------------------------------


def test_ip_fixture_ingests_as_four_vintages(tmp_path):
    vs = ingest_vintage_csv(write_ip_fixture(tmp_path), IP_META)
    assert [v.as_of for v in vs] == [201201, 201202, 201203, 201204]
    assert vs[0].last == 201111
    assert vs[-1].last == 201202


def test_ip_fixture_first_release_diagonal(tmp_path):
    fr = merge_first_release(ingest_vintage_csv(write_ip_fixture(tmp_path), IP_META))
    assert fr[201111] == 155.94
    assert fr[201112] == 156.59
    assert fr[201201] == 156.63
    assert fr == ip_first_release()
    for d, v in IP_KNOWN.items():
        assert fr[d] == v


def test_empty_file_gives_no_vintages(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    assert ingest_vintage_csv(p) == []


def test_duplicated_as_of_column(tmp_path):
    p = tmp_path / "dup.csv"
    p.write_text("obs_date,2012-01,2012-01\n2011-11,1.0,1.0\n")
    with pytest.raises(IntegrityError):
        ingest_vintage_csv(p)


def test_malformed_row_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("obs_date,2012-01\n2011-10,1.0\n2011-11,abc\n")
    with pytest.raises(ParseError) as info:
        ingest_vintage_csv(p)
    assert info.value.line == 3


def test_interior_gap_is_rejected(tmp_path):
    p = tmp_path / "gap.csv"
    p.write_text("obs_date,2012-01\n2011-09,1.0\n2011-10,\n2011-11,1.0\n")
    with pytest.raises(IntegrityError):
        ingest_vintage_csv(p)


def test_lag_mismatch_is_rejected(tmp_path):
    p = tmp_path / "lag.csv"
    p.write_text("obs_date,2012-01\n2011-11,1.0\n2011-12,1.0\n")
    with pytest.raises(IntegrityError):
        ingest_vintage_csv(p, IP_META)


def test_daily_rows_are_averaged(tmp_path):
    p = tmp_path / "daily.csv"
    p.write_text("date,value\n2020-01-02,10\n2020-01-03,20\n2020-02-03,5\n")
    s = ingest_series_csv(p, SeriesMeta("X", "Target", "DLog", 0, "DailyAveraged"))
    assert s == {202001: 15.0, 202002: 5.0}


# -- merge / rebase -------------------------------------------------------


def test_single_vintage_merge_is_identity():
    v = Vintage(201201, _series(201101, [1.0, 2.0, 3.0]))
    assert merge_first_release([v]) == dict(v.values)


def test_conflicting_overlap_raises():
    a = Vintage(201201, _series(201101, [1.0, 2.0]))
    b = Vintage(201202, _series(201101, [1.0, 2.5, 3.0]))
    with pytest.raises(FirstReleaseError):
        merge_first_release([a, b])


def test_merge_is_idempotent():
    a = Vintage(201201, _series(201101, [1.0, 2.0]))
    b = Vintage(201202, _series(201101, [1.0, 2.0, 3.0]))
    merged = merge_first_release([a, b])
    assert merge_first_release([Vintage(201203, merged)]) == merged


def test_rebase_two_point_and_constant():
    (v,) = rebase_index([Vintage(201201, _series(201101, [200.0, 220.0]))])
    assert list(v.values.values()) == pytest.approx([100.0, 110.0], abs=1e-12)
    (c,) = rebase_index([Vintage(201201, _series(201101, [5.0, 5.0, 5.0]))])
    assert list(c.values.values()) == [100.0, 100.0, 100.0]


def test_rebase_rejects_non_positive():
    with pytest.raises(DomainError):
        rebase_index([Vintage(201201, _series(201101, [1.0, 0.0]))])


def test_rebase_preserves_log_growth():
    rng = np.random.default_rng(3)
    x = np.exp(rng.normal(0, 0.2, 24).cumsum()) * 37.0
    (v,) = rebase_index([Vintage(201201, _series(201001, x.tolist()))])
    y = np.array(list(v.values.values()))
    assert y[0] == pytest.approx(100.0, abs=1e-12)
    np.testing.assert_allclose(np.diff(np.log(y)), np.diff(np.log(x)), atol=1e-10)


# -- transforms / deflation -----------------------------------------------


def test_transforms_analytic():
    s = _series(202001, [1.0, math.e, math.e ** 2])
    assert list(apply_transform(s, "DLog").values()) == pytest.approx([1.0, 1.0], abs=1e-12)
    assert list(apply_transform(s, "D2Log").values()) == pytest.approx([0.0], abs=1e-12)
    assert list(apply_transform(s, "Log").values()) == pytest.approx([0.0, 1.0, 2.0], abs=1e-12)
    assert apply_transform(s, "None") == s
    with pytest.raises(DomainError):
        apply_transform(_series(202001, [1.0, -1.0]), "Log")


def test_dlog_roundtrip():
    rng = np.random.default_rng(11)
    x = np.exp(rng.normal(0, 0.05, 100).cumsum())
    g = np.array(list(apply_transform(_series(200001, x.tolist()), "DLog").values()))
    rebuilt = np.exp(np.concatenate(([0.0], np.cumsum(g))))
    np.testing.assert_allclose(rebuilt, x / x[0], rtol=1e-10)


def test_deflate_base_and_double():
    cpi = {201502: 1.0, 201503: 2.0}
    real = deflate_nominal({201502: 100.0, 201503: 100.0}, cpi, 201502, "copper")
    assert real.values == {201502: 100.0, 201503: 50.0}


def test_deflate_missing_cpi():
    with pytest.raises(CoverageError):
        deflate_nominal({201504: 100.0}, {201502: 1.0}, 201502)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1.0, 1e5), min_size=2, max_size=30), st.lists(st.floats(0.5, 3.0), min_size=30, max_size=30))
def test_deflate_roundtrip(prices, cpis):
    nominal = _series(201502, prices)
    cpi = _series(201502, cpis[: len(prices)])
    real = deflate_nominal(nominal, cpi, 201502)
    for d, r in real.values.items():
        assert r * cpi[d] / cpi[201502] == pytest.approx(nominal[d], rel=1e-10)


# -- panel ----------------------------------------------------------------


def test_ragged_edge_on_ip_fixture(tmp_path):
    vs = ingest_vintage_csv(write_ip_fixture(tmp_path), IP_META)
    panel = RealTimePanel.from_vintages({"IP": IP_META}, {"IP": vs})
    for as_of in (201201, 201202, 201203, 201204):
        assert ragged_edge_profile(panel, as_of) == {"IP": 2}
    with pytest.raises(MissingVintageError):
        ragged_edge_profile(panel, 201205)


def test_panel_history_is_truncated_release(tmp_path):
    vs = ingest_vintage_csv(write_ip_fixture(tmp_path), IP_META)
    panel = RealTimePanel.from_vintages({"IP": IP_META}, {"IP": vs})
    start, hist = panel.history("IP", 201203)
    assert start == 199201
    assert hist[-1] == 156.63
    assert not hist.flags.writeable
    assert panel.vintage("IP", 201202).values == vs[1].values


def test_synthetic_manifest_lags(tmp_path):
    panel = load_manifest(write_panel(tmp_path)).load_panel()
    prof = ragged_edge_profile(panel, 201601)
    assert prof["IP"] == 2
    assert prof["MVS"] == 3
    assert prof["NO-A"] == 3
    assert prof["ALU-V"] == 0
    assert prof["COPPER"] == 0
