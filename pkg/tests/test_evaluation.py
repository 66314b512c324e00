import math

import numpy as np
import pytest

from metalcast.errors import DegenerateTestError, EmptySampleError, InsufficientDataError
from metalcast.evaluation import (
    LossMatrix,
    bootstrap_indices,
    cumulative_ratio_path,
    dm_test,
    mcs_procedure,
    ratio_table,
    rmsfe,
)


def _hac_oracle(a, b, h):
    d = np.asarray(a) - np.asarray(b)
    T = len(d)
    dbar = sum(d) / T
    gam = [sum((d[t] - dbar) * (d[t - k] - dbar) for t in range(k, T)) / T for k in range(h)]
    lrv = gam[0] + 2 * sum((1 - k / h) * gam[k] for k in range(1, h))
    return dbar / math.sqrt(lrv / T)


def _dominance_losses(seed, T=120):
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((T, 3)) + 10.0
    base[:, 0] -= 2.0
    return LossMatrix(tuple(range(T)), ("A", "B", "C"), base, 1)


# -- RMSFE ----------------------------------------------------------------


def test_rmsfe_examples():
    assert rmsfe([3, -4]) == pytest.approx(math.sqrt(12.5), abs=1e-12)
    assert rmsfe([0, 0, 0]) == 0.0
    e = np.random.default_rng(0).standard_normal(77)
    assert rmsfe(e) == pytest.approx(math.sqrt(sum(x * x for x in e) / 77), abs=1e-12)
    with pytest.raises(EmptySampleError):
        rmsfe([])


# -- DM -------------------------------------------------------------------


def test_dm_identical_losses():
    x = np.random.default_rng(1).random(50)
    with pytest.raises(DegenerateTestError):
        dm_test(x, x, 1)


def test_dm_alternating_differential():
    d = np.tile([1.0, -1.0], 50)
    res = dm_test(d + 2.0, np.full(100, 2.0), 1)
    assert res.statistic == 0.0 and res.stars == ""


def test_dm_matches_hac_oracle():
    for s in range(20):
        rng = np.random.default_rng(s)
        h = (1, 3, 12)[s % 3]
        a = rng.standard_normal(200) + 1.0
        b = rng.standard_normal(200)
        assert dm_test(a, b, h).statistic == pytest.approx(_hac_oracle(a, b, h), abs=1e-10)


def test_dm_antisymmetry():
    rng = np.random.default_rng(2)
    a, b = rng.random(60), rng.random(60)
    assert dm_test(a, b, 3).statistic == -dm_test(b, a, 3).statistic


def test_dm_stars_and_short_sample():
    rng = np.random.default_rng(3)
    res = dm_test(rng.random(200) + 1.0, rng.random(200), 1)
    assert res.stars == "***" and res.level == 0.01
    with pytest.raises(InsufficientDataError):
        dm_test(np.ones(5), np.zeros(5), 1)


def test_dm_hln_shrinks_statistic():
    rng = np.random.default_rng(4)
    a, b = rng.random(40) + 0.2, rng.random(40)
    assert abs(dm_test(a, b, 6, "hln").statistic) < abs(dm_test(a, b, 6).statistic)


# -- ratio tables ---------------------------------------------------------


def _lm(seed, T=80):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal((T, 3)) * [1.0, 0.9, 1.2]
    return LossMatrix.from_errors(range(T), ("RW-D", "AR(1)", "VAR(1)"), e, 3), e


def test_ratio_table_cells():
    lm, e = _lm(5)
    t = ratio_table(lm, "RW-D", include_benchmark_ratio=True)
    assert t.entries["RW-D"].is_benchmark
    assert t.entries["RW-D"].value == pytest.approx(rmsfe(e[:, 0]), rel=1e-12)
    assert t.ratio("AR(1)") == pytest.approx(rmsfe(e[:, 1]) / rmsfe(e[:, 0]), rel=1e-12)
    assert t.entries["RW-D/self"].value == 1.0
    assert t.entries["RW-D"].formatted().count(".") == 1
    assert t.entries["AR(1)"].formatted().startswith(f"{t.ratio('AR(1)'):.3f}")


def test_ratio_table_homogeneity():
    lm, _ = _lm(6)
    a = ratio_table(lm, "RW-D")
    b = ratio_table(lm.scaled(100.0), "RW-D")
    assert b.entries["RW-D"].value == pytest.approx(10 * a.entries["RW-D"].value, rel=1e-12)
    for m in ("AR(1)", "VAR(1)"):
        assert b.ratio(m) == pytest.approx(a.ratio(m), rel=1e-12)
        assert b.entries[m].dm.statistic == pytest.approx(a.entries[m].dm.statistic, rel=1e-10)


def test_ratio_table_missing_cells():
    lm, _ = _lm(7)
    arr = np.array(lm.losses)
    arr[:10, 1] = np.nan
    t = ratio_table(LossMatrix(lm.dates, lm.models, arr, 3), "RW-D")
    assert t.entries["AR(1)"].n == 70
    with pytest.raises(KeyError):
        ratio_table(lm, "nope")


# -- cumulative paths -----------------------------------------------------


def test_cumpath_final_matches_table_and_oracle():
    lm, _ = _lm(8)
    paths = cumulative_ratio_path(lm, "RW-D", 12)
    t = ratio_table(lm, "RW-D")
    for m, (dates, vals) in paths.items():
        assert dates[0] == lm.dates[12]
        assert abs(vals[-1] - t.ratio(m)) <= 1e-12
        a, b = lm.column(m), lm.column("RW-D")
        for j in (0, 20, 40):
            k = 12 + j + 1
            assert vals[j] == pytest.approx(math.sqrt(a[:k].mean()) / math.sqrt(b[:k].mean()), rel=1e-12)


def test_cumpath_self_is_flat():
    lm, e = _lm(9)
    twin = LossMatrix.from_errors(lm.dates, ("RW-D", "copy"), e[:, [0, 0]], 1)
    _, vals = cumulative_ratio_path(twin, "RW-D", 12)["copy"]
    np.testing.assert_allclose(vals, 1.0, rtol=0, atol=1e-15)


# -- MCS ------------------------------------------------------------------


def test_mcs_singleton():
    lm = LossMatrix((1, 2, 3), ("A",), np.ones((3, 1)))
    res = mcs_procedure(lm, B=100)
    assert res.ssm(0.25) == ("A",) and res.pvalues["A"] == 1.0


def test_mcs_exact_ties():
    x = np.random.default_rng(10).random((60, 1))
    lm = LossMatrix(tuple(range(60)), ("A", "B", "C"), np.repeat(x, 3, axis=1))
    res = mcs_procedure(lm, B=200)
    assert res.pvalues == {"A": 1.0, "B": 1.0, "C": 1.0}


def test_mcs_dominance_monte_carlo():
    in_ssm = low_p = 0
    for s in range(50):
        res = mcs_procedure(_dominance_losses(s), B=2000, block=6, seed=s)
        in_ssm += "A" in res.ssm(0.25)
        low_p += res.pvalues["B"] < 0.05 and res.pvalues["C"] < 0.05
    assert in_ssm == 50
    assert low_p >= 45


def test_mcs_pvalues_monotone_and_nested():
    for s in range(10):
        rng = np.random.default_rng(s)
        L = rng.standard_normal((100, 5)) ** 2 * rng.uniform(0.8, 1.2, 5)
        res = mcs_procedure(LossMatrix(tuple(range(100)), tuple("ABCDE"), L), B=500, seed=s)
        p = [res.pvalues[m] for m in res.elimination_order]
        assert all(x <= y for x, y in zip(p, p[1:]))
        assert p[-1] == 1.0
        assert set(res.ssm(0.25)) <= set(res.ssm(0.10))


def test_mcs_permutation_and_worker_invariance():
    lm = _dominance_losses(3)
    a = mcs_procedure(lm, B=1000, seed=4)
    b = mcs_procedure(lm.subset(("C", "A", "B")), B=1000, seed=4)
    c = mcs_procedure(lm, B=1000, seed=4, workers=8)
    assert a.pvalues == b.pvalues
    assert a.to_dict() == c.to_dict()


def test_mcs_range_statistic():
    res = mcs_procedure(_dominance_losses(5), B=500, statistic="TR")
    assert "A" in res.ssm(0.25)


def test_mcs_errors():
    with pytest.raises(InsufficientDataError):
        mcs_procedure(LossMatrix(tuple(range(8)), ("A", "B"), np.random.default_rng(0).random((8, 2))), block=6)
    with pytest.raises(ValueError):
        mcs_procedure(_dominance_losses(0), statistic="xx")


def test_bootstrap_indices_deterministic_blocks():
    idx = bootstrap_indices(30, 600, 6, 1)
    assert idx.shape == (600, 30)
    assert np.array_equal(idx, bootstrap_indices.__wrapped__(30, 600, 6, 1))
    row = idx[0]
    assert np.all(np.diff(row[:6]) == 1)
    assert idx.min() >= 0 and idx.max() < 30


def test_loss_matrix_validation():
    with pytest.raises(ValueError):
        LossMatrix((1, 2), ("A",), np.ones((3, 1)))
    with pytest.raises(ValueError):
        LossMatrix((1,), ("A",), -np.ones((1, 1)))
