import numpy as np
import pytest

from metalcast.errors import DegenerateColumnError, DimensionError
from metalcast.factors import extract_factors, standardize_panel, write_factor_paths


def _std(seed, T, N):
    return standardize_panel(np.random.default_rng(seed).standard_normal((T, N)))


def test_standardize_moments():
    x = np.random.default_rng(0).normal(3.0, 2.0, (60, 10))
    sp = standardize_panel(x)
    np.testing.assert_allclose(sp.values.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(sp.values.std(axis=0), 1.0, atol=1e-10)
    np.testing.assert_allclose(sp.means, x.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(sp.sds, x.std(axis=0), atol=1e-12)


def test_standardize_idempotent():
    sp = _std(1, 50, 6)
    np.testing.assert_allclose(standardize_panel(sp.values).values, sp.values, atol=1e-10)


def test_standardize_constant_column():
    x = np.random.default_rng(2).standard_normal((30, 3))
    x[:, 1] = 4.0
    with pytest.raises(DegenerateColumnError, match="b"):
        standardize_panel(x, ids=["a", "b", "c"])


def test_standardize_exclusion():
    rng = np.random.default_rng(3)
    data = {k: rng.standard_normal(40) for k in ("COPPER", "IP", "NO-M", "FX")}
    sp = standardize_panel(data, exclude=["COPPER", "NO-M"])
    assert sp.ids == ("IP", "FX")
    assert sp.excluded_ids == ("COPPER", "NO-M")
    assert sp.values.shape == (40, 2)


def test_loading_normalization_on_random_panels():
    for s in range(100):
        rng = np.random.default_rng(s)
        T, N = int(rng.integers(30, 120)), int(rng.integers(3, 20))
        r = int(rng.integers(1, min(N, 4) + 1))
        fm = extract_factors(_std(s, T, N), r)
        np.testing.assert_allclose(fm.loadings @ fm.loadings.T / N, np.eye(r), atol=1e-8)
        assert np.all(np.diff(fm.eigenvalues) <= 0) and np.all(fm.eigenvalues >= 0)


def test_rank_one_panel():
    rng = np.random.default_rng(4)
    x = np.outer(rng.standard_normal(80), rng.standard_normal(6))
    fm = extract_factors(standardize_panel(x), 2)
    assert fm.eigenvalues[1] < 1e-10
    assert fm.eigenvalues[0] / fm.total_variance == pytest.approx(1.0, abs=1e-10)


def test_full_basis_reconstruction():
    sp = _std(5, 40, 7)
    fm = extract_factors(sp, 7)
    np.testing.assert_allclose(fm.reconstruct(), sp.values, atol=1e-8)
    alt = extract_factors(sp, 7, scale_by_n=False)
    np.testing.assert_allclose(alt.reconstruct(), sp.values, atol=1e-8)
    np.testing.assert_allclose(alt.factors, 7 * fm.factors, atol=1e-10)


def test_eigen_oracle():
    sp = _std(6, 120, 15)
    fm = extract_factors(sp, 2)
    evals, evecs = np.linalg.eig(sp.values.T @ sp.values / 120)
    order = np.argsort(evals.real)[::-1]
    np.testing.assert_allclose(fm.eigenvalues, evals.real[order[:2]], atol=1e-8)
    for i in range(2):
        v = evecs[:, order[i]].real
        w = fm.loadings[i] / np.sqrt(15)
        assert min(np.abs(w - v).max(), np.abs(w + v).max()) < 1e-8


def test_factor_variance_equals_eigenvalues():
    sp = _std(7, 90, 8)
    fm = extract_factors(sp, 3)
    common = fm.reconstruct()
    assert np.trace(common.T @ common / 90) == pytest.approx(fm.eigenvalues.sum(), abs=1e-8)
    np.testing.assert_allclose(fm.factors.T @ fm.factors / 90, np.diag(fm.eigenvalues) / 8, atol=1e-8)
    np.testing.assert_allclose(fm.project(sp.values), fm.factors, atol=1e-12)


def test_sign_rule_and_determinism():
    sp = _std(8, 60, 9)
    a, b = extract_factors(sp, 2), extract_factors(sp, 2)
    assert a.loadings.tobytes() == b.loadings.tobytes()
    for row in a.loadings:
        assert row[np.argmax(np.abs(row))] > 0
    flipped = extract_factors(-sp.values, 2)
    np.testing.assert_allclose(np.abs(flipped.loadings), np.abs(a.loadings), atol=1e-10)


def test_too_many_factors():
    with pytest.raises(DimensionError):
        extract_factors(_std(9, 20, 4), 5)


def test_factor_path_dump(tmp_path):
    fm = extract_factors(_std(10, 3, 4), 2)
    write_factor_paths(tmp_path / "f.csv", [201501, 201502, 201503], fm)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "date,factor_1,factor_2"
    assert lines[1].startswith("2015-01,")
    assert len(lines) == 4
