import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from isakit.prep import (PrepError, PrepReport, bound_outliers, boxcox_normalize, boxcox_transform,
                         fit_boxcox_lambda, preprocess, quartiles, spearman_filter, spearman_matrix)


def hand_quartiles(values):
    """Oracle: linear interpolation between order statistics at (n-1)p."""
    s = sorted(values)
    n = len(s)

    def q(p):
        pos = (n - 1) * p
        lo = int(pos)
        frac = pos - lo
        return s[lo] + frac * (s[min(lo + 1, n - 1)] - s[lo])

    return q(0.25), q(0.5), q(0.75)


def test_quartile_oracle_matches():
    # (1, 2, 3, 4, 5, 100): Q1 = 2.25, median = 3.5, Q3 = 4.75 by hand
    assert hand_quartiles([1, 2, 3, 4, 5, 100]) == (2.25, 3.5, 4.75)
    assert quartiles([1, 2, 3, 4, 5, 100]) == (2.25, 3.5, 4.75)


def test_bound_outliers_examples(caplog):
    out, _ = bound_outliers(np.array([[1.0, 2, 3]]))
    np.testing.assert_array_equal(out, [[1, 2, 3]])
    # linear interpolation gives Q1 = 5, Q3 = 6 here, so the row is bounded but unchanged
    assert hand_quartiles([5, 5, 5, 9]) == (5, 5, 6)
    out, preps = bound_outliers(np.array([[5.0, 5, 5, 9]]))
    np.testing.assert_array_equal(out, [[5, 5, 5, 9]])
    with caplog.at_level(logging.WARNING):
        out, preps = bound_outliers(np.array([[5.0, 5, 5, 5, 9]]))
    np.testing.assert_array_equal(out, [[5, 5, 5, 5, 9]])
    assert preps[0].iqr_zero and "zero IQR" in caplog.text
    out, preps = bound_outliers(np.array([[1.0, 2, 3, 4, 5, 100]]))
    # median + 5 * IQR = 3.5 + 5 * 2.5
    np.testing.assert_array_equal(out, [[1, 2, 3, 4, 5, 16.0]])
    assert (preps[0].clamp_lo, preps[0].clamp_hi) == (-9.0, 16.0)


feature_rows = arrays(float, st.tuples(st.integers(1, 3), st.integers(4, 30)),
                      elements=st.floats(-1e3, 1e3, allow_nan=False))


@given(feature_rows)
def test_bound_outliers_idempotent(F):
    once, _ = bound_outliers(F)
    twice, _ = bound_outliers(once)
    np.testing.assert_array_equal(once, twice)


def test_boxcox_lambda_one_is_a_shift():
    x = np.array([1.0, 2.0, 5.0, 7.0])
    np.testing.assert_allclose(boxcox_transform(x, 1.0), x - 1)
    zt = boxcox_transform(x, 1.0)
    np.testing.assert_allclose((zt - zt.mean()) / zt.std(), (x - x.mean()) / x.std())


def test_boxcox_lambda_zero_is_log():
    x = np.array([1.0, 2.0, 5.0])
    np.testing.assert_allclose(boxcox_transform(x, 0.0), np.log(x))
    np.testing.assert_allclose(boxcox_transform(x, 1e-9), np.log(x))


def test_lognormal_lambda_near_zero():
    x = np.exp(np.random.default_rng(2024).standard_normal(10_000))
    lam = fit_boxcox_lambda(x)
    assert abs(lam) <= 0.15
    # independent oracle: continuous maximum likelihood
    assert lam == pytest.approx(stats.boxcox(x)[1], abs=0.01)


def test_normalize_output_is_standardised(rng):
    F = rng.lognormal(size=(3, 200))
    out, preps = boxcox_normalize(F, ["a", "b", "c"])
    np.testing.assert_allclose(out.mean(axis=1), 0, atol=1e-9)
    np.testing.assert_allclose(out.std(axis=1), 1, atol=1e-9)
    for j, p in enumerate(preps):
        assert p.shift == pytest.approx(1 - F[j].min())
        np.testing.assert_allclose(p.apply(F[j]), out[j], atol=1e-12)


def test_constant_feature_passes_through():
    out, preps = boxcox_normalize(np.array([[3.0, 3.0, 3.0]]), ["c"])
    assert preps[0].lam is None
    np.testing.assert_array_equal(out, [[0, 0, 0]])


@given(arrays(float, st.integers(5, 60), elements=st.floats(0.01, 1e3, allow_nan=False)))
def test_boxcox_is_monotone(x):
    out, _ = boxcox_normalize(x[None, :], ["x"])
    order = np.argsort(x, kind="stable")
    assert np.all(np.diff(out[0, order]) >= 0)


# values on a 0.01 grid stay distinct after the shift, so ranks survive exactly
@given(arrays(np.int64, st.integers(5, 60), elements=st.integers(1, 100_000)))
def test_boxcox_preserves_ranks(k):
    x = k / 100.0
    if np.ptp(x) == 0:
        return
    out, _ = boxcox_normalize(x[None, :], ["x"])
    assert spearman_matrix(out, x[None, :])[0, 0] == pytest.approx(1.0)


def test_spearman_matches_scipy(rng):
    A = rng.standard_normal((3, 40))
    A[1, :10] = 0.5  # ties
    B = rng.standard_normal((2, 40))
    rho = spearman_matrix(A, B)
    for i in range(3):
        for j in range(2):
            assert rho[i, j] == pytest.approx(stats.spearmanr(A[i], B[j]).statistic)


@given(arrays(int, 20, elements=st.integers(-100, 100)), arrays(int, 20, elements=st.integers(-100, 100)))
def test_spearman_monotone_invariance(a, b):
    a, b = a.astype(float), b.astype(float)
    r1 = spearman_matrix(a[None], b[None])[0, 0]
    r2 = spearman_matrix(np.exp(a / 50)[None], (b ** 3 + 2 * b)[None])[0, 0]
    assert r1 == pytest.approx(r2, abs=1e-9)


def test_spearman_filter_examples(rng):
    Y = rng.uniform(size=(2, 50))
    noise = rng.standard_normal(50)
    F = np.vstack([Y[0], -Y[1] + 0.01 * rng.standard_normal(50), noise, Y[0]])
    kept, rho, reasons = spearman_filter(F, Y, ["perf", "neg", "noise", "copy"])
    assert rho[0, 0] == pytest.approx(1.0)
    assert 1 in kept
    assert reasons[2] == "low_rho"
    # exact copy: equal max |rho|, lexicographic order keeps "copy" over "perf"
    assert 3 in kept and reasons[0] == "duplicate_of:copy"


def test_spearman_filter_keeps_moderate_negative_rho():
    # a feature whose rank correlation with MOSA is -0.54 clears the 0.3 floor
    rng = np.random.default_rng(5)
    y = rng.uniform(size=400)
    for noise in np.linspace(0.1, 2, 200):
        x = -y + noise * rng.standard_normal(400)
        if abs(spearman_matrix(x[None], y[None])[0, 0] + 0.54) < 0.01:
            break
    kept, rho, _ = spearman_filter(x[None], y[None], ["ec"])
    assert rho[0, 0] == pytest.approx(-0.54, abs=0.01) and kept == [0]


def test_spearman_filter_needs_three_instances():
    with pytest.raises(PrepError):
        spearman_filter(np.ones((1, 2)), np.ones((1, 2)), ["a"])


@given(st.integers(0, 10_000))
def test_retained_set_has_no_near_duplicates(seed):
    rng = np.random.default_rng(seed)
    Y = rng.uniform(size=(2, 30))
    base = rng.standard_normal((3, 30))
    F = np.vstack([base, base + 0.05 * rng.standard_normal((3, 30)), Y + 0.1 * rng.standard_normal((2, 30))])
    names = [f"f{j}" for j in range(F.shape[0])]
    kept, _, _ = spearman_filter(F, Y, names, floor=0.0)
    rr = spearman_matrix(F[kept])
    off = rr[~np.eye(len(kept), dtype=bool)]
    assert np.all(np.abs(off) < 0.95)


def test_preprocess_report_roundtrip(rng):
    F = rng.lognormal(size=(4, 60))
    Y = rng.uniform(size=(2, 60))
    F[0] = Y[0] * 10 + 1
    Ft, report = preprocess(F, Y, ["a", "b", "c", "d"], ["t1", "t2"])
    assert [f.name for f in report.features] == ["a", "b", "c", "d"]
    assert all(f.retained or f.reason for f in report.features)
    again = PrepReport.from_json(report.to_json())
    for f in again.features:
        j = ["a", "b", "c", "d"].index(f.name)
        np.testing.assert_allclose(f.apply(F[j]), Ft[j], atol=1e-12)
    assert report.to_csv().splitlines()[0] == "feature,lambda,clamp_lo,clamp_hi,retained,reason,max_abs_rho"
