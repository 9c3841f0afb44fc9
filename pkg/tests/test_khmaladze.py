import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_marks
from jointspec.errors import StatisticError
from jointspec.khmaladze import (
    ScoreEstimate,
    bm_cvm_pvalue,
    build_transform,
    estimate_g,
    nw_ratio,
    tail_gram,
    transform,
    transform_test,
    transformed_cvm,
)
from jointspec.models import get_model
from jointspec.residuals import MarkSeries, compute_marks, cumulative_process, empirical_covariance


def scalar_marks(lag, w):
    lag = np.asarray(lag, float)
    w = np.asarray(w, float)
    n = lag.size
    return MarkSeries(lag, w, w.copy(), np.zeros((n, 1)), np.zeros((n, 1)))


def direct_transform(lag, w, g, A_inv, included, x):
    """Nested-sum evaluation of the transformed process at ``x``."""
    n = lag.size
    total = 0.0
    for i in range(n):
        corr = 0.0
        for j in range(n):
            if included[j] and lag[j] <= min(x, lag[i]):
                corr += w[j] ** 2 * g[j] @ A_inv[j] @ g[i]
        total += w[i] * ((lag[i] <= x) - corr / n)
    return total / math.sqrt(n)


# -- score density ---------------------------------------------------------

def test_zero_gradients_give_zero_score(rng):
    m = random_marks(rng, 30)
    m = MarkSeries(m.lag, m.w1, m.w2, np.zeros((30, 2)), np.zeros((30, 2)))
    g = estimate_g(m)
    np.testing.assert_array_equal(g.g1, 0.0)
    np.testing.assert_array_equal(g.g2, 0.0)


def test_two_point_ratio_by_hand():
    lag = np.array([0.0, 1.0])
    num = np.array([[0.3], [-0.1]])
    den = np.array([0.5, 2.0])
    h = 0.7
    k = math.exp(-0.5 / h**2)
    expected = [(0.3 + -0.1 * k) / (0.5 + 2.0 * k), (0.3 * k - 0.1) / (0.5 * k + 2.0)]
    np.testing.assert_allclose(nw_ratio(lag, num, den, h)[:, 0], expected, rtol=1e-12)
    with pytest.raises(StatisticError):
        nw_ratio(lag, num, den, 0.0)


def test_location_model_score_density(rng):
    v = 2.5
    x = rng.normal(1.0, math.sqrt(v), size=4001)
    model = get_model("locscale")
    marks = compute_marks(model, (1.0, v), x)
    g = estimate_g(marks)
    cov = empirical_covariance(marks, np.zeros((4000, 2)))
    inner = np.abs(marks.lag - 1.0) < 1.5 * math.sqrt(v)
    assert np.max(np.abs(g.g1[inner, 0] - 1 / cov.gamma1)) < 0.15 / v
    np.testing.assert_allclose(g.g1[inner, 0], 1 / v, rtol=0.15)


# -- Gram matrices ---------------------------------------------------------

def test_scalar_gram_identity(rng):
    m = scalar_marks(rng.normal(size=25), rng.normal(size=25))
    g = ScoreEstimate(np.ones((25, 1)), np.ones((25, 1)), 1.0)
    cov = empirical_covariance(m, np.zeros((25, 1)))
    x = np.concatenate((np.sort(m.lag), [-10.0, 10.0]))
    np.testing.assert_allclose(tail_gram(m, g, 1, x)[:, 0, 0], cov.gamma1 - cov.K1(x), atol=1e-14)


@given(seed=st.integers(0, 10**6))
def test_gram_monotone(seed):
    rng = np.random.default_rng(seed)
    m = random_marks(rng, 30)
    g = ScoreEstimate(rng.normal(size=(30, 3)), rng.normal(size=(30, 3)), 1.0)
    x = np.sort(rng.normal(size=8))
    A = tail_gram(m, g, 2, x)
    for a, b in zip(A, A[1:]):
        assert np.linalg.eigvalsh(a - b).min() >= -1e-8


def test_three_point_cached_inverses():
    lag = np.array([1.0, 2.0, 3.0])
    w = np.array([1.0, 2.0, 0.5])
    gv = np.array([[2.0], [1.0], [3.0]])
    m = scalar_marks(lag, w)
    st_ = build_transform(m, ScoreEstimate(gv, gv, 1.0), x0_quantile=0.9, k=1)
    # the strict tail above lag 3 is empty, so x0 drops to the next admissible value
    assert st_.x0 == 2.0
    atoms = gv[:, 0] ** 2 * w**2 / 3
    a1 = atoms.sum()
    a2 = atoms[1:].sum()
    np.testing.assert_array_equal(st_.included, [True, True, False])
    basis = st_.basis[0, 0] ** 2
    assert st_.A_inv[0, 0, 0] == pytest.approx(1 / (a1 * basis), rel=1e-12)
    assert st_.A_inv[1, 0, 0] == pytest.approx(1 / (a2 * basis), rel=1e-12)
    assert any("lowered" in w for w in st_.warnings)


def test_condition_cap_holds_at_included_points(rng):
    m = random_marks(rng, 120, d=3)
    g = ScoreEstimate(rng.normal(size=(120, 3)), rng.normal(size=(120, 3)), 1.0)
    st_ = build_transform(m, g, k=2, cond_cap=1e4)
    A = tail_gram(m, g, 2, m.lag - 1e-12)  # left limits at the jump points
    for j in np.flatnonzero(st_.included):
        Ar = st_.basis.T @ A[j] @ st_.basis
        assert np.linalg.cond(Ar) <= 1e4 * (1 + 1e-9)
        np.testing.assert_allclose(st_.A_inv[j] @ Ar, np.eye(st_.rank), atol=1e-8)
    assert np.all(m.lag[st_.included] <= st_.x0)


def test_singular_gram_raises():
    n = 20
    lag = np.arange(n, dtype=float)
    gv = np.zeros((n, 2))
    gv[:, 0] = 1.0
    gv[: n // 2, 1] = np.linspace(1, 2, n // 2)  # second direction only below the median
    m = MarkSeries(lag, np.ones(n), np.ones(n), np.zeros((n, 2)), np.zeros((n, 2)))
    with pytest.raises(StatisticError, match="x0_quantile"):
        build_transform(m, ScoreEstimate(gv, gv, 1.0), k=1)


def test_quantile_bounds():
    m = scalar_marks(np.arange(10.0), np.ones(10))
    g = ScoreEstimate(np.ones((10, 1)), np.ones((10, 1)), 1.0)
    for q in (0.5, 1.0, 0.2):
        with pytest.raises(StatisticError):
            build_transform(m, g, x0_quantile=q)


# -- transform -------------------------------------------------------------

def test_zero_score_transform_is_identity(rng):
    m = random_marks(rng, 40)
    g = ScoreEstimate(np.zeros((40, 2)), np.zeros((40, 2)), 1.0)
    for k in (1, 2):
        st_ = build_transform(m, g, k=k)
        vals = transform(m, st_, g, k)
        np.testing.assert_allclose(vals, cumulative_process(m, m.lag)[k - 1], atol=1e-12)


@given(seed=st.integers(0, 10**6), d=st.integers(1, 3))
def test_annihilation_identity(seed, d):
    rng = np.random.default_rng(seed)
    n = 60
    m = random_marks(rng, n, d=d)
    g = ScoreEstimate(rng.normal(size=(n, d)), rng.normal(size=(n, d)), 1.0)
    for k in (1, 2):
        st_ = build_transform(m, g, k=k)
        for _ in range(20):
            c = rng.normal(size=d)
            target = np.sqrt(n) * m.w(k) ** 2 * (g.g(k) @ c) / n
            vals = transform(m, st_, g, k, w=target)
            assert np.max(np.abs(vals[st_.included])) <= 1e-8


def test_three_point_transform_by_hand():
    lag = np.array([0.5, -1.0, 2.0])
    w = np.array([1.5, -0.5, 2.0])
    gv = np.array([[1.0], [2.0], [0.5]])
    m = scalar_marks(lag, w)
    g = ScoreEstimate(gv, gv, 1.0)
    st_ = build_transform(m, g, x0_quantile=0.9, k=1)
    A_inv = np.zeros((3, 1, 1))
    for j in range(3):
        if st_.included[j]:
            A_inv[j, 0, 0] = 3.0 / np.sum((gv[:, 0] ** 2 * w**2)[lag >= lag[j]])
    vals = transform(m, st_, g, 1)
    for i, x in enumerate(lag):
        assert vals[i] == pytest.approx(direct_transform(lag, w, gv, A_inv, st_.included, x), abs=1e-10)
    s = transformed_cvm(vals, m, st_, k=1)
    inc = st_.included
    expected = np.sum(vals[inc] ** 2 * w[inc] ** 2) / (3 * (np.sum(w[inc] ** 2) / 3) ** 2)
    assert s == pytest.approx(expected, rel=1e-12)
    s_gamma = transformed_cvm(vals, m, st_, k=1, normalize="gamma")
    assert s_gamma == pytest.approx(np.sum(vals[inc] ** 2 * w[inc] ** 2) / (3 * np.mean(w**2) ** 2), rel=1e-12)


def test_transformed_cvm_constant_process(rng):
    m = random_marks(rng, 50)
    g = ScoreEstimate(np.zeros((50, 2)), np.zeros((50, 2)), 1.0)
    st_ = build_transform(m, g, k=1)
    c = 0.7
    vals = np.full(50, c)
    w2 = m.w1**2
    g_inc = np.sum(w2[st_.included]) / 50
    s = transformed_cvm(vals, m, st_, k=1, normalize="gamma")
    assert s == pytest.approx(c**2 * g_inc / np.mean(w2) ** 2, rel=1e-12)


def test_transformed_cvm_zero_marks():
    m = scalar_marks(np.arange(10.0), np.zeros(10))
    g = ScoreEstimate(np.zeros((10, 1)), np.zeros((10, 1)), 1.0)
    st_ = build_transform(m, g, k=1)
    for norm in ("included", "gamma"):
        with pytest.raises(StatisticError):
            transformed_cvm(np.zeros(10), m, st_, k=1, normalize=norm)


@given(seed=st.integers(0, 10**6), c=st.floats(0.01, 100.0))
def test_statistic_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    n = 80
    m = random_marks(rng, n)
    scaled = MarkSeries(m.lag, c * m.w1, c * m.w2, c * m.dw1, c * m.dw2)
    out = []
    for marks in (m, scaled):
        g = estimate_g(marks, bandwidth=0.4)
        st_ = build_transform(marks, g, k=2)
        out.append(transformed_cvm(transform(marks, st_, g, 2), marks, st_, k=2, normalize="gamma"))
    assert out[1] == pytest.approx(out[0], rel=1e-8)


# -- Brownian-motion law and combinations ----------------------------------

def test_bm_pvalue_values_and_monotonicity():
    assert bm_cvm_pvalue(0.0) == 1.0
    assert abs(bm_cvm_pvalue(1.2) - 0.10) <= 0.003
    assert abs(bm_cvm_pvalue(1.657) - 0.05) <= 0.003
    assert abs(bm_cvm_pvalue(2.8) - 0.01) <= 0.002
    s = np.linspace(0.01, 4, 40)
    p = [bm_cvm_pvalue(v) for v in s]
    assert all(b < a for a, b in zip(p, p[1:]))


def test_bm_law_first_moment():
    # E int W^2 = 1/2 = integral of the tail
    s = np.linspace(0, 10, 801)
    p = np.array([bm_cvm_pvalue(v) for v in s])
    assert np.trapezoid(p, s) == pytest.approx(0.5, abs=2e-3)


def test_transform_test_combinations(rng):
    from jointspec.estimation import influence, qmle_fit
    from jointspec.models import DgpSpec, simulate_dgp

    x = simulate_dgp(DgpSpec("M0"), 301, 5)
    model = get_model("arch1")
    fit = qmle_fit(model, x)
    marks = compute_marks(model, fit.theta_hat, x)
    cov = empirical_covariance(marks, influence(model, fit, x))
    res = transform_test(marks, cov)
    assert res.Sstar == pytest.approx(res.S1 + res.S2)
    assert res.Scirc == max(res.S1, res.S2)
    assert res.Sbullet == pytest.approx(-2 * (math.log(res.pvalues["S1"]) + math.log(res.pvalues["S2"])))
    assert all(0 <= p <= 1 for p in res.pvalues.values())
    assert res.pvalues["Scirc"] == pytest.approx(1 - (1 - bm_cvm_pvalue(res.Scirc)) ** 2)
