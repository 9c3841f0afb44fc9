"""The numba and numpy paths of every hot kernel agree."""

import ctypes
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jointspec import _accel, kernels

pytestmark = pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba not installed")


@given(seed=st.integers(0, 10**6), n=st.integers(2, 200))
def test_garch_filters_agree(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    a = kernels.garch_filter_nb(x, 0.2, 0.15, 0.7, 1.3)
    b = kernels.garch_filter_np(x, 0.2, 0.15, 0.7, 1.3)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-14)
    a = kernels.argarch_filter_nb(x, 0.1, -0.4, 0.2, 0.15, 0.7, 1.3)
    b = kernels.argarch_filter_np(x, 0.1, -0.4, 0.2, 0.15, 0.7, 1.3)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-11, atol=1e-13)


@given(seed=st.integers(0, 10**6), n=st.integers(1, 150), ties=st.booleans())
def test_cvm_double_sum_agree(seed, n, ties):
    rng = np.random.default_rng(seed)
    lag = rng.normal(size=n)
    if ties:
        lag = np.round(lag)
    w = rng.normal(size=n)
    assert kernels.cvm_double_sum_nb(lag, w) == pytest.approx(
        kernels.cvm_double_sum_np(lag, w), rel=1e-10, abs=1e-14)


@given(seed=st.integers(0, 10**6), n=st.integers(1, 120), d=st.integers(1, 4))
def test_nw_ratio_agree(seed, n, d):
    rng = np.random.default_rng(seed)
    lag = rng.normal(size=n)
    num = rng.normal(size=(n, d))
    den = rng.exponential(size=n)
    np.testing.assert_allclose(
        kernels.nw_ratio_nb(lag, num, den, 0.3, 1e-12),
        kernels.nw_ratio_np(lag, num, den, 0.3, 1e-12), rtol=1e-10, atol=1e-12)


@given(seed=st.integers(0, 10**6), n=st.integers(1, 120), r=st.integers(1, 3), ties=st.booleans())
def test_transform_values_agree(seed, n, r, ties):
    rng = np.random.default_rng(seed)
    lag = rng.normal(size=n)
    if ties:
        lag = np.round(lag, 1)
    w = rng.normal(size=n)
    g = rng.normal(size=(n, r))
    a = rng.normal(size=(n, r)) / n
    xs = np.sort(rng.normal(size=17))
    np.testing.assert_allclose(
        kernels.khmaladze_values_nb(lag, w, g, a, xs),
        kernels.khmaladze_values_np(lag, w, g, a, xs), rtol=1e-9, atol=1e-11)


@given(seed=st.integers(0, 10**6), n=st.integers(1, 80), d=st.integers(1, 5))
def test_build_m_agree(seed, n, d):
    rng = np.random.default_rng(seed)
    surv = rng.uniform(size=n)
    w = rng.normal(size=n)
    phi = rng.normal(size=(n, d))
    L = rng.normal(size=(n, d))
    N = rng.normal(size=(d, d))
    N = N @ N.T
    np.testing.assert_allclose(kernels.build_m_nb(surv, w, phi, L, N),
                               kernels.build_m_np(surv, w, phi, L, N), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("mode", [0, 1, 2])
def test_imhof_integrand_agree(mode):
    lam = np.array([1.0, 0.3, 0.05])
    q = 2.5
    fn, buf = kernels.imhof_lowlevel(lam, q, mode)
    cf = kernels._imhof_cfunc.ctypes
    ptr = ctypes.cast(buf.ctypes.data, ctypes.POINTER(ctypes.c_double))
    for u in (1e-3, 0.5, 3.0, 40.0):
        a = 0.5 * np.sum(np.arctan(lam * u))
        rho = np.prod((1 + (lam * u) ** 2) ** 0.25)
        expected = [np.sin(a - q * u / 2), np.sin(a), np.cos(a)][mode] / (u * rho)
        assert cf(u, ptr) == pytest.approx(expected, rel=1e-12, abs=1e-15)
        if mode == 0:
            assert kernels.imhof_integrand_py(u, lam, q) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def _pipeline_pvalues(disable):
    code = (
        "import json, jointspec._accel as a\n"
        "from jointspec.harness import run_test, EngineParams\n"
        "from jointspec.models import DgpSpec, get_model, simulate_dgp\n"
        "x = simulate_dgp(DgpSpec('A0'), 201, 3)\n"
        "r = run_test(x, get_model('ar1garch11'), EngineParams(B=200, m=40), 1)\n"
        "print(json.dumps([a.USE_NUMBA, r.statistics, r.pvalues]))\n"
    )
    env = dict(os.environ, JOINTSPEC_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    import json

    return json.loads(out.stdout)


def test_environment_flag_switches_paths_with_equal_results():
    on = _pipeline_pvalues(False)
    off = _pipeline_pvalues(True)
    assert on[0] is True and off[0] is False
    for a, b in ((on[1], off[1]), (on[2], off[2])):
        for key in a:
            for stat, v in a[key].items():
                if isinstance(v, dict):
                    for s2, v2 in v.items():
                        assert v2 == pytest.approx(b[key][stat][s2], rel=1e-7, abs=1e-9)
                else:
                    assert v == pytest.approx(b[key][stat], rel=1e-7, abs=1e-9)
