"""Marks, the marked residual process and its empirical covariance ingredients.

For ``i = 1..n`` the marks are

    W1_i = X_i - m_i,        W2_i = (X_i - m_i)^2 - s2_i,

indexed by the lagged value ``lag_i = X_{i-1}``. The cumulative process is
``D_k(x) = n^{-1/2} sum_i Wk_i 1{lag_i <= x}`` and all covariance
estimators are right-continuous step functions of ``x`` with jumps at the
sorted lag values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from . import kernels
from .errors import DataError, StatisticError
from .models import ModelSpec

P_FLOOR = 1e-12


@dataclass
class MarkSeries:
    lag: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    dw1: np.ndarray
    dw2: np.ndarray
    var: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.lag.shape[0]

    @property
    def d(self) -> int:
        return self.dw1.shape[1]

    def w(self, k: int) -> np.ndarray:
        return self.w1 if k == 1 else self.w2

    def dw(self, k: int) -> np.ndarray:
        return self.dw1 if k == 1 else self.dw2


def compute_marks(model: ModelSpec, theta, series) -> MarkSeries:
    """Marks ``W1, W2``, their parameter gradients and the lagged values."""
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        raise DataError("need at least two observations")
    th = model.check_domain(theta)
    f = model.filter(th, x)
    e = f.target - f.mean
    w1 = e
    w2 = e * e - f.var
    dw1 = -f.dmean
    dw2 = -2.0 * e[:, None] * f.dmean - f.dvar
    for label, arr in (("w1", w1), ("w2", w2), ("dw1", dw1), ("dw2", dw2)):
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = int(np.flatnonzero(bad.reshape(arr.shape[0], -1).any(axis=1))[0])
            raise DataError(f"non-finite mark {label} at index {idx + 1}")
    return MarkSeries(f.lag, w1, w2, dw1, dw2, f.var)


def cumulative_process(marks: MarkSeries, x):
    """``(D1(x), D2(x))`` for scalar or array ``x``."""
    order = np.argsort(marks.lag, kind="stable")
    s = marks.lag[order]
    root = math.sqrt(marks.n)
    c1 = np.concatenate(([0.0], np.cumsum(marks.w1[order]))) / root
    c2 = np.concatenate(([0.0], np.cumsum(marks.w2[order]))) / root
    idx = np.searchsorted(s, x, side="right")
    return c1[idx], c2[idx]


class CovEstimates:
    """Empirical covariance ingredients as right-continuous step functions.

    Attributes
    ----------
    sorted_lag : ndarray
        Jump points (sorted lags).
    gamma1, gamma2 : float
        ``K1(+inf)`` and ``K2(+inf)``.
    L1, L2 : float
        ``(1/n) sum_j Kk(lag_j)``.
    sigma0 : ndarray
        Covariance of the influence function (``d x d``).
    """

    def __init__(self, marks: MarkSeries, phi: np.ndarray, sigma0: np.ndarray):
        n = marks.n
        phi = np.asarray(phi, dtype=float)
        if phi.shape[0] != n:
            raise DataError(f"influence has {phi.shape[0]} rows, marks have {n}")
        order = np.argsort(marks.lag, kind="stable")
        self.order = order
        self.n = n
        self.d = marks.d
        self.sorted_lag = marks.lag[order]
        w = np.column_stack((marks.w1, marks.w2))[order]
        dw = np.stack((marks.dw1, marks.dw2), axis=1)[order]  # n x 2 x d
        ph = phi[order]

        def cum(a):
            z = np.zeros((1,) + a.shape[1:])
            return np.concatenate((z, np.cumsum(a, axis=0))) / n

        self._k = cum(np.stack((w[:, 0] ** 2, w[:, 1] ** 2, w[:, 0] * w[:, 1]), axis=1))
        self._gam = cum(-dw)
        self._g = cum(w[:, :, None] * ph[:, None, :])
        self.sigma0 = np.asarray(sigma0, dtype=float)
        self.gamma1 = float(self._k[-1, 0])
        self.gamma2 = float(self._k[-1, 1])
        if not (self.gamma1 > 0 and self.gamma2 > 0):
            raise StatisticError("all marks of one component are zero; statistics undefined")
        at_lags = self._k[self._index(self.sorted_lag)]
        self.L1 = float(at_lags[:, 0].mean())
        self.L2 = float(at_lags[:, 1].mean())

    def _index(self, x):
        return np.searchsorted(self.sorted_lag, x, side="right")

    def _left_index(self, x):
        return np.searchsorted(self.sorted_lag, x, side="left")

    def K1(self, x):
        return self._k[self._index(x), 0]

    def K2(self, x):
        return self._k[self._index(x), 1]

    def K12(self, x):
        return self._k[self._index(x), 2]

    def Kk(self, k: int, x):
        return self._k[self._index(x), k - 1]

    def Kmat(self, x):
        """``[[K1, K12], [K12, K2]]`` at ``x`` (shape ``(..., 2, 2)``)."""
        v = self._k[self._index(x)]
        out = np.empty(v.shape[:-1] + (2, 2))
        out[..., 0, 0] = v[..., 0]
        out[..., 1, 1] = v[..., 1]
        out[..., 0, 1] = out[..., 1, 0] = v[..., 2]
        return out

    def Gamma(self, x):
        """``-(1/n) sum dW_i 1{lag_i <= x}`` (shape ``(..., 2, d)``)."""
        return self._gam[self._index(x)]

    def Gamma_left(self, x):
        """Left limit ``Gamma(x-)``."""
        return self._gam[self._left_index(x)]

    def G(self, x):
        """``(1/n) sum W_i phi_i' 1{lag_i <= x}`` (shape ``(..., 2, d)``)."""
        return self._g[self._index(x)]

    def gamma(self, k: int) -> float:
        return self.gamma1 if k == 1 else self.gamma2

    def L(self, k: int) -> float:
        return self.L1 if k == 1 else self.L2

    @property
    def correlation(self) -> float:
        """``K12(+inf) / sqrt(gamma1 gamma2)``."""
        return float(self._k[-1, 2] / math.sqrt(self.gamma1 * self.gamma2))


def empirical_covariance(marks: MarkSeries, phi, sigma0=None) -> CovEstimates:
    """Covariance ingredients from marks and an influence series.

    ``phi`` may be an ``InfluenceSeries`` or an ``n x d`` array (in which case
    ``sigma0`` defaults to ``phi' phi / n``).
    """
    if hasattr(phi, "phi"):
        sigma0 = phi.sigma0 if sigma0 is None else sigma0
        phi = phi.phi
    phi = np.asarray(phi, dtype=float)
    if sigma0 is None:
        sigma0 = phi.T @ phi / phi.shape[0]
    return CovEstimates(marks, phi, sigma0)


def raw_cvm(marks: MarkSeries) -> tuple[float, float]:
    """Cramer-von Mises statistics ``(S1, S2)``.

    ``Sk = (1/n) sum_ij {1 - F_n(lag_i v lag_j)} Wk_i Wk_j``.
    """
    if marks.n < 2:
        raise DataError("need n >= 2")
    lag = np.ascontiguousarray(marks.lag)
    return (
        float(kernels.cvm_double_sum(lag, np.ascontiguousarray(marks.w1))),
        float(kernels.cvm_double_sum(lag, np.ascontiguousarray(marks.w2))),
    )


@dataclass(frozen=True)
class Combined:
    star: float
    circ: float
    bullet: float
    p_bullet: float
    clamped: bool


def fisher(p1: float, p2: float, floor: float = P_FLOOR) -> tuple[float, float, bool]:
    """Fisher combination ``-2 (ln p1 + ln p2)`` and its chi-square(4) p-value."""
    clamped = p1 < floor or p2 < floor
    a = max(float(p1), floor)
    b = max(float(p2), floor)
    s = -2.0 * (math.log(a) + math.log(b))
    s = max(s, 0.0)
    return s, float(chi2.sf(s, 4)), clamped


def combine(S1, S2, L1, L2, p1, p2, floor: float = P_FLOOR) -> Combined:
    """Sum, max and Fisher combinations of the two marginal statistics."""
    if not (L1 > 0 and L2 > 0):
        raise StatisticError("L1 and L2 must be positive")
    a, b = S1 / L1, S2 / L2
    s, p, clamped = fisher(p1, p2, floor)
    return Combined(a + b, max(a, b), s, p, clamped)
