"""Martingale transform of the marked residual process.

The transform removes the parameter-estimation drift from ``D_k`` using a
kernel estimate of the score density ``g_k = dGamma_k / dK_k``. In its
empirical form

    T_k(x) = n^{-1/2} sum_{j: lag_j <= x} (Wk_j - a_j . R_j),
    a_j = Wk_j^2 g_j' A(lag_j-)^{-1} / n,
    R_j = sum_{i: lag_i >= lag_j} Wk_i g_i,
    A(lag_j-) = (1/n) sum_{l: lag_l >= lag_j} g_l g_l' Wk_l^2,

which is exactly zero on any step function of the form
``sum_i Wk_i^2 c'g_i 1{lag_i <= x} / n``. The transformed process is
asymptotically a Brownian motion in ``K_k``-time on ``(-inf, x0]``.

Directions of ``g`` that carry no information (for instance ``g_1 == 0``
when the mean has no parameters) are projected out before inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import StatisticError
from .quadform import QuadFormSpec, imhof_tail
from .residuals import CovEstimates, MarkSeries, fisher

DEN_FLOOR = 1e-12
BM_TERMS = 200
CORR_WARN = 0.2


@dataclass
class ScoreEstimate:
    g1: np.ndarray
    g2: np.ndarray
    bandwidth: float
    kernel: str = "gaussian"

    def g(self, k: int) -> np.ndarray:
        return self.g1 if k == 1 else self.g2


@dataclass
class TransformState:
    k: int
    x0: float
    basis: np.ndarray  # d x r, orthonormal directions kept
    A_inv: np.ndarray  # n x r x r, zero for excluded points (original order)
    included: np.ndarray  # boolean mask in original order
    excluded: int
    rank: int
    A_x0_cond: float = 1.0
    warnings: list = field(default_factory=list)


def default_bandwidth(lag: np.ndarray, c: float = 1.0) -> float:
    """Rule-of-thumb ``c * sd(lag) * n^{-1/5}``."""
    sd = float(np.std(lag, ddof=1)) if lag.size > 1 else 0.0
    if not sd > 0:
        raise StatisticError("lagged values are constant; bandwidth undefined")
    return c * sd * lag.size ** (-0.2)


def nw_ratio(lag, num, den, h: float, floor: float = DEN_FLOOR) -> np.ndarray:
    """Gaussian-kernel ratio ``sum num_i K_h(lag_i - t) / sum den_i K_h(lag_i - t)``.

    Evaluated at every ``t`` in ``lag``; ``num`` is ``n x d``.
    """
    if not h > 0:
        raise StatisticError("bandwidth must be > 0")
    return kernels.nw_ratio(
        np.ascontiguousarray(lag, dtype=float),
        np.ascontiguousarray(num, dtype=float),
        np.ascontiguousarray(den, dtype=float),
        float(h),
        float(floor),
    )


def estimate_g(marks: MarkSeries, cov: CovEstimates | None = None,
               bandwidth: float | None = None, c: float = 1.0) -> ScoreEstimate:
    """Kernel estimate of the score density at every lagged value."""
    h = default_bandwidth(marks.lag, c) if bandwidth is None else float(bandwidth)
    n = marks.n
    g1 = nw_ratio(marks.lag, -marks.dw1 / n, marks.w1**2 / n, h)
    g2 = nw_ratio(marks.lag, -marks.dw2 / n, marks.w2**2 / n, h)
    return ScoreEstimate(g1, g2, h)


def x0_from_quantile(lag: np.ndarray, q: float) -> float:
    """The ``ceil(q n)``-th order statistic of ``lag``."""
    s = np.sort(lag)
    i = int(math.ceil(q * s.size - 1e-9)) - 1
    return float(s[min(max(i, 0), s.size - 1)])


def tail_gram(marks: MarkSeries, g: ScoreEstimate, k: int, x) -> np.ndarray:
    """``A_k(x) = (1/n) sum_j g_j g_j' (Wk_j)^2 1{lag_j > x}`` for scalar or array ``x``."""
    G = g.g(k)
    w2 = marks.w(k) ** 2
    x = np.asarray(x, dtype=float)
    mask = marks.lag[None, :] > x.reshape(-1)[:, None]
    out = np.einsum("xj,j,jp,jq->xpq", mask, w2, G, G) / marks.n
    return out.reshape(x.shape + out.shape[1:])


def _tail_gram(lag, w, g):
    """``(1/n) sum_{l: lag_l >= lag_j} g_l g_l' w_l^2`` for every ``j`` (original order)."""
    n, r = g.shape
    order = np.argsort(lag, kind="stable")
    s = lag[order]
    atoms = (w[order] ** 2)[:, None, None] * g[order][:, :, None] * g[order][:, None, :]
    tail = np.cumsum(atoms[::-1], axis=0)[::-1] / n
    first = np.searchsorted(s, s, side="left")
    out = np.empty_like(tail)
    out[order] = tail[first]
    return out


def build_transform(marks: MarkSeries, g: ScoreEstimate, cov: CovEstimates | None = None,
                    x0_quantile: float = 0.95, k: int = 2, cond_cap: float = 1e8,
                    rank_tol: float | None = None) -> TransformState:
    """Inverse Gram matrices needed by the transform of component ``k``.

    Directions of ``g`` whose share of the full Gram matrix is below
    ``rank_tol`` (default ``1 / cond_cap``) are projected out. ``x0`` is
    lowered, never below the median lag, until the Gram matrix of the
    points above it passes ``cond_cap``.
    """
    if not 0.5 < x0_quantile < 1:
        raise StatisticError("x0_quantile must lie in (0.5, 1)")
    lag = marks.lag
    w = marks.w(k)
    G = g.g(k)
    n, d = G.shape
    x0 = x0_from_quantile(lag, x0_quantile)
    full = (G * w[:, None] ** 2).T @ G / n
    evals, evecs = np.linalg.eigh(0.5 * (full + full.T))
    top = float(evals.max()) if evals.size else 0.0
    if rank_tol is None:
        rank_tol = 1.0 / cond_cap
    keep = evals > rank_tol * top if top > 0 else np.zeros(d, bool)
    basis = evecs[:, keep]
    r = basis.shape[1]
    if r == 0:
        return TransformState(k, x0, basis, np.zeros((n, 0, 0)), lag <= x0, 0, 0)
    Gr = G @ basis
    A = _tail_gram(lag, w, Gr)
    x0_req = x0
    x0, cond0 = _admissible_x0(lag, A, x0, cond_cap)
    if x0 is None:
        raise StatisticError(
            f"component {k}: the Gram matrix above every candidate x0 down to the "
            f"median fails the condition cap (cond={cond0:.3g}); use a smaller "
            "x0_quantile or a larger sample"
        )
    A_inv = np.zeros((n, r, r))
    cand = np.flatnonzero(lag <= x0)
    ev = np.linalg.eigvalsh(A[cand])
    lo, hi = ev[:, 0], ev[:, -1]
    ok = (lo > 0) & (hi <= cond_cap * np.where(lo > 0, lo, 1.0))
    idx = cand[ok]
    A_inv[idx] = np.linalg.inv(A[idx])
    included = np.zeros(n, dtype=bool)
    included[idx] = True
    excluded = int(np.sum(lag <= x0_req) - included.sum())
    state = TransformState(k, x0, basis, A_inv, included, excluded, r, cond0)
    if x0 < x0_req:
        state.warnings.append(
            f"component {k}: x0 lowered from {x0_req:.4g} to {x0:.4g} by the condition cap"
        )
    if excluded:
        state.warnings.append(f"component {k}: {excluded} points excluded by the condition cap")
    return state


def _cond(mats: np.ndarray) -> np.ndarray:
    ev = np.linalg.eigvalsh(mats)
    lo, hi = ev[..., 0], ev[..., -1]
    return np.where(lo > 0, hi / np.where(lo > 0, lo, 1.0), np.inf)


def _admissible_x0(lag, A, x0, cond_cap):
    """Largest lag value ``<= x0`` (and at least the median) whose strict tail
    Gram matrix passes the condition cap.

    ``A[j]`` holds the tail Gram at ``lag_j-``; the strict tail above a lag
    value ``s`` is the left-limit Gram of the next larger lag value.
    """
    order = np.argsort(lag, kind="stable")
    srt = lag[order]
    s = np.unique(lag)
    candidates = s[(s <= x0) & (s >= np.median(lag))][::-1]
    if candidates.size == 0:
        candidates = s[s <= x0][-1:]
    nxt = np.searchsorted(s, candidates, side="right")
    conds = np.full(candidates.size, np.inf)
    has_next = nxt < s.size
    if has_next.any():
        idx = order[np.searchsorted(srt, s[nxt[has_next]], side="left")]
        conds[has_next] = _cond(A[idx])
    ok = np.flatnonzero(conds <= cond_cap)
    if ok.size:
        return float(candidates[ok[0]]), float(conds[ok[0]])
    return None, float(conds[0])


def transform(marks: MarkSeries, state: TransformState, g: ScoreEstimate, k: int | None = None,
              w: np.ndarray | None = None) -> np.ndarray:
    """Transformed process evaluated at every lagged value (original order).

    ``w`` replaces the marks being transformed while keeping the Gram
    matrices of ``state``; it defaults to the marks of component ``k``.
    """
    k = state.k if k is None else k
    wk = marks.w(k)
    target = wk if w is None else np.asarray(w, dtype=float)
    lag = np.ascontiguousarray(marks.lag)
    n = lag.size
    if state.rank == 0:
        gr = np.zeros((n, 1))
        a = np.zeros((n, 1))
    else:
        gr = g.g(k) @ state.basis
        a = (wk**2 / n)[:, None] * np.einsum("jq,jqp->jp", gr, state.A_inv)
    return kernels.khmaladze_values(
        lag, np.ascontiguousarray(target), np.ascontiguousarray(gr), np.ascontiguousarray(a), lag
    )


def transformed_cvm(values: np.ndarray, marks: MarkSeries, state: TransformState,
                    cov: CovEstimates | None = None, k: int | None = None,
                    normalize: str = "included") -> float:
    """Cramer-von Mises functional of the transformed process up to ``x0``.

    ``normalize="included"`` divides by the squared variance mass of the
    included points, so the truncated statistic keeps the Brownian-motion
    law on ``[0, 1]``; ``normalize="gamma"`` divides by ``gamma_k^2``.
    """
    k = state.k if k is None else k
    w2 = marks.w(k) ** 2
    n = marks.n
    inc = state.included
    if normalize == "gamma":
        if cov is None:
            gamma = float(np.mean(w2))
        else:
            gamma = cov.gamma(k)
        norm = gamma
    elif normalize == "included":
        norm = float(np.sum(w2[inc]) / n)
    else:
        raise StatisticError(f"unknown normalisation {normalize!r}")
    if not norm > 0:
        raise StatisticError(f"component {k}: zero variance mass; statistic undefined")
    return float(np.sum(values[inc] ** 2 * w2[inc]) / (n * norm**2))


@lru_cache(maxsize=None)
def bm_eigenvalues(terms: int = BM_TERMS) -> np.ndarray:
    j = np.arange(1, terms + 1)
    lam = 1.0 / ((j - 0.5) * math.pi) ** 2
    lam.flags.writeable = False
    return lam


def bm_cvm_pvalue(s: float) -> float:
    """Upper tail of the integrated squared Brownian motion on ``[0, 1]``."""
    return imhof_tail(QuadFormSpec(bm_eigenvalues()), s)


def bm_pair_pvalue(s: float) -> float:
    """Upper tail of the sum of two independent integrated squared Brownian motions."""
    lam = bm_eigenvalues()
    return imhof_tail(QuadFormSpec(np.concatenate((lam, lam))), s)


@dataclass
class TransformResult:
    S1: float
    S2: float
    Sstar: float
    Scirc: float
    Sbullet: float
    pvalues: dict
    states: tuple
    warnings: list


def transform_test(marks: MarkSeries, cov: CovEstimates, *, bandwidth_c: float = 1.0,
                   x0_quantile: float = 0.95, cond_cap: float = 1e8,
                   normalize: str = "included") -> TransformResult:
    """Transformed statistics and their asymptotic p-values."""
    g = estimate_g(marks, cov, c=bandwidth_c)
    stats = []
    states = []
    warns = []
    for k in (1, 2):
        st = build_transform(marks, g, cov, x0_quantile, k, cond_cap)
        vals = transform(marks, st, g, k)
        stats.append(transformed_cvm(vals, marks, st, cov, k, normalize))
        states.append(st)
        warns.extend(st.warnings)
    s1, s2 = stats
    p1, p2 = bm_cvm_pvalue(s1), bm_cvm_pvalue(s2)
    sstar = s1 + s2
    scirc = max(s1, s2)
    pcirc = 1.0 - (1.0 - bm_cvm_pvalue(scirc)) ** 2
    sb, pb, _ = fisher(p1, p2)
    if abs(cov.correlation) > CORR_WARN:
        warns.append(
            f"mark correlation {cov.correlation:.2f} exceeds {CORR_WARN}; "
            "combined p-values assume independent components"
        )
    pv = {
        "S1": p1,
        "S2": p2,
        "Sstar": bm_pair_pvalue(sstar),
        "Scirc": float(min(max(pcirc, 0.0), 1.0)),
        "Sbullet": pb,
    }
    return TransformResult(s1, s2, sstar, scirc, sb, pv, tuple(states), warns)
