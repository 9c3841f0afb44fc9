"""Quadratic forms of Gaussian vectors and the quadrature-node p-value engine.

``imhof_tail`` evaluates ``P(sum_r lam_r Z_r^2 > q)`` by numerical
inversion of the characteristic function,

    P = 1/2 + (1/pi) int_0^inf sin(theta(u)) / (u rho(u)) du,
    theta(u) = 1/2 sum arctan(lam_r u) - q u / 2,
    rho(u)   = prod (1 + lam_r^2 u^2)^(1/4).

The numeric engine replaces the Cramer-von Mises integral of the limiting
Gaussian process by an equally weighted sum over ``m`` empirical quantile
nodes, whose covariance is estimated from the data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import kernels
from .errors import StatisticError
from .residuals import CovEstimates, MarkSeries, fisher

TAIL_EPS = 1e-7
_HEAD = 50.0
CLIP_TOL = 1e-6


@dataclass
class QuadFormSpec:
    eigenvalues: np.ndarray
    clipped_mass: float = 0.0

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).reshape(-1)
        if np.any(lam < 0):
            raise StatisticError("eigenvalues must be non-negative; use from_matrix to clip")
        object.__setattr__(self, "eigenvalues", lam)

    @classmethod
    def from_matrix(cls, S: np.ndarray, tol: float = CLIP_TOL) -> "QuadFormSpec":
        """Eigenvalues of a symmetric matrix with negative ones clipped at 0."""
        S = 0.5 * (S + S.T)
        try:
            lam = np.linalg.eigvalsh(S)
        except np.linalg.LinAlgError as exc:
            raise StatisticError(f"eigenvalue solver failed: {exc}")
        neg = lam[lam < 0]
        clipped = float(neg.sum())
        trace = float(np.trace(S))
        if clipped < -tol * max(abs(trace), 1e-300):
            raise StatisticError(
                f"clipped negative eigenvalue mass {clipped:.3g} exceeds tolerance "
                f"(trace {trace:.3g})"
            )
        return cls(np.maximum(lam, 0.0), clipped)


def _truncation(lam: np.ndarray, eps: float) -> float:
    """Smallest ``U`` whose integrand tail bound is below ``eps``."""
    s = np.sort(lam)[::-1]
    best = math.inf
    logprod = 0.0
    for k, v in enumerate(s[:60], start=1):
        logprod += 0.5 * math.log(v)
        # (2/k) U^{-k/2} / (pi prod sqrt(lam)) = eps over the top-k weights
        logU = (2.0 / k) * (math.log(2.0 / (k * math.pi * eps)) - logprod)
        best = min(best, math.exp(min(logU, 700.0)))
    return best


def _integrand_py(mode):
    def f(u, lam, q):
        lu = lam * u
        a = 0.5 * np.sum(np.arctan(lu))
        rho = math.exp(0.25 * np.sum(np.log1p(lu * lu)))
        if mode == 0:
            return math.sin(a - 0.5 * q * u) / (u * rho)
        if mode == 1:
            return math.sin(a) / (u * rho)
        return math.cos(a) / (u * rho)

    return f


def _integrands(lam, q):
    """Full, sin-part and cos-part integrands (compiled when possible)."""
    if kernels.imhof_lowlevel is not None and kernels.USE_NUMBA:
        out = [kernels.imhof_lowlevel(lam, q, mode) for mode in (0, 1, 2)]
        return [o[0] for o in out], (), [o[1] for o in out]
    return [_integrand_py(mode) for mode in (0, 1, 2)], (lam, q), None


def imhof_tail(spec, q: float, eps: float = TAIL_EPS) -> float:
    """Upper tail ``P(sum lam_r Z_r^2 > q)`` by Imhof inversion.

    Parameters
    ----------
    spec : QuadFormSpec or array_like
        Non-negative weights.
    q : float
        Threshold, ``q >= 0``.
    eps : float
        Bound on the neglected integrand tail.
    """
    lam = spec.eigenvalues if isinstance(spec, QuadFormSpec) else np.asarray(spec, float)
    lam = lam[lam > 0]
    q = float(q)
    if q < 0:
        raise StatisticError("threshold q must be >= 0")
    if lam.size == 0:
        return 1.0 if q == 0 else 0.0
    if q == 0:
        return 1.0
    # the tail probability is invariant under joint rescaling of lam and q
    top = float(lam.max())
    lam = np.ascontiguousarray(lam / top)
    q = q / top
    lam = lam[lam > 1e-15]
    U = _truncation(lam, eps)
    head = min(U, _HEAD)
    fns, args, _keep = _integrands(lam, q)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        total, _ = integrate.quad(fns[0], 0.0, head, args=args, limit=500,
                                  epsabs=1e-11, epsrel=1e-10)
        if U > head:
            w = 0.5 * q
            if w * (U - head) < 200 * math.pi:
                extra, _ = integrate.quad(fns[0], head, U, args=args, limit=2000,
                                          epsabs=1e-11, epsrel=1e-10)
            else:
                # sin(A - w u) = sin(A) cos(w u) - cos(A) sin(w u)
                c, _ = integrate.quad(fns[1], head, np.inf, args=args, weight="cos",
                                      wvar=w, limlst=100, epsabs=1e-11)
                s, _ = integrate.quad(fns[2], head, np.inf, args=args, weight="sin",
                                      wvar=w, limlst=100, epsabs=1e-11)
                extra = c - s
            total += extra
    p = 0.5 + total / math.pi
    return float(min(max(p, 0.0), 1.0))


# ---------------------------------------------------------------------------
# node covariance
# ---------------------------------------------------------------------------


@dataclass
class NodeCovariance:
    nodes: np.ndarray
    sigma: np.ndarray
    weights: np.ndarray
    m: int
    L1: float
    L2: float
    warnings: list = field(default_factory=list)

    def block(self, k: int, l: int) -> np.ndarray:
        m = self.m
        return self.sigma[(k - 1) * m:k * m, (l - 1) * m:l * m]


def node_positions(n: int, m: int) -> np.ndarray:
    """0-based order-statistic index ``ceil(k n / m) - 1`` for ``k = 1..m``."""
    k = np.arange(1, m + 1)
    return np.ceil(k * n / m - 1e-9).astype(int) - 1


def block_covariance(cov: CovEstimates, x, y) -> np.ndarray:
    """Limit covariance ``K(x ^ y) - Gam(x) G(y)' - G(x) Gam(y)' + Gam(x) S0 Gam(y)'``."""
    gx, gy = cov.Gamma(x), cov.Gamma(y)
    hx, hy = cov.G(x), cov.G(y)
    return (
        cov.Kmat(min(x, y)) - gx @ hy.T - hx @ gy.T + gx @ cov.sigma0 @ gy.T
    )


def build_node_covariance(cov: CovEstimates, marks: MarkSeries | None = None, m: int = 100
                          ) -> NodeCovariance:
    """Covariance of the residual process at ``m`` empirical-quantile nodes.

    The returned ``sigma`` is ``2m x 2m``: the first ``m`` rows belong to the
    mean component, the last ``m`` to the variance component.
    """
    if m < 2:
        raise StatisticError("m must be >= 2")
    nodes = cov.sorted_lag[node_positions(cov.n, m)]
    Km = cov.Kmat(nodes)  # m x 2 x 2
    F = cov.Gamma(nodes).transpose(1, 0, 2).reshape(2 * m, cov.d)
    H = cov.G(nodes).transpose(1, 0, 2).reshape(2 * m, cov.d)
    idx = np.minimum.outer(np.arange(m), np.arange(m))
    K = np.empty((2 * m, 2 * m))
    for a in range(2):
        for b in range(2):
            K[a * m:(a + 1) * m, b * m:(b + 1) * m] = Km[idx, a, b]
    FH = F @ H.T
    sigma = K - FH - FH.T + F @ cov.sigma0 @ F.T
    sigma = 0.5 * (sigma + sigma.T)
    a = np.full(m, 1.0 / m)
    weights = np.concatenate((a / cov.L1, a / cov.L2))
    return NodeCovariance(nodes, sigma, weights, m, cov.L1, cov.L2)


def _weighted(S: np.ndarray, w: np.ndarray) -> np.ndarray:
    r = np.sqrt(w)
    return r[:, None] * S * r[None, :]


def numeric_pvalues(ncov: NodeCovariance, stats, cov: CovEstimates | None = None) -> dict:
    """p-values of ``S1, S2, Sstar, Scirc`` and ``Sbullet`` from the node covariance.

    ``stats`` is ``(S1, S2, Sstar, Scirc)``; ``Sstar`` and ``Scirc`` must use the
    same ``L1, L2`` as ``ncov``.
    """
    S1, S2, Sstar, Scirc = (float(v) for v in stats)
    m = ncov.m
    a = np.full(m, 1.0 / m)
    q1 = QuadFormSpec.from_matrix(_weighted(ncov.block(1, 1), a))
    q2 = QuadFormSpec.from_matrix(_weighted(ncov.block(2, 2), a))
    qs = QuadFormSpec.from_matrix(_weighted(ncov.sigma, ncov.weights))
    p1 = imhof_tail(q1, S1)
    p2 = imhof_tail(q2, S2)
    pstar = imhof_tail(qs, Sstar)
    c1 = 1.0 - imhof_tail(q1, Scirc * ncov.L1)
    c2 = 1.0 - imhof_tail(q2, Scirc * ncov.L2)
    pcirc = float(min(max(1.0 - c1 * c2, 0.0), 1.0))
    sb, pb, _ = fisher(p1, p2)
    return {
        "S1": p1,
        "S2": p2,
        "Sstar": pstar,
        "Scirc": pcirc,
        "Sbullet": pb,
        "Sbullet_value": sb,
        "clipped_mass": min(q1.clipped_mass, q2.clipped_mass, qs.clipped_mass),
    }
