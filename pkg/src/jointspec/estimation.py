"""Gaussian quasi-maximum-likelihood fitting and influence functions.

The average log-likelihood

    (1/n) sum_i -1/2 [log(2 pi s2_i) + (X_i - m_i)^2 / s2_i]

is maximised by BFGS over an unconstrained reparameterisation of the
model's parameter domain. The influence function of the estimator is the
usual sandwich term ``phi_i = H^{-1} s_i`` with ``s_i`` the per-observation
score and ``H`` the average negative Hessian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .errors import DataError, DomainError, EstimationError
from .models import Filtered, ModelSpec, ParamVector

LOG2PI = math.log(2.0 * math.pi)
_EDGE = 1e-6


class Reparam:
    """Bijection between natural parameters and an unconstrained vector.

    ``positive`` components use ``log``; each cap group ``(idx, cap)`` uses a
    logistic map for the group total (in ``(0, cap)``) and, when the group
    has several members, logistic shares of that total.
    """

    def __init__(self, model: ModelSpec):
        self.dim = model.dim
        self.positive = [j for j, b in enumerate(model.bounds) if b == "positive"]
        self.groups = [(list(idx), float(cap)) for idx, cap in model.cap_groups]
        grouped = {j for idx, _ in self.groups for j in idx}
        for j, b in enumerate(model.bounds):
            if b == "capped" and j not in grouped:
                raise DomainError(f"{model.name}: capped parameter {j} has no cap group")
        for idx, _ in self.groups:
            if len(idx) > 2:
                raise DomainError("cap groups of more than two members are not supported")

    def to_natural(self, u: np.ndarray) -> np.ndarray:
        th = np.array(u, dtype=float)
        th[self.positive] = np.exp(u[self.positive])
        for idx, cap in self.groups:
            total = cap * expit(u[idx[0]])
            if len(idx) == 1:
                th[idx[0]] = total
            else:
                share = expit(u[idx[1]])
                th[idx[0]] = total * share
                th[idx[1]] = total * (1.0 - share)
        return th

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        """``d theta / d u`` (dim x dim)."""
        J = np.eye(self.dim)
        for j in self.positive:
            J[j, j] = math.exp(u[j])
        for idx, cap in self.groups:
            s0 = expit(u[idx[0]])
            total = cap * s0
            dtotal = cap * s0 * (1.0 - s0)
            if len(idx) == 1:
                J[idx[0], idx[0]] = dtotal
            else:
                a, b = idx
                s1 = expit(u[b])
                ds1 = s1 * (1.0 - s1)
                J[a, a] = dtotal * s1
                J[a, b] = total * ds1
                J[b, a] = dtotal * (1.0 - s1)
                J[b, b] = -total * ds1
        return J

    def to_unconstrained(self, theta: np.ndarray) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        u = th.copy()
        u[self.positive] = np.log(np.maximum(th[self.positive], 1e-300))
        for idx, cap in self.groups:
            vals = np.maximum(th[idx], 0.0)
            total = float(np.clip(vals.sum() / cap, _EDGE, 1.0 - _EDGE))
            u[idx[0]] = logit(total)
            if len(idx) == 2:
                s = vals.sum()
                share = vals[0] / s if s > 0 else 0.5
                u[idx[1]] = logit(float(np.clip(share, _EDGE, 1.0 - _EDGE)))
        return u


@dataclass
class FitResult:
    theta_hat: ParamVector
    loglik: float
    converged: bool
    iterations: int
    hessian: np.ndarray
    grad_norm: float = float("nan")
    init_loglik: float = float("nan")
    restarts: int = 0
    message: str = ""
    hessian_cond: float = float("nan")


@dataclass
class InfluenceSeries:
    phi: np.ndarray
    sigma0: np.ndarray
    scores: np.ndarray = field(repr=False, default=None)
    min_eig: float = 0.0


def _pieces(model: ModelSpec, theta, series) -> Filtered:
    f = model.filter(theta, series)
    if not (np.all(np.isfinite(f.var)) and np.all(f.var > 0)):
        raise DataError(f"{model.name}: non-positive or non-finite variance")
    return f


def loglik_terms(model: ModelSpec, theta, series) -> np.ndarray:
    """Per-observation Gaussian log-likelihood contributions."""
    f = _pieces(model, theta, series)
    e = f.target - f.mean
    return -0.5 * (LOG2PI + np.log(f.var) + e * e / f.var)


def score_terms(model: ModelSpec, theta, series) -> np.ndarray:
    """Per-observation scores ``d l_i / d theta`` (n x d)."""
    f = _pieces(model, theta, series)
    return _scores(f)


def _scores(f: Filtered) -> np.ndarray:
    e = f.target - f.mean
    r = e * e / f.var
    return (e / f.var)[:, None] * f.dmean + (0.5 * (r - 1.0) / f.var)[:, None] * f.dvar


def average_loglik(model, theta, series) -> float:
    return float(np.mean(loglik_terms(model, theta, series)))


def numeric_hessian(model: ModelSpec, theta, series, step: float = 1e-4) -> np.ndarray:
    """Average negative Hessian from central differences of the mean score."""
    th = np.asarray(theta, dtype=float)
    d = th.size
    H = np.empty((d, d))
    base = None
    for j in range(d):
        h = step * (1.0 + abs(th[j]))
        tp = th.copy()
        tm = th.copy()
        tp[j] += h
        tm[j] -= h
        try:
            gp = score_terms(model, tp, series).mean(axis=0)
            gm = score_terms(model, tm, series).mean(axis=0)
            H[:, j] = -(gp - gm) / (2 * h)
        except (DataError, FloatingPointError):
            # one-sided difference away from the edge of the variance domain
            if base is None:
                base = score_terms(model, th, series).mean(axis=0)
            try:
                gp = score_terms(model, tp, series).mean(axis=0)
                H[:, j] = -(gp - base) / h
            except DataError:
                gm = score_terms(model, tm, series).mean(axis=0)
                H[:, j] = -(base - gm) / h
    return 0.5 * (H + H.T)


def qmle_fit(
    model: ModelSpec,
    series,
    init=None,
    *,
    gtol: float = 1e-6,
    maxiter: int = 500,
    restarts: int = 3,
    hessian_step: float = 1e-4,
    seed: int = 0,
) -> FitResult:
    """Gaussian QMLE of ``model`` on ``series``.

    Parameters
    ----------
    model : ModelSpec
    series : array_like
        Observations ``X_0, ..., X_N``.
    init : array_like or ParamVector, optional
        Starting values; the model's method-of-moments default otherwise.
    gtol : float
        Convergence tolerance on the gradient in the unconstrained space.
    restarts : int
        Extra jittered attempts when the first run does not converge.

    Returns
    -------
    FitResult
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise DataError("series must be a finite one-dimensional array")
    n = x.size - 1
    if n < 10 * model.dim:
        raise DataError(f"need at least {10 * model.dim} observations, got {n}")
    if not np.var(x) > 0:
        raise DataError("series is constant")
    if init is None:
        init = model.default_init(x)
    th0 = model.check_domain(init)
    rp = Reparam(model)
    u0 = rp.to_unconstrained(th0)
    try:
        ll0 = average_loglik(model, rp.to_natural(u0), x)
    except DataError as exc:
        raise EstimationError(f"log-likelihood undefined at the starting values: {exc}")

    def objective(u):
        th = rp.to_natural(u)
        try:
            f = _pieces(model, th, x)
        except (DataError, FloatingPointError):
            return 1e10, np.zeros_like(u)
        e = f.target - f.mean
        ll = -0.5 * (LOG2PI + np.log(f.var) + e * e / f.var)
        val = -float(np.mean(ll))
        if not math.isfinite(val):
            return 1e10, np.zeros_like(u)
        g = _scores(f).mean(axis=0)
        return val, -(rp.jacobian(u).T @ g)

    best = None
    rng = np.random.default_rng(seed)
    total_iter = 0
    attempts = 0
    start = u0
    with np.errstate(all="ignore"):
        for attempt in range(restarts + 1):
            attempts = attempt
            res = minimize(
                objective, start, jac=True, method="BFGS",
                options={"gtol": gtol, "maxiter": maxiter},
            )
            total_iter += int(res.nit)
            gnorm = float(np.linalg.norm(res.jac, np.inf))
            ok = bool(np.isfinite(res.fun) and res.fun < 1e10 and gnorm <= gtol * 10)
            if best is None or res.fun < best[0].fun:
                best = (res, ok, gnorm)
            if ok:
                break
            start = u0 + rng.normal(scale=0.5, size=u0.size)
    res, ok, gnorm = best
    theta = rp.to_natural(res.x)
    ll = average_loglik(model, theta, x)
    if ll < ll0:
        # never report a fit worse than the starting point
        theta, ll, ok = rp.to_natural(u0), ll0, False
    H = numeric_hessian(model, theta, x, hessian_step)
    try:
        cond = float(np.linalg.cond(H))
    except np.linalg.LinAlgError:
        cond = float("inf")
    return FitResult(
        theta_hat=ParamVector(theta, model.names),
        loglik=ll,
        converged=ok,
        iterations=total_iter,
        hessian=H,
        grad_norm=float(np.linalg.norm(score_terms(model, theta, x).mean(axis=0))),
        init_loglik=ll0,
        restarts=attempts,
        message=str(res.message),
        hessian_cond=cond,
    )


def influence(
    model: ModelSpec, fit: FitResult, series, *, cond_cap: float = 1e12
) -> InfluenceSeries:
    """Influence function ``phi_i = H^{-1} s_i`` and ``Sigma0 = mean(phi phi')``."""
    if not fit.converged:
        raise EstimationError("fit did not converge; refit before computing influence")
    H = fit.hessian
    cond = float(np.linalg.cond(H)) if np.all(np.isfinite(H)) else math.inf
    if not cond <= cond_cap:
        raise EstimationError(
            f"Hessian is ill-conditioned (cond={cond:.3g}); "
            "refit or use a longer series"
        )
    s = score_terms(model, fit.theta_hat.values, series)
    phi = np.linalg.solve(H, s.T).T
    sigma0 = phi.T @ phi / phi.shape[0]
    sigma0 = 0.5 * (sigma0 + sigma0.T)
    w, V = np.linalg.eigh(sigma0)
    min_eig = float(w.min())
    if min_eig < 0:
        sigma0 = (V * np.maximum(w, 0.0)) @ V.T
    return InfluenceSeries(phi=phi, sigma0=sigma0, scores=s, min_eig=min_eig)
