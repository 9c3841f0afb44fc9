"""Parametric conditional mean/variance models.

A model maps parameters ``theta`` and the information state ``I_{i-1}`` to
the conditional mean ``m`` and variance ``s2`` of ``X_i`` together with
their parameter gradients. Every model offers a per-step interface
(`mean`, `var`, `mean_grad`, `var_grad`, `update`, `init_state`) and a
vectorised `filter` over a whole series; the two must agree.

Series convention: for a series ``X_0, ..., X_N`` the filter returns the
``n = N`` usable pairs ``(X_{i-1}, X_i)``, ``i = 1..N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import DataError, DomainError

POSITIVITY_FLOOR = 1e-8


@dataclass(frozen=True)
class ParamVector:
    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        object.__setattr__(self, "values", v)
        if v.size < 1:
            raise DomainError("parameter vector must have at least one component")
        if len(self.names) != v.size:
            raise DomainError(f"{v.size} values but {len(self.names)} names")
        if not np.all(np.isfinite(v)):
            raise DomainError(f"non-finite parameter values {v}")

    def as_dict(self) -> dict[str, float]:
        return {k: float(x) for k, x in zip(self.names, self.values)}


@dataclass(frozen=True)
class InfoState:
    """Recursive information state ``I_{i-1}``.

    ``extra`` carries model-specific numbers, e.g. gradients of the lagged
    conditional variance for GARCH-type recursions.
    """

    lag_x: float
    cond_var: float = 0.0
    lag_innov: float = 0.0
    extra: tuple[float, ...] = ()

    def __post_init__(self):
        if self.cond_var < 0:
            raise DomainError(f"cond_var must be >= 0, got {self.cond_var}")


@dataclass
class Filtered:
    lag: np.ndarray
    target: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    dmean: np.ndarray
    dvar: np.ndarray


class ModelSpec:
    """Base class for conditional mean/variance models.

    ``bounds`` holds one of ``"free"``, ``"positive"`` or ``"capped"`` per
    parameter; ``cap_groups`` lists index groups whose (non-negative)
    components must sum to at most the given cap.
    """

    name: str = "model"
    names: tuple[str, ...] = ()
    bounds: tuple[str, ...] = ()
    cap_groups: tuple[tuple[tuple[int, ...], float], ...] = ()
    requires_positive: bool = False

    @property
    def dim(self) -> int:
        return len(self.names)

    # -- parameters ---------------------------------------------------------
    def params(self, theta) -> ParamVector:
        if isinstance(theta, ParamVector):
            if theta.values.size != self.dim:
                raise DomainError(f"{self.name}: expected {self.dim} parameters")
            return theta
        return ParamVector(np.asarray(theta, dtype=float), self.names)

    def check_domain(self, theta) -> np.ndarray:
        th = self.params(theta).values
        for j, (b, v) in enumerate(zip(self.bounds, th)):
            if b == "positive" and not v > 0:
                raise DomainError(f"{self.name}: {self.names[j]}={v} must be > 0")
            if b == "capped" and v < 0:
                raise DomainError(f"{self.name}: {self.names[j]}={v} must be >= 0")
        for idx, cap in self.cap_groups:
            s = float(np.sum(th[list(idx)]))
            if s > cap + 1e-12:
                group = "+".join(self.names[i] for i in idx)
                raise DomainError(f"{self.name}: {group}={s} exceeds cap {cap}")
        return th

    def sample_interior(self, rng: np.random.Generator) -> np.ndarray:
        """Random parameter comfortably inside the domain (used by tests)."""
        th = np.empty(self.dim)
        for j, b in enumerate(self.bounds):
            th[j] = rng.uniform(0.2, 2.0) if b == "positive" else rng.uniform(-1.0, 1.0)
        for idx, cap in self.cap_groups:
            w = rng.dirichlet(np.ones(len(idx) + 1))
            th[list(idx)] = 0.9 * cap * w[:-1] + 0.01
        return th

    def sample_state(self, rng: np.random.Generator) -> InfoState:
        x = rng.uniform(0.2, 3.0) if self.requires_positive else rng.normal(0, 1.5)
        return InfoState(lag_x=float(x))

    def default_init(self, series: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- per-step interface -------------------------------------------------
    def mean(self, theta: np.ndarray, state: InfoState) -> float:
        raise NotImplementedError

    def var(self, theta: np.ndarray, state: InfoState) -> float:
        raise NotImplementedError

    def mean_grad(self, theta: np.ndarray, state: InfoState) -> np.ndarray:
        raise NotImplementedError

    def var_grad(self, theta: np.ndarray, state: InfoState) -> np.ndarray:
        raise NotImplementedError

    def init_state(self, theta: np.ndarray, series: np.ndarray) -> InfoState:
        return InfoState(lag_x=float(series[0]))

    def update(self, theta: np.ndarray, state: InfoState, x: float) -> InfoState:
        return InfoState(lag_x=float(x))

    # -- whole-series interface ---------------------------------------------
    def filter(self, theta, series) -> Filtered:
        return self.filter_stepwise(theta, series)

    def filter_stepwise(self, theta, series) -> Filtered:
        th = np.asarray(self.params(theta).values)
        x = np.asarray(series, dtype=float)
        n = x.size - 1
        mean = np.empty(n)
        var = np.empty(n)
        dmean = np.empty((n, self.dim))
        dvar = np.empty((n, self.dim))
        state = self.init_state(th, x)
        for i in range(n):
            mean[i] = self.mean(th, state)
            var[i] = self.var(th, state)
            dmean[i] = self.mean_grad(th, state)
            dvar[i] = self.var_grad(th, state)
            state = self.update(th, state, x[i + 1])
        return Filtered(x[:-1].copy(), x[1:].copy(), mean, var, dmean, dvar)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


def eval_conditional(model: ModelSpec, theta, state: InfoState):
    """Conditional mean, variance and their gradients at one state."""
    th = model.check_domain(theta)
    out = (
        model.mean(th, state),
        model.var(th, state),
        np.asarray(model.mean_grad(th, state), dtype=float),
        np.asarray(model.var_grad(th, state), dtype=float),
    )
    labels = ("mean", "var", "mean_grad", "var_grad")
    for label, v in zip(labels, out):
        if not np.all(np.isfinite(v)):
            raise DataError(f"{model.name}: non-finite {label} at state {state}")
    if not out[1] > 0:
        raise DataError(f"{model.name}: non-positive variance {out[1]}")
    return out


# ---------------------------------------------------------------------------
# simple models
# ---------------------------------------------------------------------------


class ConstantVariance(ModelSpec):
    """``m = 0``, ``s2 = c``."""

    name = "constvar"
    names = ("c",)
    bounds = ("positive",)

    def default_init(self, series):
        return np.array([max(np.mean(np.asarray(series)[1:] ** 2), 1e-8)])

    def mean(self, theta, state):
        return 0.0

    def var(self, theta, state):
        return float(theta[0])

    def mean_grad(self, theta, state):
        return np.zeros(1)

    def var_grad(self, theta, state):
        return np.ones(1)

    def filter(self, theta, series):
        th = self.params(theta).values
        x = np.asarray(series, dtype=float)
        n = x.size - 1
        return Filtered(
            x[:-1].copy(), x[1:].copy(), np.zeros(n), np.full(n, th[0]),
            np.zeros((n, 1)), np.ones((n, 1)),
        )


class LocationScale(ModelSpec):
    """``m = mu``, ``s2 = v``."""

    name = "locscale"
    names = ("mu", "v")
    bounds = ("free", "positive")

    def default_init(self, series):
        y = np.asarray(series)[1:]
        return np.array([y.mean(), max(y.var(), 1e-8)])

    def mean(self, theta, state):
        return float(theta[0])

    def var(self, theta, state):
        return float(theta[1])

    def mean_grad(self, theta, state):
        return np.array([1.0, 0.0])

    def var_grad(self, theta, state):
        return np.array([0.0, 1.0])

    def filter(self, theta, series):
        th = self.params(theta).values
        x = np.asarray(series, dtype=float)
        n = x.size - 1
        dm = np.zeros((n, 2))
        dm[:, 0] = 1.0
        dv = np.zeros((n, 2))
        dv[:, 1] = 1.0
        return Filtered(x[:-1].copy(), x[1:].copy(), np.full(n, th[0]), np.full(n, th[1]), dm, dv)


class AR1(ModelSpec):
    """``m = c + phi X_{i-1}``, ``s2 = v``."""

    name = "ar1"
    names = ("c", "phi", "v")
    bounds = ("free", "free", "positive")

    def default_init(self, series):
        x = np.asarray(series, dtype=float)
        Z = np.column_stack((np.ones(x.size - 1), x[:-1]))
        coef, *_ = np.linalg.lstsq(Z, x[1:], rcond=None)
        res = x[1:] - Z @ coef
        return np.array([coef[0], coef[1], max(res.var(), 1e-8)])

    def mean(self, theta, state):
        return float(theta[0] + theta[1] * state.lag_x)

    def var(self, theta, state):
        return float(theta[2])

    def mean_grad(self, theta, state):
        return np.array([1.0, state.lag_x, 0.0])

    def var_grad(self, theta, state):
        return np.array([0.0, 0.0, 1.0])

    def filter(self, theta, series):
        th = self.params(theta).values
        x = np.asarray(series, dtype=float)
        n = x.size - 1
        dm = np.zeros((n, 3))
        dm[:, 0] = 1.0
        dm[:, 1] = x[:-1]
        dv = np.zeros((n, 3))
        dv[:, 2] = 1.0
        return Filtered(
            x[:-1].copy(), x[1:].copy(), th[0] + th[1] * x[:-1], np.full(n, th[2]), dm, dv
        )


class ARCH1(ModelSpec):
    """Pure ARCH(1): ``m = 0``, ``s2 = alpha0 + alpha1 X_{i-1}^2``."""

    name = "arch1"
    names = ("alpha0", "alpha1")
    bounds = ("positive", "capped")
    cap_groups = (((1,), 0.999),)

    def default_init(self, series):
        v = float(np.var(series))
        if not v > 0:
            raise DataError("series has zero variance")
        return np.array([0.7 * v, 0.3])

    def mean(self, theta, state):
        return 0.0

    def var(self, theta, state):
        return float(theta[0] + theta[1] * state.lag_x**2)

    def mean_grad(self, theta, state):
        return np.zeros(2)

    def var_grad(self, theta, state):
        return np.array([1.0, state.lag_x**2])

    def filter(self, theta, series):
        th = self.params(theta).values
        x = np.asarray(series, dtype=float)
        n = x.size - 1
        x2 = x[:-1] ** 2
        dv = np.column_stack((np.ones(n), x2))
        return Filtered(
            x[:-1].copy(), x[1:].copy(), np.zeros(n), th[0] + th[1] * x2, np.zeros((n, 2)), dv
        )


class GARCH11(ModelSpec):
    """Zero-mean GARCH(1,1): ``s2_i = omega + alpha X_{i-1}^2 + beta s2_{i-1}``.

    ``s2_0`` is the sample variance of the series; because the mean is zero
    the lagged innovation at the first step is the observed ``X_0``.
    """

    name = "garch11"
    names = ("omega", "alpha", "beta")
    bounds = ("positive", "capped", "capped")
    cap_groups = (((1, 2), 0.999),)

    def default_init(self, series):
        v = float(np.var(series))
        if not v > 0:
            raise DataError("series has zero variance")
        return np.array([0.1 * v, 0.1, 0.8])

    def init_state(self, theta, series):
        x = np.asarray(series, dtype=float)
        return InfoState(float(x[0]), float(np.var(x)), float(x[0]), (0.0, 0.0, 0.0))

    def sample_state(self, rng):
        # lagged variance treated as given: its parameter gradient is zero
        x = float(rng.normal(0, 1.5))
        return InfoState(x, float(rng.uniform(0.1, 3.0)), x, (0.0,) * 3)

    def mean(self, theta, state):
        return 0.0

    def var(self, theta, state):
        return float(theta[0] + theta[1] * state.lag_innov**2 + theta[2] * state.cond_var)

    def mean_grad(self, theta, state):
        return np.zeros(3)

    def var_grad(self, theta, state):
        base = np.array([1.0, state.lag_innov**2, state.cond_var])
        return base + theta[2] * np.asarray(state.extra)

    def update(self, theta, state, x):
        return InfoState(
            float(x), self.var(theta, state), float(x), tuple(self.var_grad(theta, state))
        )

    def filter(self, theta, series):
        th = self.params(theta).values
        x = np.ascontiguousarray(series, dtype=float)
        var, dvar = kernels.garch_filter(x, th[0], th[1], th[2], float(np.var(x)))
        n = x.size - 1
        return Filtered(x[:-1].copy(), x[1:].copy(), np.zeros(n), var, np.zeros((n, 3)), dvar)


class AR1GARCH11(ModelSpec):
    """AR(1) mean with GARCH(1,1) errors.

    ``m_i = c + phi X_{i-1}``, ``e_i = X_i - m_i``,
    ``s2_i = omega + alpha e_{i-1}^2 + beta s2_{i-1}`` with ``e_0 = 0`` and
    ``s2_0`` the sample variance of the series.
    """

    name = "ar1garch11"
    names = ("c", "phi", "omega", "alpha", "beta")
    bounds = ("free", "free", "positive", "capped", "capped")
    cap_groups = (((3, 4), 0.999),)

    def default_init(self, series):
        x = np.asarray(series, dtype=float)
        c, phi, v = AR1().default_init(x)
        return np.array([c, phi, 0.1 * v, 0.1, 0.8])

    def init_state(self, theta, series):
        x = np.asarray(series, dtype=float)
        return InfoState(float(x[0]), float(np.var(x)), 0.0, (0.0,) * 10)

    def sample_state(self, rng):
        return InfoState(
            float(rng.normal(0, 1.5)), float(rng.uniform(0.1, 3.0)), float(rng.normal()), (0.0,) * 10
        )

    def mean(self, theta, state):
        return float(theta[0] + theta[1] * state.lag_x)

    def var(self, theta, state):
        return float(theta[2] + theta[3] * state.lag_innov**2 + theta[4] * state.cond_var)

    def mean_grad(self, theta, state):
        return np.array([1.0, state.lag_x, 0.0, 0.0, 0.0])

    def var_grad(self, theta, state):
        ex = np.asarray(state.extra)
        dh_prev, de_prev = ex[:5], ex[5:]
        e = state.lag_innov
        base = np.array([0.0, 0.0, 1.0, e * e, state.cond_var])
        return base + 2.0 * theta[3] * e * de_prev + theta[4] * dh_prev

    def update(self, theta, state, x):
        m = self.mean(theta, state)
        de = -self.mean_grad(theta, state)
        dh = self.var_grad(theta, state)
        return InfoState(
            float(x), self.var(theta, state), float(x - m), tuple(dh) + tuple(de)
        )

    def filter(self, theta, series):
        th = self.params(theta).values
        x = np.ascontiguousarray(series, dtype=float)
        mean, var, dmean, dvar = kernels.argarch_filter(
            x, th[0], th[1], th[2], th[3], th[4], float(np.var(x))
        )
        return Filtered(x[:-1].copy(), x[1:].copy(), mean, var, dmean, dvar)


# ---------------------------------------------------------------------------
# Euler-discretised diffusions
# ---------------------------------------------------------------------------


def _fd_grad(fun, theta, x, step=1e-6):
    theta = np.asarray(theta, dtype=float)
    out = np.empty((np.size(x), theta.size))
    for j in range(theta.size):
        h = step * (1.0 + abs(theta[j]))
        tp = theta.copy()
        tm = theta.copy()
        tp[j] += h
        tm[j] -= h
        out[:, j] = (np.asarray(fun(tp, x)) - np.asarray(fun(tm, x))) / (2 * h)
    return out


class EulerSDE(ModelSpec):
    """Conditional moments of the Euler scheme for ``dX = mu dt + s dW``.

    ``m = x + mu(theta, x) delta`` and ``s2 = s(theta, x)^2 delta``.
    """

    def __init__(
        self,
        drift: Callable,
        diffusion: Callable,
        delta: float,
        *,
        names: Sequence[str],
        bounds: Sequence[str],
        drift_grad: Callable | None = None,
        diffusion_grad: Callable | None = None,
        init: Callable | None = None,
        name: str = "sde",
        requires_positive: bool = False,
    ):
        if not delta > 0:
            raise DomainError(f"delta must be > 0, got {delta}")
        self.drift = drift
        self.diffusion = diffusion
        self.delta = float(delta)
        self.names = tuple(names)
        self.bounds = tuple(bounds)
        self._drift_grad = drift_grad
        self._diffusion_grad = diffusion_grad
        self._init = init
        self.name = name
        self.requires_positive = requires_positive

    def drift_grad(self, theta, x):
        if self._drift_grad is not None:
            return np.asarray(self._drift_grad(theta, x), dtype=float).reshape(np.size(x), -1)
        return _fd_grad(self.drift, theta, x)

    def diffusion_grad(self, theta, x):
        if self._diffusion_grad is not None:
            return np.asarray(self._diffusion_grad(theta, x), dtype=float).reshape(
                np.size(x), -1
            )
        return _fd_grad(self.diffusion, theta, x)

    def _sd(self, theta, x):
        s = np.asarray(self.diffusion(theta, x), dtype=float)
        if np.any(~(s > 0)):
            k = int(np.flatnonzero(~(s > 0))[0])
            xv = np.atleast_1d(x)[k]
            raise DomainError(f"{self.name}: diffusion {float(np.atleast_1d(s)[k])} <= 0 at x={xv}")
        return s

    def default_init(self, series):
        if self._init is None:
            raise NotImplementedError(f"{self.name}: no default starting values")
        return np.asarray(self._init(np.asarray(series, dtype=float), self.delta), dtype=float)

    def mean(self, theta, state):
        x = np.array([state.lag_x])
        return float(x[0] + np.ravel(self.drift(theta, x))[0] * self.delta)

    def var(self, theta, state):
        return float(np.ravel(self._sd(theta, np.array([state.lag_x])))[0] ** 2 * self.delta)

    def mean_grad(self, theta, state):
        return self.drift_grad(theta, np.array([state.lag_x]))[0] * self.delta

    def var_grad(self, theta, state):
        x = np.array([state.lag_x])
        s = self._sd(theta, x)
        return 2.0 * s[0] * self.diffusion_grad(theta, x)[0] * self.delta

    def filter(self, theta, series):
        th = self.params(theta).values
        x = np.asarray(series, dtype=float)
        if self.requires_positive and np.any(x[:-1] <= 0):
            raise DomainError(f"{self.name}: requires strictly positive data")
        lag = x[:-1]
        s = self._sd(th, lag)
        mean = lag + np.asarray(self.drift(th, lag)) * self.delta
        var = s**2 * self.delta
        dmean = self.drift_grad(th, lag) * self.delta
        dvar = 2.0 * (s[:, None] * self.diffusion_grad(th, lag)) * self.delta
        return Filtered(lag.copy(), x[1:].copy(), mean, var, dmean, dvar)


def discretize_sde(drift, diffusion, delta, **kwargs) -> EulerSDE:
    """Euler-discretised conditional-moment model of a scalar diffusion."""
    return EulerSDE(drift, diffusion, delta, **kwargs)


def _pos(x):
    return np.maximum(x, POSITIVITY_FLOOR)


def _ls(basis: np.ndarray, dx: np.ndarray, delta: float) -> np.ndarray:
    coef, *_ = np.linalg.lstsq(basis * delta, dx, rcond=None)
    return coef


def _sigma_init(x, drift_vals, f, delta):
    res = np.diff(x) - drift_vals * delta
    s2 = np.mean(res**2 / (f(x[:-1]) ** 2 * delta))
    if not s2 > 0:
        raise DataError("series has zero variance")
    return math.sqrt(s2)


def _linear_drift_init(fshape):
    def init(x, delta):
        lag = x[:-1]
        a, b = _ls(np.column_stack((np.ones_like(lag), lag)), np.diff(x), delta)
        return np.array([a, b, _sigma_init(x, a + b * lag, fshape, delta)])

    return init


def _const(x):
    return np.ones_like(np.asarray(x, dtype=float))


def vasicek(delta: float) -> EulerSDE:
    """``dX = (a + b X) dt + sigma dW``."""
    return discretize_sde(
        lambda th, x: th[0] + th[1] * np.asarray(x),
        lambda th, x: th[2] * _const(x),
        delta,
        names=("a", "b", "sigma"),
        bounds=("free", "free", "positive"),
        drift_grad=lambda th, x: np.column_stack((_const(x), np.asarray(x, float), 0 * _const(x))),
        diffusion_grad=lambda th, x: np.column_stack((0 * _const(x), 0 * _const(x), _const(x))),
        init=_linear_drift_init(_const),
        name="vasicek",
    )


def cir(delta: float) -> EulerSDE:
    """``dX = (a + b X) dt + sigma sqrt(X) dW``."""
    return discretize_sde(
        lambda th, x: th[0] + th[1] * np.asarray(x),
        lambda th, x: th[2] * np.sqrt(_pos(np.asarray(x, float))),
        delta,
        names=("a", "b", "sigma"),
        bounds=("free", "free", "positive"),
        drift_grad=lambda th, x: np.column_stack((_const(x), np.asarray(x, float), 0 * _const(x))),
        diffusion_grad=lambda th, x: np.column_stack(
            (0 * _const(x), 0 * _const(x), np.sqrt(_pos(np.asarray(x, float))))
        ),
        init=_linear_drift_init(lambda x: np.sqrt(_pos(x))),
        name="cir",
    )


def hyperbolic(delta: float) -> EulerSDE:
    """``dX = alpha X / sqrt(1 + X^2) dt + sigma dW``."""

    def shape(x):
        x = np.asarray(x, float)
        return x / np.sqrt(1.0 + x * x)

    def init(x, delta):
        (alpha,) = _ls(shape(x[:-1])[:, None], np.diff(x), delta)
        return np.array([alpha, _sigma_init(x, alpha * shape(x[:-1]), _const, delta)])

    return discretize_sde(
        lambda th, x: th[0] * shape(x),
        lambda th, x: th[1] * _const(x),
        delta,
        names=("alpha", "sigma"),
        bounds=("free", "positive"),
        drift_grad=lambda th, x: np.column_stack((shape(x), 0 * _const(x))),
        diffusion_grad=lambda th, x: np.column_stack((0 * _const(x), _const(x))),
        init=init,
        name="hyperbolic",
    )


def _ait_basis(x):
    x = np.asarray(x, float)
    return np.column_stack((np.ones_like(x), x, 1.0 / x, x * x))


def _ait(delta: float, gamma: float | None, name: str) -> EulerSDE:
    if gamma is None:
        f = _const
    else:
        def f(x):
            return _pos(np.asarray(x, float)) ** gamma

    def init(x, delta):
        coef = _ls(_ait_basis(x[:-1]), np.diff(x), delta)
        return np.concatenate((coef, [_sigma_init(x, _ait_basis(x[:-1]) @ coef, f, delta)]))

    return discretize_sde(
        lambda th, x: _ait_basis(x) @ th[:4],
        lambda th, x: th[4] * f(x),
        delta,
        names=("a0", "a1", "a2", "a3", "sigma"),
        bounds=("free", "free", "free", "free", "positive"),
        drift_grad=lambda th, x: np.column_stack((_ait_basis(x), 0 * _const(x))),
        diffusion_grad=lambda th, x: np.column_stack((np.zeros((np.size(x), 4)), f(x))),
        init=init,
        name=name,
        requires_positive=True,
    )


def ait_sahalia1(delta: float) -> EulerSDE:
    """``dX = (a0 + a1 X + a2/X + a3 X^2) dt + sigma dW``."""
    return _ait(delta, None, "ait1")


def ait_sahalia2(delta: float) -> EulerSDE:
    """``dX = (a0 + a1 X + a2/X + a3 X^2) dt + sigma X^1.5 dW``."""
    return _ait(delta, 1.5, "ait2")


def ckls(delta: float, gamma: float) -> EulerSDE:
    """``dX = kappa (alpha - X) dt + sigma X^gamma dW`` with fixed ``gamma``."""

    def f(x):
        return _pos(np.asarray(x, float)) ** gamma

    def init(x, delta):
        lag = x[:-1]
        a, b = _ls(np.column_stack((np.ones_like(lag), lag)), np.diff(x), delta)
        kappa = -b if abs(b) > 1e-8 else 0.1
        alpha = a / kappa
        return np.array([kappa, alpha, _sigma_init(x, kappa * (alpha - lag), f, delta)])

    name = {0.8: "ckls1", 1.5: "ckls2"}.get(gamma, f"ckls_{gamma:g}")
    return discretize_sde(
        lambda th, x: th[0] * (th[1] - np.asarray(x, float)),
        lambda th, x: th[2] * f(x),
        delta,
        names=("kappa", "alpha", "sigma"),
        bounds=("free", "free", "positive"),
        drift_grad=lambda th, x: np.column_stack(
            (th[1] - np.asarray(x, float), th[0] * _const(x), 0 * _const(x))
        ),
        diffusion_grad=lambda th, x: np.column_stack((0 * _const(x), 0 * _const(x), f(x))),
        init=init,
        name=name,
    )


SDE_FACTORIES: dict[str, Callable[[float], EulerSDE]] = {
    "vasicek": vasicek,
    "hyperbolic": hyperbolic,
    "ait1": ait_sahalia1,
    "cir": cir,
    "ckls1": lambda d: ckls(d, 0.8),
    "ckls2": lambda d: ckls(d, 1.5),
    "ait2": ait_sahalia2,
}

# candidate diffusion families for the interest-rate application
APPLICATION_MODELS = {
    "D1": "vasicek",
    "D2": "hyperbolic",
    "D3": "ait1",
    "D4": "cir",
    "D5": "ckls1",
    "D6": "ckls2",
    "D7": "ait2",
}

DISCRETE_MODELS: dict[str, Callable[[], ModelSpec]] = {
    "constvar": ConstantVariance,
    "locscale": LocationScale,
    "ar1": AR1,
    "arch1": ARCH1,
    "garch11": GARCH11,
    "ar1garch11": AR1GARCH11,
}


def get_model(name: str, delta: float | None = None) -> ModelSpec:
    """Look up a built-in model by name (``D1``..``D7`` map to SDE families)."""
    key = APPLICATION_MODELS.get(name, name)
    if key in DISCRETE_MODELS:
        return DISCRETE_MODELS[key]()
    if key in SDE_FACTORIES:
        if delta is None:
            raise DomainError(f"model {name!r} needs a sampling interval delta")
        return SDE_FACTORIES[key](delta)
    raise DomainError(f"unknown model {name!r}")


def model_names() -> list[str]:
    return sorted(DISCRETE_MODELS) + sorted(SDE_FACTORIES)


# ---------------------------------------------------------------------------
# data-generating processes
# ---------------------------------------------------------------------------

OVERFLOW_GUARD = 1e10

M_EXTRA = {
    "M0": lambda x: 0.0,
    "M1": lambda x: 0.5 * x,
    "M2": lambda x: 0.5 * math.copysign(1.0, x) if x != 0 else 0.0,
    "M3": lambda x: x,
    "M4": lambda x: math.copysign(1.0, x) if x != 0 else 0.0,
}

# (model family, parameter values, x0) for the diffusion DGPs
SDE_DGPS = {
    "N1": ("vasicek", (30.0, -3.0, 5.0), 0.03),
    "N2": ("hyperbolic", (5.0, 5.0), 3.0),
    "N3": ("cir", (1.0, 4.5, 0.75), 3.0),
    "N4": ("ckls1", (1.5, 1.0, 1.5), 5.0),
    "N5": ("ckls2", (1.5, 1.0, 0.5), 5.0),
    "N6": ("ait2", (1.0, 15.0, 0.25, -2.0, 0.5), 5.0),
}

AR1GARCH_DEFAULTS = {"a1": 0.0, "omega": 0.1, "alpha": 0.1, "beta": 0.8}

DGP_KINDS = (
    tuple(M_EXTRA) + ("ar1garch",) + tuple(f"A{k}" for k in range(6)) + tuple(SDE_DGPS) + ("model",)
)


@dataclass(frozen=True)
class DgpSpec:
    """A data-generating process.

    ``burnin`` defaults to 500 for discrete-time DGPs and 0 for diffusions,
    which start from their stated ``x0`` on a grid of mesh ``delta``.
    ``params`` overrides named constants (``a1`` etc. for ``ar1garch``, the
    SDE parameters for ``N*``, ``model``/``theta`` for ``kind="model"``).
    """

    kind: str
    params: dict = field(default_factory=dict)
    burnin: int | None = None
    delta: float | None = None
    x0: float | None = None

    def __post_init__(self):
        if self.kind not in DGP_KINDS:
            raise DomainError(f"unknown DGP kind {self.kind!r}")
        if self.burnin is not None and self.burnin < 0:
            raise DomainError("burnin must be >= 0")
        if self.kind in SDE_DGPS and not (self.delta and self.delta > 0):
            raise DomainError(f"DGP {self.kind} needs delta > 0")

    @property
    def effective_burnin(self) -> int:
        if self.burnin is not None:
            return self.burnin
        return 0 if self.kind in SDE_DGPS else 500

    @property
    def effective_x0(self) -> float:
        if self.x0 is not None:
            return float(self.x0)
        if self.kind in SDE_DGPS:
            return SDE_DGPS[self.kind][2]
        return 0.0


def sde_dgp_model(dgp: DgpSpec) -> tuple[EulerSDE, np.ndarray]:
    family, values, _ = SDE_DGPS[dgp.kind]
    model = SDE_FACTORIES[family](dgp.delta)
    theta = np.array(values, dtype=float)
    for k, v in dgp.params.items():
        if k not in model.names:
            raise DomainError(f"{dgp.kind}: unknown parameter {k!r}")
        theta[model.names.index(k)] = v
    return model, theta


def simulate_path(dgp: DgpSpec, innovations) -> np.ndarray:
    """Run the DGP recursion on given standard innovations.

    Returns the full path ``X_0 = x0, X_1, ..., X_T`` with
    ``T = len(innovations)``; burn-in is not discarded here.
    """
    u = np.asarray(innovations, dtype=float)
    T = u.size
    x = np.empty(T + 1)
    x[0] = dgp.effective_x0
    kind = dgp.kind
    p = dgp.params

    if kind in M_EXTRA:
        extra = M_EXTRA[kind]
        for t in range(1, T + 1):
            xp = x[t - 1]
            h = 1.1 + 0.5 * xp * xp + extra(xp)
            x[t] = math.sqrt(h) * u[t - 1]
            _guard(kind, t, x[t])
        return x

    if kind == "ar1garch" or kind in ("A0", "A1", "A2"):
        if kind == "ar1garch":
            q = {**AR1GARCH_DEFAULTS, **p}
            omega, alpha, beta = q["omega"], q["alpha"], q["beta"]
        else:
            omega, alpha, beta = 0.08, 0.1, 0.85
        h = omega / (1.0 - alpha - beta) if alpha + beta < 1 else omega
        e = 0.0
        for t in range(1, T + 1):
            h = omega + alpha * e * e + beta * h
            e_new = math.sqrt(h) * u[t - 1]
            xp = x[t - 1]
            if kind == "ar1garch":
                x[t] = q["a1"] * xp + e_new
            elif kind == "A0":
                x[t] = 0.02 + 0.02 * xp + e_new
            elif kind == "A1":
                x[t] = 0.02 + 0.02 * xp + 0.5 * e + e_new
            else:
                x[t] = (0.6 * xp if xp <= 1.0 else -0.5 * xp) + e_new
            e = e_new
            _guard(kind, t, x[t])
        return x

    if kind == "A3":
        logh = 0.05
        u_prev = 0.0
        c = math.sqrt(2.0 / math.pi)
        for t in range(1, T + 1):
            logh = 0.025 + 0.5 * logh + 0.25 * (abs(u_prev) - c) - 0.8 * u_prev
            x[t] = math.exp(0.5 * logh) * u[t - 1]
            u_prev = u[t - 1]
            _guard(kind, t, x[t])
        return x

    if kind == "A4":
        u_prev = 0.0
        x_prev2 = x[0]
        for t in range(1, T + 1):
            x[t] = 0.6 * x[t - 1] + 0.7 * u_prev * x_prev2 + u[t - 1]
            x_prev2 = x[t - 1]
            u_prev = u[t - 1]
            _guard(kind, t, x[t])
        return x

    if kind == "A5":
        u_prev = 0.0
        for t in range(1, T + 1):
            x[t] = 0.8 * u_prev * u_prev + u[t - 1]
            u_prev = u[t - 1]
            _guard(kind, t, x[t])
        return x

    if kind in SDE_DGPS:
        model, theta = sde_dgp_model(dgp)
        sq = math.sqrt(model.delta)
        for t in range(1, T + 1):
            xp = np.array([x[t - 1]])
            mu = float(model.drift(theta, xp)[0])
            s = float(np.atleast_1d(model.diffusion(theta, xp))[0])
            x[t] = x[t - 1] + mu * model.delta + s * sq * u[t - 1]
            _guard(kind, t, x[t])
        return x

    # generic: X_t = m(theta, I) + sqrt(s2(theta, I)) u_t
    model: ModelSpec = p["model"]
    theta = model.check_domain(p["theta"])
    state = model.init_state(theta, np.array([x[0], x[0]]))
    for t in range(1, T + 1):
        m = model.mean(theta, state)
        s2 = model.var(theta, state)
        x[t] = m + math.sqrt(max(s2, 0.0)) * u[t - 1]
        _guard(f"model:{model.name}", t, x[t])
        state = model.update(theta, state, x[t])
    return x


def _guard(kind, t, v):
    if not (abs(v) <= OVERFLOW_GUARD):
        from .errors import SimulationError

        raise SimulationError(f"DGP {kind} exploded at step {t} (value {v})")


def simulate_dgp(dgp: DgpSpec, n: int, seed: int) -> np.ndarray:
    """Simulate ``n`` observations after discarding the burn-in."""
    if n < 2:
        raise DomainError("n must be >= 2")
    b = dgp.effective_burnin
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(b + n - 1)
    return simulate_path(dgp, u)[b:]
