"""Multiplier bootstrap for the Cramer-von Mises statistics.

The kernel matrix ``M`` is built once; each draw only needs a quadratic
form ``z' M z / n`` in an i.i.d. multiplier vector ``z``. With left limits
taken at the jump points,

    M_ij = W_i W_j (1 - F_n(lag_i v lag_j)) - W_i phi_j . L(lag_i)
           - W_j phi_i . L(lag_j) + phi_i' N phi_j,
    L(t) = (1/n) sum_{l: lag_l > t} Gamma(lag_l-),
    N    = (1/n) sum_l Gamma(lag_l-) Gamma(lag_l-)',

so that ``z' M z / n`` equals ``(1/n) sum_l Dz(lag_l-)^2`` exactly, where
``Dz(x) = n^{-1/2} sum_i z_i [W_i 1{lag_i <= x} - phi_i . Gamma(x)]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError
from .residuals import CovEstimates, MarkSeries, fisher

MIN_B = 100


@dataclass
class BootstrapKernel:
    M1: np.ndarray
    M2: np.ndarray
    L1: float
    L2: float
    B: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.B < MIN_B:
            raise ConfigError(f"B must be >= {MIN_B}, got {self.B}")

    @property
    def n(self) -> int:
        return self.M1.shape[0]


def survival(lag: np.ndarray) -> np.ndarray:
    """``1 - F_n(lag_i)`` with ``F_n`` the empirical CDF of the lags."""
    s = np.sort(lag)
    return (lag.size - np.searchsorted(s, lag, side="right")) / lag.size


def _component_pieces(cov: CovEstimates, lag: np.ndarray, k: int):
    n = lag.size
    gam_left = cov.Gamma_left(cov.sorted_lag)[:, k - 1, :]  # n x d, sorted order
    N = gam_left.T @ gam_left / n
    # L(t) = (1/n) sum_{lag_l > t} Gamma(lag_l-)
    tail = np.vstack((np.cumsum(gam_left[::-1], axis=0)[::-1], np.zeros((1, cov.d)))) / n
    L = tail[np.searchsorted(cov.sorted_lag, lag, side="right")]
    return L, N


def build_M(marks: MarkSeries, phi, cov: CovEstimates, B: int = 500, seed: int = 0
            ) -> BootstrapKernel:
    """Kernel matrices for both components."""
    if hasattr(phi, "phi"):
        phi = phi.phi
    phi = np.ascontiguousarray(phi, dtype=float)
    lag = marks.lag
    surv = survival(lag)
    Ms = []
    for k in (1, 2):
        L, N = _component_pieces(cov, lag, k)
        M = kernels.build_m(
            np.ascontiguousarray(surv), np.ascontiguousarray(marks.w(k)), phi,
            np.ascontiguousarray(L), np.ascontiguousarray(N),
        )
        Ms.append(0.5 * (M + M.T))
    return BootstrapKernel(Ms[0], Ms[1], cov.L1, cov.L2, B, seed)


def multipliers(seed: int, B: int, n: int, law: str = "normal") -> np.ndarray:
    """``B x n`` multipliers; draw ``b`` depends only on ``(seed, b)``."""
    Z = np.empty((B, n))
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        if law == "normal":
            Z[b] = rng.standard_normal(n)
        elif law == "rademacher":
            Z[b] = rng.integers(0, 2, n) * 2.0 - 1.0
        else:
            raise ConfigError(f"unknown multiplier law {law!r}")
    return Z


def draw_statistics(kernel: BootstrapKernel, law: str = "normal") -> tuple[np.ndarray, np.ndarray]:
    """Bootstrap copies ``(S1_b, S2_b)`` for ``b = 1..B``."""
    n = kernel.n
    Z = multipliers(kernel.seed, kernel.B, n, law)
    s1 = np.einsum("bi,bi->b", Z @ kernel.M1, Z) / n
    s2 = np.einsum("bi,bi->b", Z @ kernel.M2, Z) / n
    return s1, s2


def bootstrap_pvalues(kernel: BootstrapKernel, observed, *, add_one: bool = False,
                      law: str = "normal") -> dict:
    """p-values of ``S1, S2, Sstar, Scirc`` and the Fisher combination.

    ``observed`` is ``(S1, S2, Sstar, Scirc)`` with ``Sstar``/``Scirc`` built
    from the kernel's ``L1, L2``.
    """
    S1, S2, Sstar, Scirc = (float(v) for v in observed)
    b1, b2 = draw_statistics(kernel, law)
    a, c = b1 / kernel.L1, b2 / kernel.L2
    draws = {"S1": b1, "S2": b2, "Sstar": a + c, "Scirc": np.maximum(a, c)}
    obs = {"S1": S1, "S2": S2, "Sstar": Sstar, "Scirc": Scirc}
    B = kernel.B
    out = {}
    for key, arr in draws.items():
        count = int(np.sum(arr > obs[key]))
        out[key] = (1 + count) / (B + 1) if add_one else count / B
    sb, pb, clamped = fisher(out["S1"], out["S2"], floor=1.0 / (B + 1))
    out["Sbullet"] = pb
    out["Sbullet_value"] = sb
    out["clamped"] = clamped
    return out
