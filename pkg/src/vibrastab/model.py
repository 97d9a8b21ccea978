"""Problem parameters, the sine basis of the string on ``[0, 2 pi]`` and modal projections.

The string operator ``d^2/dx^2`` with Dirichlet ends on ``[0, 2 pi]`` has
eigenvalues ``lambda_n = -mu_n^2`` with ``mu_n = n / 2`` and orthonormal
eigenfunctions ``phi_n(x) = sin(mu_n x) / sqrt(pi)``.

Time is the rescaled time ``t = k tau`` throughout; a mode is carried as the
pair ``(T_n, S_n)`` with ``S_n = k dT_n/dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import simpson

from .excitation import Excitation

__all__ = [
    "DOMAIN_LENGTH",
    "StringParams",
    "ControlParams",
    "ModalState",
    "GridFunction",
    "mode_mu",
    "eigenpair",
    "grid",
    "inner",
    "project_initial_data",
    "sobolev_norms",
    "reconstruct",
    "rate_in_original_time",
]

DOMAIN_LENGTH = 2 * math.pi
ALIAS_FACTOR = 8


@dataclass(frozen=True)
class StringParams:
    """Wave speed ``a``, disturbance ``gamma`` and damping ``alpha``."""

    a: float = 1.0
    gamma: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"wave speed a must be positive, got {self.a!r}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma!r}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha!r}")

    @property
    def domain_length(self) -> float:
        return DOMAIN_LENGTH

    @property
    def damped(self) -> bool:
        return self.alpha > 0


@dataclass(frozen=True)
class ControlParams:
    """Feedback ``delta k^2 g(k tau) u``; ``cutoff_N`` switches to output feedback ``Pi_N u``."""

    delta: float
    k: float
    excitation: Excitation = field(default_factory=Excitation.harmonic)
    cutoff_N: int | None = None

    def __post_init__(self):
        # delta = 0 is admitted as the unactuated reference system
        if not self.delta >= 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta!r}")
        if not self.k >= 1:
            raise ValueError(f"k must be >= 1, got {self.k!r}")
        if self.cutoff_N is not None and (int(self.cutoff_N) != self.cutoff_N or self.cutoff_N < 1):
            raise ValueError(f"cutoff_N must be a positive integer, got {self.cutoff_N!r}")

    @property
    def output_feedback(self) -> bool:
        return self.cutoff_N is not None

    def controls(self, n: int) -> bool:
        return self.cutoff_N is None or n <= self.cutoff_N


class ModalState(NamedTuple):
    T: float
    S: float


def _check_mode(n) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"mode index must be a positive integer, got {n!r}")
    return int(n)


def mode_mu(n):
    """``mu_n = n / 2`` (works elementwise on arrays)."""
    return np.asarray(n) / 2.0 if np.ndim(n) else _check_mode(n) / 2.0


def _check_resolution(M: int, n_max: int) -> None:
    if M % 2:
        raise ValueError(f"grid resolution M must be even for Simpson quadrature, got {M}")
    if M < ALIAS_FACTOR * n_max:
        raise ValueError(
            f"grid resolution M={M} cannot resolve mode {n_max}; need M >= {ALIAS_FACTOR * n_max}"
        )


def grid(M: int) -> np.ndarray:
    return np.linspace(0.0, DOMAIN_LENGTH, M + 1)


@dataclass(frozen=True)
class GridFunction:
    """Samples of a function on the uniform ``M + 1`` point grid over ``[0, 2 pi]``."""

    samples: np.ndarray

    def __post_init__(self):
        u = np.array(self.samples, dtype=float)
        if u.ndim != 1 or u.size < 3:
            raise ValueError("samples must be a 1-d array with at least 3 points")
        if not np.all(np.isfinite(u)):
            raise ValueError("samples must be finite")
        scale = 1.0 + float(np.max(np.abs(u)))
        if abs(u[0]) > 1e-12 * scale or abs(u[-1]) > 1e-12 * scale:
            raise ValueError("grid function violates the Dirichlet condition at the ends")
        u[0] = u[-1] = 0.0
        u.setflags(write=False)
        object.__setattr__(self, "samples", u)

    @property
    def M(self) -> int:
        return self.samples.size - 1

    @property
    def x(self) -> np.ndarray:
        return grid(self.M)

    @classmethod
    def from_function(cls, f, M: int) -> GridFunction:
        x = grid(M)
        u = np.asarray(f(x), dtype=float)
        u[0] = u[-1] = 0.0
        return cls(u)

    @classmethod
    def zeros(cls, M: int) -> GridFunction:
        return cls(np.zeros(M + 1))


def eigenpair(n: int, M: int) -> tuple[float, float, GridFunction]:
    """Eigenvalue ``-n^2/4``, frequency ``n/2`` and sampled eigenfunction of mode ``n``."""
    n = _check_mode(n)
    _check_resolution(M, n)
    mu = n / 2.0
    phi = GridFunction.from_function(lambda x: np.sin(mu * x) / math.sqrt(math.pi), M)
    return -mu * mu, mu, phi


def inner(u: GridFunction, v: GridFunction) -> float:
    """``L2`` inner product by composite Simpson."""
    if u.M != v.M:
        raise ValueError(f"grid mismatch: M={u.M} vs M={v.M}")
    return float(simpson(u.samples * v.samples, x=u.x))


def _basis(N: int, M: int) -> np.ndarray:
    x = grid(M)
    n = np.arange(1, N + 1)[:, None]
    phi = np.sin(0.5 * n * x) / math.sqrt(math.pi)
    phi[:, 0] = phi[:, -1] = 0.0
    return phi


def project_initial_data(phi: GridFunction, psi: GridFunction, k: float, N: int) -> np.ndarray:
    """Modal coefficients of initial displacement ``phi`` and velocity ``psi``.

    Returns an ``(N, 2)`` array of ``(T_n(0), S_n(0))``. Since ``S_n = k dT_n/dt``
    and ``dT_n/dt(0) = (psi, phi_n) / k``, the velocity column is simply
    ``(psi, phi_n)``; ``k`` only enters through validation.
    """
    if phi.M != psi.M:
        raise ValueError(f"grid mismatch: M={phi.M} vs M={psi.M}")
    if N < 1:
        raise ValueError("N must be >= 1")
    if not k >= 1:
        raise ValueError("k must be >= 1")
    _check_resolution(phi.M, N)
    basis = _basis(N, phi.M)
    x = phi.x
    T = simpson(basis * phi.samples, x=x, axis=1)
    S = simpson(basis * psi.samples, x=x, axis=1)
    return np.column_stack([T, S])


def sobolev_norms(states, k: float) -> tuple[float, float]:
    """``(||u||_1^2, ||u_t||^2)`` from modal states indexed ``n = 1..N``.

    ``||u_x||^2`` uses ``||phi_n'||^2 = mu_n^2`` exactly.
    """
    z = np.asarray(states, dtype=float).reshape(-1, 2)
    if z.size == 0:
        return 0.0, 0.0
    mu2 = (np.arange(1, len(z) + 1) / 2.0) ** 2
    h1_sq = float(np.sum((1.0 + mu2) * z[:, 0] ** 2))
    vel_sq = float(np.sum((z[:, 1] / k) ** 2))
    return h1_sq, vel_sq


def reconstruct(states, M: int) -> GridFunction:
    """Displacement ``sum_n T_n phi_n`` sampled on the grid."""
    z = np.asarray(states, dtype=float).reshape(-1, 2)
    if len(z) == 0:
        if M % 2:
            raise ValueError("grid resolution M must be even")
        return GridFunction.zeros(M)
    _check_resolution(M, len(z))
    return GridFunction(z[:, 0] @ _basis(len(z), M))


def rate_in_original_time(sigma: float, k: float) -> float:
    """Convert a decay exponent in rescaled time ``t = k tau`` to original time ``tau``."""
    return sigma * k
