"""Flows of linear time-variant systems ``z' = A(t) z``.

The left chronological exponential ``P^t`` solves ``P' = A(t) P``, the right one
solves ``P' = P A(t)``, both with ``P^0 = I``.  Everything is integrated with
classical fixed-step RK4 so that results are reproducible bit for bit.

Generators are wrapped in :class:`TimeMatrixFn`.  The wrapped callable must be
vectorized: given times of shape ``(m,)`` it returns ``(m, *batch, 2, 2)``.
A nonempty ``batch`` integrates a stack of independent blocks at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

__all__ = [
    "IntegrationError",
    "TimeMatrixFn",
    "Flow",
    "constant",
    "chron_exp_left",
    "chron_exp_right",
    "volterra_truncation",
    "conjugated_perturbation",
    "variational_check",
    "lambda1",
    "matrix_log_principal",
    "integrated_norm",
    "DEFAULT_STEPS",
]

DEFAULT_STEPS = 4096
LIOUVILLE_FAIL = 1e-6


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeMatrixFn:
    """A matrix-valued function of time.

    ``piecewise=True`` marks a generator with jumps; RK4 then evaluates the end
    of every step as a left limit, so steps must be aligned with the jumps.
    When ``breakpoints`` (jump locations within one period) are given, the
    alignment is checked.
    """

    func: Callable[[np.ndarray], np.ndarray]
    piecewise: bool = False
    period: float | None = 1.0
    breakpoints: tuple[float, ...] = ()

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        out = np.asarray(self.func(np.atleast_1d(np.asarray(t, dtype=float))), dtype=float)
        return out[0] if scalar else out

    def __add__(self, other: TimeMatrixFn) -> TimeMatrixFn:
        return TimeMatrixFn(
            lambda t: self.func(t) + other.func(t),
            piecewise=self.piecewise or other.piecewise,
            period=self.period if self.period == other.period else None,
            breakpoints=tuple(sorted(set(self.breakpoints) | set(other.breakpoints))),
        )


def constant(M) -> TimeMatrixFn:
    M = np.array(M, dtype=float)
    return TimeMatrixFn(lambda t: np.broadcast_to(M, (len(t),) + M.shape), period=None)


@dataclass(frozen=True)
class Flow:
    """Terminal matrix of a flow plus the Liouville check made when it was computed."""

    matrix: np.ndarray
    t0: float
    t1: float
    steps: int
    det: np.ndarray
    det_expected: np.ndarray
    liouville_defect: float

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


# -- RK4 core ---------------------------------------------------------------


def _stage_values(A: TimeMatrixFn, t0, t1, steps: int):
    """Generator values at step starts, midpoints and ends.

    ``t0`` and ``t1`` broadcast to shape ``(m,)``; returns three arrays of
    shape ``(steps, m, *batch, 2, 2)`` and the step sizes ``(m,)``.
    """
    t0, t1 = np.broadcast_arrays(np.atleast_1d(np.asarray(t0, float)), np.atleast_1d(np.asarray(t1, float)))
    m = t0.size
    h = (t1 - t0) / steps
    frac = np.arange(2 * steps + 1) / (2 * steps)
    times = t0[None, :] + frac[:, None] * (t1 - t0)[None, :]
    vals = np.asarray(A.func(times.ravel()), dtype=float)
    vals = vals.reshape((2 * steps + 1, m) + vals.shape[1:])
    starts = vals[0:-1:2]
    mids = vals[1::2]
    ends = vals[2::2]
    if A.piecewise:
        _check_alignment(A, t0, t1, steps)
        right = times[2::2]
        left = np.nextafter(right, times[0:-1:2])
        ends = np.asarray(A.func(left.ravel()), dtype=float).reshape(ends.shape)
    if not (np.all(np.isfinite(starts)) and np.all(np.isfinite(mids)) and np.all(np.isfinite(ends))):
        raise IntegrationError("generator returned non-finite values")
    return starts, mids, ends, h


def _check_alignment(A: TimeMatrixFn, t0, t1, steps: int) -> None:
    if not A.breakpoints or A.period is None:
        return
    for a, b in zip(t0, t1):
        h = (b - a) / steps
        first = np.floor(a / A.period) * A.period
        jumps = (first + A.period * np.arange(int(np.ceil((b - first) / A.period)) + 1))[:, None] + np.array(A.breakpoints)
        jumps = jumps[(jumps > a) & (jumps < b)]
        pos = (jumps - a) / h
        if np.any(np.abs(pos - np.round(pos)) > 1e-6):
            raise ValueError("integration steps do not land on the generator's jump points")


def _march(starts, mids, ends, h, P0, left: bool = True, record: bool = False):
    """Fixed-step RK4 on ``P' = A P`` (left) or ``P' = P A`` (right)."""
    hh = h.reshape(h.shape + (1,) * (P0.ndim - 1))
    P = P0.copy()
    path = [P.copy()] if record else None
    if left:
        for a0, a1, a2 in zip(starts, mids, ends):
            k1 = a0 @ P
            k2 = a1 @ (P + 0.5 * hh * k1)
            k3 = a1 @ (P + 0.5 * hh * k2)
            k4 = a2 @ (P + hh * k3)
            P = P + hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if record:
                path.append(P)
    else:
        for a0, a1, a2 in zip(starts, mids, ends):
            k1 = P @ a0
            k2 = (P + 0.5 * hh * k1) @ a1
            k3 = (P + 0.5 * hh * k2) @ a1
            k4 = (P + hh * k3) @ a2
            P = P + hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if record:
                path.append(P)
    return np.stack(path) if record else P


def _trace_integral(starts, mids, ends, h):
    # Simpson on the RK4 nodes, one panel per step
    tr = lambda v: np.trace(v, axis1=-2, axis2=-1)
    hh = h.reshape(h.shape + (1,) * (tr(starts).ndim - 2))
    return np.sum(hh / 6.0 * (tr(starts) + 4.0 * tr(mids) + tr(ends)), axis=0)


def _flow(A: TimeMatrixFn, t0, t1, steps: int, left: bool) -> Flow:
    if steps < 64:
        raise ValueError("steps must be >= 64")
    if not np.all(np.asarray(t1) > np.asarray(t0)):
        raise ValueError("t1 must exceed t0")
    starts, mids, ends, h = _stage_values(A, t0, t1, steps)
    P0 = np.broadcast_to(np.eye(2), starts.shape[1:]).copy()
    P = _march(starts, mids, ends, h, P0, left=left)
    det = np.linalg.det(P)
    det_expected = np.exp(_trace_integral(starts, mids, ends, h))
    defect = float(np.max(np.abs(det - det_expected) / np.abs(det_expected)))
    if not np.all(np.isfinite(P)):
        raise IntegrationError("flow overflowed")
    if defect > LIOUVILLE_FAIL:
        raise IntegrationError(
            f"Liouville defect {defect:.3e} exceeds {LIOUVILLE_FAIL:g}; increase steps (now {steps})"
        )
    if np.ndim(t1) == 0 and np.ndim(t0) == 0:
        P, det, det_expected = P[0], det[0], det_expected[0]
    return Flow(P, float(np.min(t0)), float(np.max(t1)), steps, det, det_expected, defect)


def chron_exp_left(A: TimeMatrixFn, t1: float = 1.0, steps: int = DEFAULT_STEPS, t0: float = 0.0) -> Flow:
    """Left chronological exponential of ``A`` over ``[t0, t1]``."""
    return _flow(A, t0, t1, steps, left=True)


def chron_exp_right(A: TimeMatrixFn, t1: float = 1.0, steps: int = DEFAULT_STEPS, t0: float = 0.0) -> Flow:
    """Right chronological exponential: the solution of ``P' = P A(t)``, ``P(t0) = I``."""
    return _flow(A, t0, t1, steps, left=False)


# -- series and averages ----------------------------------------------------


def volterra_truncation(A: TimeMatrixFn, t1: float, order: int, quad_points: int = 256) -> np.ndarray:
    """Volterra series of the left flow truncated after the ``order``-fold integral.

    Uses iterated cumulative integrals ``I_m(t) = int_0^t A(s) I_{m-1}(s) ds``,
    each by cumulative Simpson.
    """
    if not 1 <= order <= 4:
        raise ValueError("order must be in [1, 4]")
    if quad_points < 32:
        raise ValueError("quad_points must be >= 32")
    t = np.linspace(0.0, t1, quad_points + 1)
    a = A(t)
    term = np.broadcast_to(np.eye(2), a.shape).copy()
    total = np.eye(2) + np.zeros(a.shape[1:])
    for _ in range(order):
        term = cumulative_simpson(a @ term, x=t, axis=0, initial=0.0)
        total = total + term[-1]
    return total


def integrated_norm(A: TimeMatrixFn, t1: float = 1.0, quad_points: int = 512) -> float:
    """``int_0^t1 ||A(t)||_F dt``, the quantity in the series convergence guard."""
    t = np.linspace(0.0, t1, quad_points + 1)
    return float(simpson(np.linalg.norm(A(t), axis=(-2, -1)), x=t))


def lambda1(A: TimeMatrixFn, quad_points: int = 256) -> np.ndarray:
    """First logarithm term: the average of ``A`` over one period, by Simpson."""
    if quad_points < 32 or quad_points % 2:
        raise ValueError("quad_points must be even and >= 32")
    t = np.linspace(0.0, 1.0, quad_points + 1)
    return simpson(A(t), x=t, axis=0)


# -- variational formula ----------------------------------------------------


def _conjugate(P, C):
    return np.linalg.solve(P, C @ P)


def conjugated_perturbation(B: TimeMatrixFn, C: TimeMatrixFn, t, steps: int = 1024) -> np.ndarray:
    """``(P_B^t)^{-1} C(t) P_B^t`` where ``P_B`` is the left flow of ``B``.

    ``t`` may be a scalar or an array of times in ``[0, 1]``; flows to all
    requested times are integrated together.
    """
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt < 0):
        raise ValueError("t must be nonnegative")
    P = np.broadcast_to(np.eye(2), (tt.size, 2, 2)).copy()
    pos = tt > 0
    if np.any(pos):
        starts, mids, ends, h = _stage_values(B, 0.0, tt[pos], steps)
        P0 = np.broadcast_to(np.eye(2), starts.shape[1:]).copy()
        P[pos] = _march(starts, mids, ends, h, P0)
    if np.linalg.cond(P).max() > 1e12:
        raise IntegrationError("flow of B is numerically singular")
    out = _conjugate(P, C(tt))
    return out[0] if np.ndim(t) == 0 else out


def variational_check(B: TimeMatrixFn, C: TimeMatrixFn, steps: int = 8192):
    """Compare the flow of ``B + C`` with the factorized form over ``[0, 1]``.

    Returns ``(lhs, rhs, gap)`` where ``rhs`` is the flow of ``B`` composed
    with the flow of the conjugated perturbation and ``gap`` is the max-entry
    difference.
    """
    if B.piecewise or C.piecewise:
        raise ValueError("variational_check needs continuous generators")
    lhs = chron_exp_left(B + C, 1.0, steps).matrix
    # flow of B on the half-step grid gives the conjugation at every RK4 node
    starts, mids, ends, h = _stage_values(B, 0.0, 1.0, 2 * steps)
    path = _march(starts, mids, ends, h, np.eye(2)[None], record=True)[:, 0]
    nodes = np.linspace(0.0, 1.0, 2 * steps + 1)
    D = _conjugate(path, C(nodes))
    Q = _march(D[0:-1:2, None], D[1::2, None], D[2::2, None], np.array([1.0 / steps]), np.eye(2)[None])[0]
    rhs = path[-1] @ Q
    return lhs, rhs, float(np.max(np.abs(lhs - rhs)))


# -- logarithm --------------------------------------------------------------


def matrix_log_principal(P) -> tuple[np.ndarray, bool]:
    """Principal logarithm of a 2x2 matrix.

    Returns ``(L, on_branch_cut)`` with ``L`` complex.  ``on_branch_cut`` is
    set when an eigenvalue lies on the closed negative real axis, where the
    principal logarithm of a real matrix is not real.
    """
    P = np.asarray(P, dtype=complex)
    if P.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix")
    tr = P[0, 0] + P[1, 1]
    det = P[0, 0] * P[1, 1] - P[0, 1] * P[1, 0]
    if det == 0:
        raise ValueError("matrix is singular")
    half = tr / 2
    disc = np.sqrt(half * half - det)
    lam1, lam2 = half + disc, half - disc
    scale = max(abs(lam1), abs(lam2))
    if abs(lam1) < 1e-300 or abs(lam2) < 1e-300:
        raise ValueError("eigenvalue at zero")
    on_cut = any(abs(l.imag) <= 1e-14 * scale and l.real < 0 for l in (lam1, lam2))
    I = np.eye(2)
    if abs(lam1 - lam2) > 1e-6 * scale:
        # Newton form: log(lam2) I + divided difference * (P - lam2 I)
        dd = (np.log(lam1) - np.log(lam2)) / (lam1 - lam2)
        L = np.log(lam2) * I + dd * (P - lam2 * I)
    else:
        # near-repeated eigenvalue: expand the divided difference about the mean
        m = half
        r = (disc / m) ** 2
        dd = (1.0 + r / 3.0 + r * r / 5.0) / m
        L = (np.log(m) + 0.5 * np.log1p(-r)) * I + dd * (P - m * I)
    return L, bool(on_cut)

