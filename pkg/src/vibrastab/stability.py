"""Per-mode generators, averaged logarithm, threshold tests and monodromy verdicts.

Mode ``n`` in first-order form ``z_n = (T_n, S_n)`` obeys ``z' = A_n(t) z`` with
``A_n = B_n + C_n``::

    B_n(t) = delta k g(t) [[0, 0], [1, 0]]
    C_n    = (1/k) [[0, 1], [gamma^2 - a^2 mu_n^2, -alpha]]

Conjugating ``C_n`` by the flow of ``B_n`` gives the generator ``D_n(t)``
whose one-period flow is the monodromy matrix and whose average is the first
logarithm term ``Lambda1``.  Modes beyond an output-feedback cutoff are not
actuated and keep the constant generator ``C_n``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import chrono
from .chrono import TimeMatrixFn
from .model import ControlParams, StringParams

__all__ = [
    "Stability",
    "ModeSystem",
    "StabilityVerdict",
    "ThresholdResult",
    "RemainderReport",
    "generator_D",
    "generator_A",
    "lambda1_closed_form",
    "averaged_eigenvalues",
    "threshold_margin",
    "threshold_test",
    "monodromy",
    "classify",
    "classify_monodromy",
    "classify_modes",
    "remainder_estimate",
    "bifurcation_delta",
    "boundary_delta",
    "UNIT_CIRCLE_TOL",
]

UNIT_CIRCLE_TOL = 1e-9


class Stability(str, enum.Enum):
    ASYMPTOTICALLY_STABLE = "asymptotically_stable"
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class ModeSystem:
    """The two-dimensional system of mode ``n``."""

    n: int
    params: StringParams
    control: ControlParams

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"mode index must be a positive integer, got {self.n!r}")

    @property
    def mu(self) -> float:
        return self.n / 2.0

    @property
    def controlled(self) -> bool:
        return self.control.controls(self.n)

    @property
    def damped(self) -> bool:
        return self.params.alpha > 0 and not self.control.output_feedback

    @property
    def coupling(self) -> float:
        """``gamma^2 - a^2 mu_n^2``; positive means the uncontrolled mode is unstable."""
        p = self.params
        return p.gamma**2 - p.a**2 * self.mu**2

    @property
    def effective_delta(self) -> float:
        return self.control.delta if self.controlled else 0.0

    @property
    def C(self) -> np.ndarray:
        k, al = self.control.k, self.params.alpha
        return np.array([[0.0, 1.0], [self.coupling, -al]]) / k

    @property
    def B(self) -> TimeMatrixFn:
        """``B_n(t) = delta k g(t) E`` with ``E = [[0, 0], [1, 0]]``."""
        d, k, e = self.effective_delta, self.control.k, self.control.excitation

        def func(t):
            out = np.zeros(t.shape + (2, 2))
            out[..., 1, 0] = d * k * e.g(t)
            return out

        return TimeMatrixFn(func, piecewise=not e.is_continuous, breakpoints=e.breakpoints)

    @property
    def Cfn(self) -> TimeMatrixFn:
        return chrono.constant(self.C)

    @property
    def D(self) -> TimeMatrixFn:
        return TimeMatrixFn(lambda t: generator_D(self, t))

    @property
    def A(self) -> TimeMatrixFn:
        return self.B + self.Cfn

    @property
    def det_monodromy(self) -> float:
        """Exact ``det P^1`` from the trace ``-alpha / k`` of every generator."""
        return math.exp(-self.params.alpha / self.control.k)


def _mode_array(params, control, ns):
    ns = np.asarray(ns, dtype=float)
    mu = ns / 2.0
    coupling = params.gamma**2 - params.a**2 * mu**2
    if control.cutoff_N is None:
        delta = np.full_like(ns, control.delta)
    else:
        delta = np.where(ns <= control.cutoff_N, control.delta, 0.0)
    return coupling, delta


def _generator_D_batch(params: StringParams, control: ControlParams, ns, t):
    """``D_n(t)`` for many modes; shape ``t.shape + ns.shape + (2, 2)``."""
    coupling, delta = _mode_array(params, control, ns)
    k, al = control.k, params.alpha
    G = np.asarray(control.excitation.G(t))[..., None]
    dG = delta * G
    out = np.empty(G.shape[:-1] + coupling.shape + (2, 2))
    out[..., 0, 0] = dG
    out[..., 0, 1] = 1.0 / k
    out[..., 1, 0] = coupling / k - al * dG - k * dG * dG
    out[..., 1, 1] = -al / k - dG
    return out


def generator_D(ms: ModeSystem, t):
    """The conjugated generator ``D_n(t)``; scalar ``t`` gives a 2x2 matrix.

    Actuated modes::

        [[delta G,                                   1/k             ],
         [(gamma^2 - a^2 mu^2)/k - alpha delta G - k delta^2 G^2, -alpha/k - delta G]]

    Modes past the output-feedback cutoff get ``C_n``.
    """
    out = _generator_D_batch(ms.params, ms.control, np.array([ms.n]), np.asarray(t, dtype=float))
    return out[..., 0, :, :]


def generator_A(ms: ModeSystem, t):
    """The unconjugated generator ``A_n(t) = B_n(t) + C_n``."""
    return ms.A(t)


def lambda1_closed_form(ms: ModeSystem) -> np.ndarray:
    """Average of ``D_n`` over one period."""
    k, al = ms.control.k, ms.params.alpha
    d = ms.effective_delta
    Gamma = ms.control.excitation.gamma()
    return np.array([[0.0, 1.0 / k], [ms.coupling / k - d * d * k * Gamma, -al / k]])


def averaged_eigenvalues(L1) -> tuple[complex, complex]:
    """Roots ``(Theta +- sqrt(Theta^2 - 4 Delta)) / 2`` of a 2x2 matrix's characteristic polynomial.

    The root with the larger real part comes first.
    """
    L1 = np.asarray(L1, dtype=float)
    theta = L1[0, 0] + L1[1, 1]
    delta = L1[0, 0] * L1[1, 1] - L1[0, 1] * L1[1, 0]
    disc = theta * theta - 4.0 * delta
    root = math.sqrt(disc) if disc >= 0 else 1j * math.sqrt(-disc)
    return complex((theta + root) / 2), complex((theta - root) / 2)


def _discriminant(ms: ModeSystem) -> float:
    L1 = lambda1_closed_form(ms)
    theta = L1[0, 0] + L1[1, 1]
    delta = L1[0, 0] * L1[1, 1] - L1[0, 1] * L1[1, 0]
    return theta * theta - 4.0 * delta


def threshold_margin(ms: ModeSystem) -> float:
    """``delta^2 Gamma - k^-2 (4 gamma^2 - a^2 n^2) / 4`` (with ``delta = 0`` past the cutoff)."""
    p, k = ms.params, ms.control.k
    d = ms.effective_delta
    return d * d * ms.control.excitation.gamma() - (4 * p.gamma**2 - p.a**2 * ms.n**2) / (4 * k * k)


@dataclass(frozen=True)
class ThresholdResult:
    side: str  # "stable", "unstable" or "gap"
    margin: float
    eigen_kind: str  # "negative_real", "complex", "imaginary", "positive_real", "boundary"


def threshold_test(ms: ModeSystem, epsilon: float = 0.0) -> ThresholdResult:
    """Which side of the averaged stability threshold mode ``n`` lies on.

    ``epsilon`` widens the undecided band around the threshold; conclusions
    inside or near it are unreliable because of the logarithm remainder.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    margin = threshold_margin(ms)
    if margin > epsilon:
        side = "stable"
    elif margin < -epsilon:
        side = "unstable"
    else:
        side = "gap"
    if margin < 0:
        kind = "positive_real"
    elif margin == 0:
        kind = "boundary"
    elif ms.params.alpha == 0:
        kind = "imaginary"
    else:
        kind = "negative_real" if _discriminant(ms) >= 0 else "complex"
    return ThresholdResult(side, margin, kind)


def boundary_delta(params: StringParams, control: ControlParams, k=None, n: int = 1):
    """Gain ``delta`` at which ``delta^2 Gamma = k^-2 (4 gamma^2 - a^2 n^2) / 4``.

    Zero when mode ``n`` is stable without feedback.  ``k`` may be an array.
    """
    k = np.asarray(control.k if k is None else k, dtype=float)
    rhs = max(0.0, (4 * params.gamma**2 - params.a**2 * n * n) / 4)
    return np.sqrt(rhs / control.excitation.gamma()) / k


def bifurcation_delta(ms: ModeSystem, lo: float, hi: float, tol: float = 1e-10, maxiter: int = 200) -> float:
    """Bisect ``delta`` in ``[lo, hi]`` for ``Theta^2 - 4 Delta = 0`` of the averaged matrix."""

    def f(d):
        return _discriminant(replace(ms, control=replace(ms.control, delta=d)))

    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ValueError("discriminant does not change sign on the bracket")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) < tol or hi - lo < 1e-15 * hi:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- monodromy ----------------------------------------------------------------


def monodromy(params: StringParams, control: ControlParams, ns, steps: int = chrono.DEFAULT_STEPS) -> chrono.Flow:
    """One-period flows of ``D_n`` for every mode in ``ns``, integrated as one batch."""
    ns = np.atleast_1d(np.asarray(ns))
    if steps % 4 and not control.excitation.is_continuous:
        raise ValueError("steps must be a multiple of 4 to align with the excitation jumps")
    fn = TimeMatrixFn(lambda t: _generator_D_batch(params, control, ns, t))
    return chrono.chron_exp_left(fn, 1.0, steps)


@dataclass(frozen=True)
class StabilityVerdict:
    stability: Stability
    monodromy_eigs: tuple[complex, complex]
    log_eigs: tuple[complex, complex]
    spectral_radius: float
    threshold_margin: float
    det_raw: float = float("nan")
    monodromy_matrix: np.ndarray = field(default=None, repr=False, compare=False)


def classify(P, det_exact: float, tol: float = UNIT_CIRCLE_TOL) -> tuple[Stability, np.ndarray, float]:
    """Classify a monodromy matrix from its spectrum.

    ``P`` is first rescaled so that its determinant equals ``det_exact``,
    which removes the integrator's drift off the Liouville identity.
    """
    P = np.asarray(P, dtype=float)
    det = float(np.linalg.det(P))
    if det <= 0:
        raise chrono.IntegrationError(f"monodromy determinant {det!r} is not positive")
    Pn = P * math.sqrt(det_exact / det)
    eigs = np.linalg.eigvals(Pn).astype(complex)
    eigs = eigs[np.argsort(-np.abs(eigs))]
    rho = float(np.max(np.abs(eigs)))
    if rho < 1 - tol:
        s = Stability.ASYMPTOTICALLY_STABLE
    elif rho > 1 + tol:
        s = Stability.UNSTABLE
    else:
        on_circle = np.all(np.abs(np.abs(eigs) - 1) <= tol)
        distinct = abs(eigs[0] - eigs[1]) > math.sqrt(tol)
        s = Stability.STABLE if on_circle and distinct else Stability.MARGINAL
    return s, eigs, rho


def _verdict(ms: ModeSystem, P) -> StabilityVerdict:
    s, eigs, rho = classify(P, ms.det_monodromy)
    return StabilityVerdict(
        stability=s,
        monodromy_eigs=(complex(eigs[0]), complex(eigs[1])),
        log_eigs=(complex(np.log(eigs[0])), complex(np.log(eigs[1]))),
        spectral_radius=rho,
        threshold_margin=threshold_margin(ms),
        det_raw=float(np.linalg.det(P)),
        monodromy_matrix=np.asarray(P),
    )


def classify_monodromy(ms: ModeSystem, steps: int = chrono.DEFAULT_STEPS) -> StabilityVerdict:
    """Integrate the monodromy of mode ``n`` and classify it."""
    if steps < 1024:
        raise ValueError("steps must be >= 1024")
    P = monodromy(ms.params, ms.control, [ms.n], steps).matrix[0]
    return _verdict(ms, P)


def classify_modes(params: StringParams, control: ControlParams, ns, steps: int = chrono.DEFAULT_STEPS) -> list[StabilityVerdict]:
    """:func:`classify_monodromy` for many modes sharing one batched integration."""
    if steps < 1024:
        raise ValueError("steps must be >= 1024")
    ns = [int(n) for n in np.atleast_1d(ns)]
    P = monodromy(params, control, ns, steps).matrix
    return [_verdict(ModeSystem(n, params, control), P[i]) for i, n in enumerate(ns)]


# -- logarithm remainder ------------------------------------------------------


@dataclass(frozen=True)
class RemainderReport:
    deltas: np.ndarray
    ks: np.ndarray
    modes: np.ndarray
    remainder: np.ndarray  # ||ln P - Lambda1||_F, shape (len(deltas), len(modes))
    normalized: np.ndarray  # remainder / delta^2
    exponents: np.ndarray  # fitted power of delta per mode
    max_normalized: np.ndarray  # max over modes per delta
    exponent_of_max: float
    excluded: list = field(default_factory=list)


def _fit_power(x, y) -> float:
    ok = np.isfinite(y) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def remainder_estimate(
    ms: ModeSystem,
    deltas,
    n_max: int,
    hold: str = "delta_k",
    steps: int = chrono.DEFAULT_STEPS,
) -> RemainderReport:
    """Measure ``ln P^1 - Lambda1`` for modes ``1..n_max`` along a ladder of gains.

    ``hold="delta_k"`` keeps the product ``delta k`` of ``ms.control`` fixed,
    so ``k`` grows as ``delta`` shrinks and the threshold balance
    ``delta^2 Gamma`` vs ``k^-2`` is preserved.  ``hold="k"`` keeps ``k``
    fixed; the remainder then carries a first-order ``delta / k`` term.
    """
    if hold not in ("delta_k", "k"):
        raise ValueError("hold must be 'delta_k' or 'k'")
    deltas = np.asarray(deltas, dtype=float)
    modes = np.arange(1, n_max + 1)
    p, c = ms.params, ms.control
    product = c.delta * c.k
    ks = product / deltas if hold == "delta_k" else np.full_like(deltas, c.k)
    rem = np.full((deltas.size, modes.size), np.nan)
    excluded = []
    for i, (d, k) in enumerate(zip(deltas, ks)):
        if n_max**2 >= 4 * (k * k + p.gamma**2) / p.a**2:
            raise ValueError(f"n_max={n_max} outside the admissible range for k={k}")
        ctrl = replace(c, delta=float(d), k=float(k))
        P = monodromy(p, ctrl, modes, steps).matrix
        for j, n in enumerate(modes):
            L, on_cut = chrono.matrix_log_principal(P[j])
            if on_cut:
                excluded.append((float(d), int(n)))
                continue
            L1 = lambda1_closed_form(ModeSystem(int(n), p, ctrl))
            rem[i, j] = np.linalg.norm(L.real - L1)
    normalized = rem / deltas[:, None] ** 2
    exponents = np.array([_fit_power(deltas, rem[:, j]) for j in range(modes.size)])
    max_norm = np.nanmax(normalized, axis=1)
    return RemainderReport(
        deltas=deltas,
        ks=ks,
        modes=modes,
        remainder=rem,
        normalized=normalized,
        exponents=exponents,
        max_normalized=max_norm,
        exponent_of_max=_fit_power(deltas, np.nanmax(rem, axis=1)),
        excluded=excluded,
    )
