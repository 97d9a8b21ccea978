"""Galerkin truncation of the controlled string, tail Lyapunov functionals and end-to-end checks.

The truncated system is block diagonal, ``z' = diag(D_1, ..., D_N) z``, so every
mode is integrated independently.  Because each block is 1-periodic and
linear, RK4 over one period is a fixed matrix; the trajectory sampled once per
period is obtained by applying that matrix repeatedly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import chrono
from .model import ControlParams, StringParams, sobolev_norms
from .stability import (
    ModeSystem,
    Stability,
    StabilityVerdict,
    ThresholdResult,
    classify_modes,
    monodromy,
    threshold_test,
)

__all__ = [
    "GalerkinSystem",
    "Trajectory",
    "DecayFit",
    "LyapunovCertificate",
    "EndToEndReport",
    "random_initial_data",
    "integrate",
    "fit_decay_rate",
    "lyapunov_damped",
    "lyapunov_damped_forms",
    "lyapunov_damped_certificate",
    "lyapunov_undamped",
    "end_to_end_verdict",
]

BLOW_UP = 1e100
BLOCK_LIOUVILLE_TOL = 1e-7


@dataclass(frozen=True)
class GalerkinSystem:
    """Modes ``1..N`` retained plus ``tail`` further modes simulated for the Lyapunov checks."""

    params: StringParams
    control: ControlParams
    N: int
    tail: int = 0

    def __post_init__(self):
        if self.N < 1 or self.tail < 0:
            raise ValueError("need N >= 1 and tail >= 0")
        cut = self.control.cutoff_N
        if cut is not None and cut > self.N:
            raise ValueError("output-feedback cutoff must not exceed the retained modes N")

    @property
    def n_modes(self) -> int:
        return self.N + self.tail

    @property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.n_modes + 1)

    @property
    def blocks(self) -> list[ModeSystem]:
        return [ModeSystem(int(n), self.params, self.control) for n in self.modes]


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (samples, modes, 2)
    h1_sq: np.ndarray
    vel_sq: np.ndarray
    lyapunov: np.ndarray  # tail functional, zero when there is no tail
    lyapunov_kind: str
    blew_up: bool = False

    @property
    def norms(self) -> np.ndarray:
        return self.h1_sq + self.vel_sq


def random_initial_data(n_modes: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    """Coefficients ``T_n = +-n^-2`` and ``S_n = +-n^-1`` with random signs."""
    rng = np.random.default_rng(seed)
    n = np.arange(1, n_modes + 1)
    signs = rng.choice([-1.0, 1.0], size=(n_modes, 2))
    return scale * signs * np.column_stack([n**-2.0, n**-1.0])


def _tail_sums(states, N: int, k: float):
    z = np.asarray(states, dtype=float).reshape(-1, 2)
    mu2 = (np.arange(N + 1, N + 1 + len(z)) / 2.0) ** 2
    T, ut = z[:, 0], z[:, 1] / k
    return np.sum(T * T), np.sum(mu2 * T * T), np.sum(ut * ut), np.sum(T * ut)


def lyapunov_damped_forms(states, params: StringParams, k: float, N: int) -> tuple[float, float]:
    """Damped tail functional in its defining form and its sum-of-squares form.

    ``states`` holds ``(T_n, S_n)`` for modes ``N+1, N+2, ...``.
    """
    a, al = params.a, params.alpha
    u2, ux2, ut2, cross = _tail_sums(states, N, k)
    defining = al**2 / (4 * k * k) * u2 + a * a / (2 * k * k) * ux2 + 0.5 * ut2 + al / (2 * k) * cross
    # ||alpha u / k + u_t||^2 expanded per mode
    z = np.asarray(states, dtype=float).reshape(-1, 2)
    shifted = np.sum((al / k * z[:, 0] + z[:, 1] / k) ** 2)
    sos = a * a / (2 * k * k) * ux2 + 0.25 * ut2 + 0.25 * shifted
    return float(defining), float(sos)


def lyapunov_damped(states, params: StringParams, k: float, N: int) -> float:
    defining, sos = lyapunov_damped_forms(states, params, k, N)
    if abs(defining - sos) > 1e-12 * max(abs(sos), 1e-300):
        raise ArithmeticError(f"Lyapunov forms disagree: {defining!r} vs {sos!r}")
    return defining


def lyapunov_undamped(states, params: StringParams, k: float, N: int) -> tuple[float, bool]:
    """Conserved tail functional of the undamped string and whether ``N^2 > 2 gamma^2 / a^2``."""
    u2, ux2, ut2, _ = _tail_sums(states, N, k)
    g, a = params.gamma, params.a
    V = -g * g / (2 * k * k) * u2 + a * a / (2 * k * k) * ux2 + 0.5 * ut2
    return float(V), N * N > 2 * g * g / (a * a)


@dataclass(frozen=True)
class LyapunovCertificate:
    C1: float
    beta: float
    C2_hat: float
    C_of_k: float
    valid: bool
    smallest_N: int


def _c2_hat(params: StringParams, k: float, beta: float, N: int) -> float:
    a, al = params.a, params.alpha
    mu2 = ((N + 1) / 2.0) ** 2  # sharp Poincare constant on modes > N
    return al / (4 * k**3) * a * a * mu2 - (al / (2 * k) * beta + beta * beta / (al / k))


def lyapunov_damped_certificate(sys: GalerkinSystem, N: int | None = None, k: float | None = None) -> LyapunovCertificate:
    """Dissipation constants of the damped tail functional.

    ``C2_hat > 0`` certifies ``V_N(t) <= V_N(0) exp(-C(k) t)``.
    """
    p = sys.params
    if p.alpha <= 0:
        raise ValueError("the damped certificate needs alpha > 0; use lyapunov_undamped")
    N = sys.N if N is None else N
    k = sys.control.k if k is None else k
    a, al = p.a, p.alpha
    c = sys.control
    beta = p.gamma**2 / k**2 + c.delta * float(np.max(np.abs(c.excitation.g(np.linspace(0, 1, 4097)))))
    C1 = min(a * a / (4 * k * k), 0.25)
    C2 = _c2_hat(p, k, beta, N)
    valid = C2 > 0
    if valid:
        # -dV/dt >= C2 |u|^2 + alpha a^2/(4k^3) |u_x|^2 + alpha/(4k) |u_t|^2
        # V <= (3/8) alpha^2/k^2 |u|^2 + a^2/(2k^2) |u_x|^2 + |u_t|^2
        C_of_k = min(C2 / (3 * al * al / (8 * k * k)), al / (2 * k), al / (4 * k))
    else:
        C_of_k = float("nan")
    # smallest N with C2 > 0: C2 grows like (N+1)^2
    need = (al / (2 * k) * beta + beta * beta * k / al) / (al * a * a / (16 * k**3))
    n_min = max(1, math.ceil(math.sqrt(need)) - 2)
    while _c2_hat(p, k, beta, n_min) <= 0:
        n_min += 1
    return LyapunovCertificate(C1, beta, C2, C_of_k, bool(valid), n_min)


def integrate(
    sys: GalerkinSystem,
    init,
    periods: int,
    steps_per_period: int = chrono.DEFAULT_STEPS,
) -> Trajectory:
    """Integrate every block and record norms and the tail functional once per period."""
    if periods < 1:
        raise ValueError("periods must be >= 1")
    if steps_per_period < 1024:
        raise ValueError("steps_per_period must be >= 1024")
    z = np.array(init, dtype=float).reshape(-1, 2)
    if len(z) != sys.n_modes:
        raise ValueError(f"expected {sys.n_modes} initial modal states, got {len(z)}")
    flow = monodromy(sys.params, sys.control, sys.modes, steps_per_period)
    if flow.liouville_defect > BLOCK_LIOUVILLE_TOL:
        raise chrono.IntegrationError(f"block Liouville defect {flow.liouville_defect:.2e}")
    P = flow.matrix
    k, N = sys.control.k, sys.N
    kind = "damped" if sys.params.alpha > 0 else "undamped"

    def tail_value(state):
        if sys.tail == 0:
            return 0.0
        if kind == "damped":
            return lyapunov_damped(state[N:], sys.params, k, N)
        return lyapunov_undamped(state[N:], sys.params, k, N)[0]

    states, h1, vel, lyap = [z], [], [], []
    blew_up = False
    for j in range(periods + 1):
        h, v = sobolev_norms(states[-1], k)
        h1.append(h)
        vel.append(v)
        lyap.append(tail_value(states[-1]))
        if not (h + v < BLOW_UP):
            blew_up = True
            break
        if j < periods:
            states.append(np.einsum("nij,nj->ni", P, states[-1]))
    n = len(h1)
    return Trajectory(
        times=np.arange(n, dtype=float),
        states=np.stack(states[:n]),
        h1_sq=np.array(h1),
        vel_sq=np.array(vel),
        lyapunov=np.array(lyap),
        lyapunov_kind=kind,
        blew_up=blew_up,
    )


@dataclass(frozen=True)
class DecayFit:
    sigma: float
    C: float
    r_squared: float
    degenerate: bool = False


def fit_decay_rate(traj: Trajectory, burn_in: int = 10) -> DecayFit:
    """Least-squares line through ``log(||u||_1^2 + ||u_t||^2)`` after ``burn_in`` periods."""
    norms = traj.norms
    if np.all(norms == 0):
        return DecayFit(0.0, 1.0, 1.0, degenerate=True)
    sel = traj.times >= burn_in
    t, y = traj.times[sel], norms[sel]
    if t.size < 8:
        raise ValueError("need at least 8 samples after burn-in")
    if np.any(y <= 0):
        raise ValueError("norms must be positive to fit a rate")
    logy = np.log(y)
    slope, intercept = np.polyfit(t, logy, 1)
    resid = logy - (slope * t + intercept)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 1e-30 * max(1.0, float(np.sum(logy**2))) else 1.0
    C = max(1.0, math.exp(intercept) / norms[0])
    return DecayFit(sigma=float(-slope), C=float(C), r_squared=float(r2))


@dataclass
class EndToEndReport:
    verdict: Stability
    thresholds: list[ThresholdResult]
    mode_verdicts: list[StabilityVerdict]
    fit: DecayFit
    trajectory: Trajectory = field(repr=False)
    certificate: LyapunovCertificate | None = None
    tail_monotone: bool | None = None
    tail_drift_per_100: float | None = None
    tail_positive: bool | None = None
    norm_growth: float = float("nan")
    notes: list[str] = field(default_factory=list)


def end_to_end_verdict(
    params: StringParams,
    control: ControlParams,
    N_sim: int = 8,
    periods: int = 100,
    tail: int = 32,
    steps_per_period: int = chrono.DEFAULT_STEPS,
    seed: int = 0,
    epsilon: float = 0.0,
    burn_in: int = 10,
    init=None,
) -> EndToEndReport:
    """Combine thresholds, monodromy verdicts, a simulated trajectory and the tail functional.

    ``init`` overrides the seeded random initial data with explicit
    ``(N_sim + tail, 2)`` modal states.
    """
    notes = []
    damped = params.alpha > 0
    if N_sim < 8:
        raise ValueError("N_sim must be >= 8")
    if not damped:
        need = math.ceil(math.sqrt(2 * params.gamma**2 / params.a**2)) + 1
        if N_sim < need:
            raise ValueError(f"undamped tail functional needs N_sim >= {need}")
    sys = GalerkinSystem(params, control, N_sim, tail)
    blocks = sys.blocks
    thresholds = [threshold_test(b, epsilon) for b in blocks[:N_sim]]
    verdicts = classify_modes(params, control, sys.modes, steps_per_period)
    if init is None:
        init = random_initial_data(sys.n_modes, seed)
    traj = integrate(sys, init, periods, steps_per_period)
    fit = fit_decay_rate(traj, burn_in) if not traj.blew_up else DecayFit(-math.inf, math.inf, float("nan"))

    report = EndToEndReport(Stability.MARGINAL, thresholds, verdicts, fit, traj)
    n0 = traj.norms[0]
    report.norm_growth = float(np.max(traj.norms) / n0) if n0 > 0 else 0.0
    if tail:
        V = traj.lyapunov
        if damped:
            cert = lyapunov_damped_certificate(sys)
            report.certificate = cert
            if not cert.valid:
                notes.append(
                    f"dissipation certificate needs N >= {cert.smallest_N}; tail decay checked numerically"
                )
            report.tail_monotone = bool(np.all(V[1:] <= V[:-1] * (1 + 1e-9)))
        elif all(not b.controlled for b in blocks[N_sim:]):
            drift = float(np.max(np.abs(V - V[0])) / abs(V[0])) if V[0] != 0 else 0.0
            report.tail_drift_per_100 = drift * 100.0 / max(periods, 100)
            report.tail_positive = lyapunov_undamped(traj.states[0, N_sim:], params, control.k, N_sim)[1]
        else:
            notes.append("tail modes are actuated; the conserved tail functional does not apply")

    kinds = {v.stability for v in verdicts}
    if traj.blew_up or Stability.UNSTABLE in kinds:
        verdict = Stability.UNSTABLE
    elif kinds == {Stability.ASYMPTOTICALLY_STABLE} and damped:
        verdict = Stability.ASYMPTOTICALLY_STABLE
    elif kinds <= {Stability.ASYMPTOTICALLY_STABLE, Stability.STABLE}:
        verdict = Stability.STABLE
    else:
        verdict = Stability.MARGINAL
    if damped and verdict is Stability.ASYMPTOTICALLY_STABLE and report.tail_monotone is False:
        notes.append("tail functional not monotone along the simulated trajectory")
        verdict = Stability.MARGINAL
    for n, (th, v) in enumerate(zip(thresholds, verdicts), start=1):
        if th.side == "unstable" and v.stability is not Stability.UNSTABLE:
            notes.append(f"mode {n}: threshold predicts instability, monodromy says {v.stability}")
        if th.side == "stable" and v.stability is Stability.UNSTABLE:
            notes.append(f"mode {n}: threshold predicts stability, monodromy says unstable")
    report.verdict = verdict
    report.notes = notes
    return report
