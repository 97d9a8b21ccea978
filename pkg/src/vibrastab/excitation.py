"""Periodic zero-mean excitations driving the fast-oscillating feedback.

An excitation is a 1-periodic function ``g`` together with its primitive
``G(t) = int_0^t g`` and the second moment ``Gamma = int_0^1 G^2``, which
sets the effective stabilizing strength of the feedback ``delta k^2 g(k tau) u``.

Three kinds are provided:

* ``harmonic``: ``g(t) = cos(2 pi t)``
* ``square``: a +-1 square wave, the derivative of a zero-mean triangle wave.
  It switches at ``t = 1/4`` and ``t = 3/4`` so that both ``g`` and ``G``
  have zero mean over one period.
* ``tabulated``: user samples on ``[0, 1]``, linearly interpolated.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

__all__ = [
    "Excitation",
    "AssumptionReport",
    "g_at",
    "G_at",
    "gamma_moment",
    "verify_assumptions",
    "load_excitation_csv",
]

BUILTIN_TOL = 1e-10
TABULATED_TOL = 1e-8

_KINDS = ("harmonic", "square", "tabulated")


@dataclass(frozen=True)
class Excitation:
    """A 1-periodic excitation ``g`` with primitive ``G``.

    Use the constructors :meth:`harmonic`, :meth:`square` and
    :meth:`tabulated` rather than instantiating directly.
    """

    kind: str
    scale: float = 1.0
    samples_per_period: int = 4096
    t_samples: np.ndarray | None = field(default=None, repr=False, compare=False)
    g_samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown excitation kind {self.kind!r}")
        if self.samples_per_period < 32 or self.samples_per_period % 4:
            raise ValueError("samples_per_period must be a multiple of 4, at least 32")
        if self.kind == "tabulated":
            if self.t_samples is None or self.g_samples is None:
                raise ValueError("tabulated excitation needs t and g samples")
            # cumulative primitive of the linear interpolant at the nodes
            t, g = self.t_samples, self.g_samples
            G_nodes = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(t) * (g[1:] + g[:-1]))))
            object.__setattr__(self, "_G_nodes", G_nodes)

    # -- constructors -------------------------------------------------------

    @classmethod
    def harmonic(cls, scale: float = 1.0, samples_per_period: int = 4096) -> Excitation:
        return cls("harmonic", scale=scale, samples_per_period=samples_per_period)

    @classmethod
    def square(cls, scale: float = 1.0, samples_per_period: int = 4096) -> Excitation:
        return cls("square", scale=scale, samples_per_period=samples_per_period)

    @classmethod
    def tabulated(cls, t, g, samples_per_period: int = 4096) -> Excitation:
        """Excitation from samples ``g(t)`` over one period.

        ``t`` must be strictly increasing from 0 to 1 and the samples must
        close periodically (``g[0] == g[-1]``).
        """
        t = np.asarray(t, dtype=float)
        g = np.asarray(g, dtype=float)
        if t.ndim != 1 or t.shape != g.shape or t.size < 3:
            raise ValueError("t and g must be 1-d arrays of equal length >= 3")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(g))):
            raise ValueError("non-finite excitation samples")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise ValueError("tabulated excitation must start at t=0 and end at t=1")
        if np.any(np.diff(t) <= 0):
            raise ValueError("t samples must be strictly increasing")
        span = max(float(np.ptp(g)), float(np.max(np.abs(g))), 1.0)
        if abs(g[0] - g[-1]) > 1e-12 * span:
            raise ValueError("tabulated excitation does not close periodically (g(0) != g(1))")
        jumps = np.abs(np.diff(g))
        if np.ptp(g) > 0 and jumps.max() > 0.5 * np.ptp(g):
            warnings.warn(
                "tabulated excitation has a jump larger than half its range; "
                "g is treated as continuous but looks discontinuous",
                stacklevel=2,
            )
        t.setflags(write=False)
        g.setflags(write=False)
        return cls("tabulated", samples_per_period=samples_per_period, t_samples=t, g_samples=g)

    # -- evaluation ---------------------------------------------------------

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Points in ``[0, 1)`` where ``g`` is discontinuous."""
        return (0.25, 0.75) if self.kind == "square" else ()

    @property
    def is_continuous(self) -> bool:
        return not self.breakpoints

    @property
    def tolerance(self) -> float:
        return TABULATED_TOL if self.kind == "tabulated" else BUILTIN_TOL

    def g(self, t):
        s = np.mod(t, 1.0)
        if self.kind == "harmonic":
            out = np.cos(2 * np.pi * s)
        elif self.kind == "square":
            out = np.where((s >= 0.25) & (s < 0.75), -1.0, 1.0)
        else:
            out = np.interp(s, self.t_samples, self.g_samples)
        return self.scale * out

    def G(self, t):
        s = np.mod(t, 1.0)
        if self.kind == "harmonic":
            out = np.sin(2 * np.pi * s) / (2 * np.pi)
        elif self.kind == "square":
            out = np.where(s < 0.25, s, np.where(s < 0.75, 0.5 - s, s - 1.0))
        else:
            out = self._tabulated_primitive(s)
        return self.scale * out

    def _tabulated_primitive(self, s):
        t, g = self.t_samples, self.g_samples
        s = np.asarray(s, dtype=float)
        i = np.clip(np.searchsorted(t, s, side="right") - 1, 0, t.size - 2)
        dt = s - t[i]
        slope = (g[i + 1] - g[i]) / (t[i + 1] - t[i])
        return self._G_nodes[i] + g[i] * dt + 0.5 * slope * dt**2

    def gamma(self) -> float:
        """Second moment ``int_0^1 G(t)^2 dt`` (closed form for built-ins)."""
        if self.kind == "harmonic":
            value = self.scale**2 / (8 * np.pi**2)
        elif self.kind == "square":
            value = self.scale**2 / 48.0
        else:
            value = self.gamma_quadrature()
        if not value > 0:
            raise ValueError(f"excitation moment Gamma={value!r} is not positive")
        return float(value)

    def gamma_quadrature(self) -> float:
        """``Gamma`` by composite Simpson with ``samples_per_period`` intervals."""
        s = np.linspace(0.0, 1.0, self.samples_per_period + 1)
        return float(simpson(self.G(s) ** 2, x=s))


@dataclass(frozen=True)
class AssumptionReport:
    mean_g: float
    mean_G: float
    gamma: float
    max_abs_g: float
    max_abs_G: float
    tolerance: float
    zero_mean_g: bool
    zero_mean_G: bool

    @property
    def passed(self) -> bool:
        return self.zero_mean_g and self.zero_mean_G

    def messages(self) -> list[str]:
        out = []
        out.append(
            ("Assumption 1 passed" if self.zero_mean_g else "Assumption 1 failed")
            + f", mean={self.mean_g!r}"
        )
        out.append(
            ("Assumption 2 passed" if self.zero_mean_G else "Assumption 2 failed")
            + f", mean={self.mean_G!r}"
        )
        return out


def g_at(e: Excitation, t):
    return e.g(t)


def G_at(e: Excitation, t):
    return e.G(t)


def gamma_moment(e: Excitation) -> float:
    return e.gamma()


def verify_assumptions(e: Excitation) -> AssumptionReport:
    """Measure the zero-mean conditions on ``g`` and ``G``.

    Failures are reported, never raised.
    """
    m = e.samples_per_period
    s = np.linspace(0.0, 1.0, m + 1)
    if e.kind == "tabulated":
        # exact integrals of the piecewise-linear interpolant and its primitive
        t, g_grid = e.t_samples, e.g_samples
        h = np.diff(t)
        slope = np.diff(g_grid) / h
        G0 = e._G_nodes[:-1]
        mean_g = float(e._G_nodes[-1])
        mean_G = float(np.sum(G0 * h + g_grid[:-1] * h**2 / 2 + slope * h**3 / 6))
        G = np.append(e.G(s[:-1]), mean_g)
    else:
        g_grid = e.g(s)
        mean_g = _piecewise_simpson(e.g, e.breakpoints, m)
        G = e.G(s)
        mean_G = _piecewise_simpson(e.G, e.breakpoints, m)
    gamma = float(simpson(G**2, x=s))
    tol = e.tolerance
    return AssumptionReport(
        mean_g=mean_g,
        mean_G=mean_G,
        gamma=gamma,
        max_abs_g=float(np.max(np.abs(g_grid))),
        max_abs_G=float(np.max(np.abs(G))),
        tolerance=tol,
        zero_mean_g=abs(mean_g) <= tol,
        zero_mean_G=abs(mean_G) <= tol,
    )


def _piecewise_simpson(f, breaks, m: int) -> float:
    """Simpson over ``[0, 1]`` split at ``breaks``, using one-sided limits at each jump."""
    edges = [0.0, *breaks, 1.0]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(2, 2 * round(m * (b - a) / 2))
        x = np.linspace(a, b, n + 1)
        y = f(x)
        y[-1] = f(np.nextafter(b, a))
        total += simpson(y, x=x)
    return float(total)


def load_excitation_csv(path, samples_per_period: int = 4096) -> Excitation:
    """Read a two-column ``t,g`` CSV file; a non-numeric header row is skipped."""
    rows = []
    header_allowed = True
    with open(Path(path), newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                t, g = (float(v) for v in row[:2])
            except ValueError:
                if header_allowed:
                    header_allowed = False
                    continue
                raise ValueError(f"{path}: malformed row {lineno + 1}: {row!r}") from None
            header_allowed = False
            if len(row) != 2:
                raise ValueError(f"{path}: expected 2 columns on row {lineno + 1}")
            rows.append((t, g))
    if not rows:
        raise ValueError(f"{path}: no samples")
    t, g = np.array(rows).T
    return Excitation.tabulated(t, g, samples_per_period=samples_per_period)

