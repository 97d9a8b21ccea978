"""Vibrational stabilization of a disturbed string by fast-oscillating feedback.

The string ``u_tt = a^2 u_xx + gamma^2 u - alpha u_t + delta k^2 g(k tau) u`` on
``[0, 2 pi]`` splits into two-dimensional periodic systems, one per sine mode.
This package integrates their monodromy matrices, compares them with the
closed-form averaged thresholds and simulates the Galerkin truncation.
"""

from .excitation import Excitation, verify_assumptions
from .model import ControlParams, StringParams
from .stability import ModeSystem, Stability, classify_modes, threshold_test
from .galerkin import GalerkinSystem, end_to_end_verdict

__all__ = [
    "Excitation",
    "verify_assumptions",
    "StringParams",
    "ControlParams",
    "ModeSystem",
    "Stability",
    "classify_modes",
    "threshold_test",
    "GalerkinSystem",
    "end_to_end_verdict",
]

__version__ = "0.1.0"
