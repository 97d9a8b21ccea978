"""
Conjugating away the fast feedback
==================================

The fast term B_n(t) = delta k g(t) E is nilpotent, so its flow is explicit
and conjugating C_n by it yields the slow generator D_n(t).  This script
checks that construction numerically and looks at how good the first
averaged term is.
"""

# %%
import numpy as np

from vibrastab import ControlParams, ModeSystem, StringParams
from vibrastab import chrono
from vibrastab.stability import generator_D, lambda1_closed_form, remainder_estimate

params = StringParams(a=1.0, gamma=1.0, alpha=0.1)
ms = ModeSystem(1, params, ControlParams(delta=0.1, k=100.0))

# %%
# Numerical conjugation P_B^-1 C P_B against the closed form of D_n.
t = np.linspace(0, 1, 9)
err = np.abs(chrono.conjugated_perturbation(ms.B, ms.Cfn, t) - generator_D(ms, t)).max()
print(f"conjugation vs closed form: {err:.2e}")

# %%
# The factorized flow equals the flow of B + C.
lhs, rhs, gap = chrono.variational_check(ms.B, ms.Cfn)
print("flow of B + C:\n", lhs)
print(f"factorized gap: {gap:.2e}")

# %%
# The average of D_n over one period is the first logarithm term.
print("quadrature:\n", chrono.lambda1(ms.D))
print("closed form:\n", lambda1_closed_form(ms))

# %%
# How far is log P from its first term?  Holding delta k fixed, the gap
# shrinks like delta^2.  Its size still grows with the mode index.
rep = remainder_estimate(ms, [0.1, 0.05, 0.025], n_max=8)
print("fitted exponents per mode:", np.round(rep.exponents, 3))
print("normalized remainder at each delta (rows) and mode (columns):")
print(np.array2string(rep.normalized, precision=4))

# %%
# With k held at 100 instead, a first-order delta / k term dominates.
rep_k = remainder_estimate(ms, [0.1, 0.05, 0.025], n_max=8, hold="k")
print("fixed-k exponents:", np.round(rep_k.exponents, 3))
