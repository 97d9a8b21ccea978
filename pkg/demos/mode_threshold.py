"""
One mode, one period
====================

Follow a single string mode through the averaged threshold and the exact
one-period monodromy, then scan the feedback gain across the threshold.
"""

# %%
# Baseline: a = 1, gamma = 1 (the first mode is unstable without feedback),
# light damping alpha = 0.1, harmonic excitation and k = 100.
import numpy as np

from vibrastab import ControlParams, ModeSystem, StringParams, threshold_test
from vibrastab.stability import (
    averaged_eigenvalues,
    boundary_delta,
    classify_monodromy,
    lambda1_closed_form,
)

params = StringParams(a=1.0, gamma=1.0, alpha=0.1)
control = ControlParams(delta=0.1, k=100.0)
ms = ModeSystem(1, params, control)

# %%
# The averaged matrix and its eigenvalues.  A negative real part means the
# averaged mode decays.
L1 = lambda1_closed_form(ms)
print("Lambda1 =\n", L1)
print("eigenvalues:", averaged_eigenvalues(L1))
print("threshold:", threshold_test(ms))

# %%
# The monodromy matrix integrated over one period agrees: both multipliers
# sit inside the unit circle at radius exp(-alpha / 2k).
v = classify_monodromy(ms)
print(v.stability, "spectral radius", v.spectral_radius, "vs", np.exp(-0.1 / 200))

# %%
# Scan delta across the analytic boundary.  The monodromy verdict switches
# where delta^2 Gamma crosses k^-2 (4 gamma^2 - a^2) / 4.
d_star = float(boundary_delta(params, control))
print(f"analytic boundary delta* = {d_star:.5f}")
for d in np.linspace(0.6 * d_star, 1.4 * d_star, 9):
    v = classify_monodromy(ModeSystem(1, params, ControlParams(float(d), 100.0)))
    print(f"delta = {d:.5f}   radius = {v.spectral_radius:.8f}   {v.stability}")

# %%
# Higher modes need no help: once a^2 n^2 >= 4 gamma^2 the threshold holds
# for every positive gain.
for n in (2, 3, 10, 100):
    print(n, threshold_test(ModeSystem(n, params, ControlParams(1e-4, 100.0))).side)
