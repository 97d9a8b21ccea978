"""
Square wave against cosine
==========================

The stabilizing strength of the excitation is Gamma, the mean square of its
primitive.  A unit square wave has Gamma = 1/48, larger than the cosine's
1/(8 pi^2), so it stabilizes with a smaller gain.
"""

# %%
from vibrastab import ControlParams, Excitation, ModeSystem, StringParams, verify_assumptions
from vibrastab.stability import boundary_delta, classify_monodromy

params = StringParams(a=1.0, gamma=1.0, alpha=0.1)
for e in (Excitation.harmonic(), Excitation.square()):
    r = verify_assumptions(e)
    print(f"{e.kind:8s} Gamma={e.gamma():.6f}  ", "; ".join(r.messages()))

# %%
# At delta = 0.07 and k = 100 the cosine is below its threshold and the
# square wave is above.
for e in (Excitation.harmonic(), Excitation.square()):
    ctrl = ControlParams(0.07, 100.0, e)
    v = classify_monodromy(ModeSystem(1, params, ctrl))
    print(f"{e.kind:8s} delta*={float(boundary_delta(params, ctrl)):.5f}  verdict={v.stability}")
