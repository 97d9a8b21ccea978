import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from vibrastab.chrono import matrix_log_principal
from vibrastab.excitation import Excitation
from vibrastab.model import ControlParams, StringParams
from vibrastab.stability import (
    ModeSystem,
    Stability,
    averaged_eigenvalues,
    bifurcation_delta,
    boundary_delta,
    classify,
    classify_modes,
    classify_monodromy,
    generator_D,
    lambda1_closed_form,
    monodromy,
    remainder_estimate,
    threshold_margin,
    threshold_test,
)

DAMPED = StringParams(a=1.0, gamma=1.0, alpha=0.1)
UNDAMPED = StringParams(a=1.0, gamma=1.0, alpha=0.0)
STABLE = ControlParams(delta=0.1, k=100.0)
UNSTABLE = ControlParams(delta=0.05, k=100.0)
GAMMA_H = 1 / (8 * math.pi**2)

# mpmath (30 digits) evaluations of the closed forms at the baseline
D_BASELINE_QUARTER = [[0.0159154943091895336, 0.01], [-0.0194218453415033962, -0.0169154943091895336]]
L1_BASELINE_21 = -0.00516514795529222143
MARGIN_STABLE = 5.16514795529222209e-05
MARGIN_UNSTABLE = -4.33371301117694399e-05
BIFURCATION_DELTA = 0.0770811380913371951


def mode(n=1, params=DAMPED, control=STABLE):
    return ModeSystem(n, params, control)


def ivp_monodromy(ms):
    """Independent oracle: adaptive integration of the unconjugated A_n over one period."""
    A = ms.A
    sol = solve_ivp(
        lambda t, y: (A(t) @ y.reshape(2, 2)).ravel(),
        (0, 1),
        np.eye(2).ravel(),
        method="DOP853",
        rtol=1e-12,
        atol=1e-14,
    )
    return sol.y[:, -1].reshape(2, 2)


def test_generator_D_reduces_to_C():
    ms0 = mode(control=ControlParams(0.0, 100.0))
    for t in (0.0, 0.3, 0.77):
        np.testing.assert_array_equal(generator_D(ms0, t), ms0.C)
    np.testing.assert_allclose(generator_D(mode(), 0.0), mode().C, atol=1e-17)


def test_generator_D_golden_value():
    np.testing.assert_allclose(generator_D(mode(), 0.25), D_BASELINE_QUARTER, rtol=1e-14, atol=1e-17)


def test_generator_D_trace():
    t = np.linspace(0, 1, 17)
    np.testing.assert_allclose(np.trace(generator_D(mode(), t), axis1=-2, axis2=-1), -0.1 / 100, atol=1e-17)


def test_uncontrolled_tail_is_constant():
    ms = mode(12, UNDAMPED, ControlParams(0.1, 100.0, cutoff_N=8))
    assert not ms.controlled and ms.effective_delta == 0
    c = 1 - 36
    np.testing.assert_allclose(generator_D(ms, 0.3), [[0, 0.01], [c / 100, 0]], atol=1e-17)


def test_lambda1_closed_form():
    L = lambda1_closed_form(mode())
    assert L[1, 0] == pytest.approx(L1_BASELINE_21, rel=1e-13)
    assert L[0, 1] == 0.01 and L[1, 1] == -0.001 and L[0, 0] == 0
    np.testing.assert_array_equal(lambda1_closed_form(mode(control=ControlParams(0.0, 100.0))), mode().C)
    assert np.trace(lambda1_closed_form(mode(params=UNDAMPED))) == 0


def test_averaged_eigenvalue_cases():
    xi = averaged_eigenvalues([[0.0, 1.0], [-4.0, 0.0]])
    assert xi[0] == pytest.approx(2j) and xi[1] == pytest.approx(-2j)
    xi = averaged_eigenvalues([[-1.0, 1.0], [-0.25, 0.0]])  # Theta^2 = 4 Delta
    assert xi[0] == xi[1] == -0.5
    xi = averaged_eigenvalues(lambda1_closed_form(mode()))
    assert xi[0].real == pytest.approx(-5e-4, rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_averaged_eigenvalues_match_eigensolver(entries):
    M = np.array(entries).reshape(2, 2)
    xi = np.array(averaged_eigenvalues(M))
    ev = np.linalg.eigvals(M)
    scale = 1 + np.abs(M).max()
    for x in xi:
        assert np.min(np.abs(ev - x)) <= 1e-12 * scale or np.min(np.abs(ev - x)) <= 1e-6 * scale and abs(
            np.prod(ev - x)
        ) <= 1e-12 * scale**2


def test_threshold_examples():
    r = threshold_test(mode())
    assert r.side == "stable" and r.margin == pytest.approx(MARGIN_STABLE, rel=1e-12)
    assert r.eigen_kind == "complex"
    r = threshold_test(mode(control=UNSTABLE))
    assert r.side == "unstable" and r.margin == pytest.approx(MARGIN_UNSTABLE, rel=1e-12)
    assert r.eigen_kind == "positive_real"
    assert threshold_test(mode(), epsilon=1e-4).side == "gap"
    assert threshold_test(mode(params=UNDAMPED)).eigen_kind == "imaginary"
    with pytest.raises(ValueError):
        threshold_test(mode(), epsilon=-1)


@pytest.mark.parametrize("n", [2, 3, 100])
def test_threshold_stable_for_large_n_at_any_gain(n):
    for d in (1e-6, 1e-3, 0.1):
        assert threshold_test(mode(n, control=ControlParams(d, 100.0))).side == "stable"


def test_negative_real_window():
    # just above the threshold, below the bifurcation: averaged eigenvalues negative real
    ms = mode(control=ControlParams(0.077, 100.0))
    r = threshold_test(ms)
    assert r.side == "stable" and r.eigen_kind == "negative_real"
    xi = averaged_eigenvalues(lambda1_closed_form(ms))
    assert xi[0].imag == 0 and xi[0].real < 0 and xi[1].real < 0


def test_boundary_delta():
    assert boundary_delta(DAMPED, STABLE) == pytest.approx(math.sqrt(0.75 / GAMMA_H) / 100, rel=1e-14)
    assert boundary_delta(DAMPED, STABLE, n=2) == 0
    ms = mode(control=ControlParams(float(boundary_delta(DAMPED, STABLE)), 100.0))
    assert abs(threshold_margin(ms)) < 1e-18


def test_classify_hand_matrices():
    th = 0.3
    R = np.array([[math.cos(th), math.sin(th)], [-math.sin(th), math.cos(th)]])
    assert classify(R, 1.0)[0] is Stability.STABLE
    assert classify(0.9 * R, 0.81)[0] is Stability.ASYMPTOTICALLY_STABLE
    assert classify(np.diag([2.0, 0.5]), 1.0)[0] is Stability.UNSTABLE
    assert classify(np.array([[1.0, 1.0], [0.0, 1.0]]), 1.0)[0] is Stability.MARGINAL
    assert classify(-np.eye(2), 1.0)[0] is Stability.MARGINAL
    with pytest.raises(RuntimeError):
        classify(np.diag([1.0, -1.0]), 1.0)


def test_damped_unforced_mode_closed_form():
    ms = mode(3, control=ControlParams(0.0, 100.0))
    v = classify_monodromy(ms)
    assert v.stability is Stability.ASYMPTOTICALLY_STABLE
    np.testing.assert_allclose(v.monodromy_matrix, expm(ms.C), atol=1e-13)


def test_undamped_uncontrolled_rotation():
    ms = mode(10, UNDAMPED, ControlParams(0.1, 100.0, cutoff_N=8))
    v = classify_monodromy(ms)
    w = math.sqrt(25 - 1)
    assert v.stability is Stability.STABLE
    for eig in v.monodromy_eigs:
        assert abs(abs(eig) - 1) <= 1e-9
    assert sorted(np.angle(v.monodromy_eigs)) == pytest.approx([-w / 100, w / 100], abs=1e-12)


def test_baseline_stable_against_oracle():
    ms = mode()
    v = classify_monodromy(ms)
    assert v.stability is Stability.ASYMPTOTICALLY_STABLE
    assert v.spectral_radius <= math.exp(-0.1 / 200) + 1e-6
    np.testing.assert_allclose(v.monodromy_matrix, ivp_monodromy(ms), atol=1e-9)


def test_baseline_unstable_against_oracle():
    ms = mode(control=UNSTABLE)
    v = classify_monodromy(ms)
    assert v.stability is Stability.UNSTABLE
    np.testing.assert_allclose(v.monodromy_matrix, ivp_monodromy(ms), atol=1e-9)


def test_square_wave_monodromy_against_oracle():
    ctrl = ControlParams(0.07, 100.0, Excitation.square())
    ms = mode(control=ctrl)
    assert threshold_test(ms).side == "stable"  # Gamma = 1/48: 0.0049/48 > 0.75e-4
    v = classify_monodromy(ms)
    assert v.stability is Stability.ASYMPTOTICALLY_STABLE
    # oracle through the unconjugated system split at the jumps
    P = np.eye(2)
    for a, b in ((0, 0.25), (0.25, 0.75), (0.75, 1.0)):
        s = ctrl.excitation.g(0.5 * (a + b))
        M = ms.C + np.array([[0, 0], [ctrl.delta * ctrl.k * s, 0]])
        P = expm((b - a) * M) @ P
    np.testing.assert_allclose(v.monodromy_matrix, P, atol=1e-10)
    with pytest.raises(ValueError):
        monodromy(DAMPED, ctrl, [1], 1026)


def test_classify_modes_matches_single():
    vs = classify_modes(DAMPED, STABLE, [1, 2, 5], 2048)
    for n, v in zip([1, 2, 5], vs):
        single = classify_monodromy(mode(n), 2048)
        np.testing.assert_array_equal(v.monodromy_matrix, single.monodromy_matrix)
    with pytest.raises(ValueError):
        classify_modes(DAMPED, STABLE, [1], 512)


def test_log_consistency():
    for ctrl in (STABLE, UNSTABLE):
        v = classify_monodromy(mode(control=ctrl))
        L, cut = matrix_log_principal(v.monodromy_matrix)
        assert not cut
        ev = np.linalg.eigvals(expm(L))
        for e in v.monodromy_eigs:
            assert np.min(np.abs(ev - e)) <= 1e-8


def test_bifurcation_scan():
    ms = mode()
    root = bifurcation_delta(ms, 0.05, 0.2)
    assert root == pytest.approx(BIFURCATION_DELTA, rel=1e-8)
    L = lambda1_closed_form(replace(ms, control=replace(ms.control, delta=root)))
    theta, det = np.trace(L), np.linalg.det(L)
    assert abs(theta**2 - 4 * det) < 1e-10
    below = averaged_eigenvalues(lambda1_closed_form(mode(control=ControlParams(root * 0.999, 100.0))))
    above = averaged_eigenvalues(lambda1_closed_form(mode(control=ControlParams(root * 1.001, 100.0))))
    assert below[0].imag == 0 and below[0] != below[1]
    assert above[0].imag != 0
    assert sum(below).real == pytest.approx(sum(above).real)
    with pytest.raises(ValueError):
        bifurcation_delta(ms, 0.1, 0.2)


def test_remainder_vanishes_without_feedback():
    ms = mode(control=ControlParams(0.0, 100.0))
    P = monodromy(DAMPED, ms.control, [1, 2, 3]).matrix
    for j, n in enumerate((1, 2, 3)):
        L, _ = matrix_log_principal(P[j])
        assert np.linalg.norm(L.real - lambda1_closed_form(mode(n, control=ms.control))) < 1e-9


def test_remainder_estimate_report_shape():
    r = remainder_estimate(mode(), [0.1, 0.05], 3, steps=2048)
    assert r.remainder.shape == (2, 3) and r.exponents.shape == (3,)
    np.testing.assert_allclose(r.ks, [100.0, 200.0])
    assert not r.excluded
    with pytest.raises(ValueError):
        remainder_estimate(mode(), [0.1], 3, hold="bogus")
    with pytest.raises(ValueError):
        remainder_estimate(mode(control=ControlParams(0.1, 1.0)), [0.1], 5)


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0.5, 2.0),
    st.floats(1.0, 20.0),
    st.sampled_from([50.0, 100.0]),
    st.integers(1, 8),
)
def test_undamped_dichotomy(gamma, dk, k, n):
    """det P = 1: eigenvalues on the unit circle or a reciprocal real pair, and the verdict agrees."""
    params = StringParams(1.0, gamma, 0.0)
    v = classify_monodromy(ModeSystem(n, params, ControlParams(dk / k, k)), 1024)
    e1, e2 = v.monodromy_eigs
    assert abs(e1 * e2 - 1) < 1e-8
    on_circle = abs(abs(e1) - 1) < 1e-9 and abs(abs(e2) - 1) < 1e-9
    if on_circle:
        assert v.stability in (Stability.STABLE, Stability.MARGINAL)
    else:
        assert abs(e1.imag) < 1e-9 and v.stability is Stability.UNSTABLE


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(0.0, 0.5), st.floats(1.0, 20.0), st.floats(1.0, 300.0), st.integers(1, 20))
def test_threshold_monotone_in_n(gamma, alpha, dk, k, n):
    params = StringParams(1.0, gamma, alpha)
    ctrl = ControlParams(dk / k, k)
    if threshold_test(ModeSystem(n, params, ctrl)).side == "stable":
        for m in range(n + 1, n + 6):
            assert threshold_test(ModeSystem(m, params, ctrl)).side == "stable"
