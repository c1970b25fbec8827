import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treewaves import comparison as C
from treewaves import regions as R
from treewaves import wave_solver as W
from treewaves.nonlinearity import CUBIC, DomainError, System

SMALL_D = System.cubic(0.1933, 0.00205, 5)
LARGE_D = System.cubic(0.1933, 0.4, 5)


@pytest.fixture(scope="module")
def wave_small():
    return W.solve(SMALL_D)


@pytest.fixture(scope="module")
def wave_large():
    return W.solve(LARGE_D)


# --- residual operator and Delta_k -------------------------------------------------


def test_residual_of_equilibria():
    xi = np.linspace(-5, 5, 101)
    s = System.cubic(0.3, 0.2, 3)
    assert np.all(C.residual_op(s, 1.7, C.ConstantProfile(0.0), xi).values == 0.0)
    rep = C.residual_op(s, 0.0, C.ConstantProfile(0.3), xi)
    assert np.max(np.abs(rep.values)) < 1e-16


def test_residual_reports_argmax():
    s = System.cubic(0.3, 0.2, 3)
    sub = C.SteepSubsolution(0.8, -0.2, 0.2)
    xi = np.linspace(-3, 3, 601)
    rep = C.residual_op(s, 0.0, sub, xi)
    assert rep.max == rep.values.max()
    assert rep.values[np.searchsorted(xi, rep.argmax)] == rep.max


def test_delta_kappa_examples():
    sub = C.WideSubsolution(2.0, 1.0, 4.0)
    assert float(C.delta_k_fn(4.0, sub.kappa, 0.0)) == pytest.approx(1.0, abs=1e-15)
    rng = np.random.default_rng(3)
    xi = rng.uniform(-1, 20, 1000)
    got = C.delta_k_fn(4.0, sub.kappa, xi)
    want = sub.delta_kappa_exact(xi)
    assert np.all(np.abs(got - want) <= 1e-14 * np.maximum(1.0, np.abs(want)))


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 6), st.floats(-10, 10))
def test_delta_of_affine(alpha, beta, k, xi):
    f = lambda x: alpha * np.asarray(x) + beta
    assert float(C.delta_k_fn(k, f, xi)) == pytest.approx(alpha * (k - 1), abs=1e-11 * (1 + abs(beta) + abs(alpha * xi)))


def test_delta_affine_vanishes_for_k_one():
    f = lambda x: 2.5 * np.asarray(x) - 1.0
    assert abs(float(C.delta_k_fn(1.0, f, 0.7))) < 1e-14


def test_interpolated_wave_has_small_residual(wave_small, wave_large):
    for s, sol in ((SMALL_D, wave_small), (LARGE_D, wave_large)):
        prof = C.InterpolatedProfile.from_wave(sol)
        inner = sol.xi[np.abs(sol.xi) < sol.grid.L - 1.5]
        assert np.max(np.abs(C.residual_op(s, sol.c, prof, inner).values)) < 1e-4


def test_interpolated_profile_clamps():
    prof = C.InterpolatedProfile([-1.0, 0.0, 1.0], [0.0, 0.5, 1.0])
    assert prof(-5.0) == 0.0 and prof(5.0) == 1.0
    assert prof.derivative(np.array([-5.0, 5.0])).tolist() == [0.0, 0.0]


# --- steep sub-solution -------------------------------------------------------------


def test_smoothstep_shape():
    t = np.linspace(0, 1, 10001)
    s = C.smoothstep(t)
    assert s[0] == 0.0 and s[-1] == 1.0 and np.all(np.diff(s) > 0)
    ds = C.smoothstep_derivative(t)
    assert ds.max() == pytest.approx(15 / 8, rel=1e-8)
    assert C.smoothstep_derivative(np.array([0.0, 1.0])).tolist() == [0.0, 0.0]


def test_steep_structure():
    sub = C.SteepSubsolution(0.6, -0.3, 0.4)
    assert sub(-0.3) == 0.0 and sub(0.4) == pytest.approx(0.6)
    assert sub(-1.0) == 0.0 and sub(2.0) == pytest.approx(0.6)
    xi = np.linspace(-0.3, 0.4, 5001)
    assert np.all(np.diff(sub(xi)[1:-1]) > 0)
    assert np.max(sub.derivative(xi)) == pytest.approx(sub.max_derivative, rel=1e-6)
    assert sub.max_derivative == pytest.approx(15 / 8 * 0.6 / 0.7)
    with pytest.raises(DomainError):
        C.SteepSubsolution(0.6, 0.4, 0.4)


def test_build_steep_example():
    s = System.cubic(0.1, 0.005, 2)
    sub = C.build_steep(s, A=0.55)
    assert sub.eps > 0
    assert sub.eps == pytest.approx(-R.j_minus(CUBIC, 0.1, 0.005, 0.55, 2), abs=1e-10)
    # brute-force oracle for the extremal problem
    v = np.linspace(0, 0.55, 200_001)
    brute = np.min(v * (1 - v) * (v - 0.1) + 0.005 * (2 * 0.55 - 3 * v))
    assert sub.eps == pytest.approx(brute, abs=1e-9)
    assert sub.cbar == pytest.approx(-0.99 * sub.eps / sub.max_derivative)


def test_build_steep_preconditions():
    s = System.cubic(0.1, 0.005, 2)
    with pytest.raises(DomainError):
        C.build_steep(s, A=0.1)
    with pytest.raises(DomainError):
        C.build_steep(s, A=0.5, xi0=-0.6, xi1=0.6)
    with pytest.raises(C.CertificateUnavailable):
        C.build_steep(System.cubic(0.5, 0.3, 2))
    with pytest.raises(C.CertificateUnavailable):
        C.build_steep(System.cubic(0.3, 0.3, 2), A=0.9)


def test_steep_certificate_and_speed(wave_small):
    sub = C.build_steep(SMALL_D)
    rep = C.verify_certificate(SMALL_D, sub.cbar, sub)
    assert rep.passed and rep.n_points >= 10_000
    assert sub.cbar < 0
    assert wave_small.c <= sub.cbar + 1e-6


def test_wide_bridge_fails_certificate():
    s = System.cubic(0.1933, 0.00205, 5)
    ok = C.build_steep(s)
    bad = C.SteepSubsolution(ok.A, -1.5, 1.5, ok.eps)
    rep = C.verify_certificate(s, ok.cbar, bad)
    assert not rep.passed and rep.max_I > 0


def test_certificate_needs_enough_points():
    sub = C.build_steep(SMALL_D)
    with pytest.raises(DomainError):
        C.verify_certificate(SMALL_D, sub.cbar, sub, n_points=100)


# --- wide sub-solution -------------------------------------------------------------


@settings(max_examples=40)
@given(st.floats(1.05, 8.0), st.floats(0.05, 1.0), st.floats(0.05, 0.95))
def test_wide_profile_is_c1(frac, A, gap):
    l = 1.0 + frac
    k = l + gap * 10
    sub = C.WideSubsolution(l, A, k)
    assert all(v <= 1e-12 for v in sub.junction_gaps().values())
    b0, b1 = sub.breaks
    h = 1e-7
    for b in (b0, b1):
        left = (sub(b) - sub(b - h)) / h
        right = (sub(b + h) - sub(b)) / h
        assert abs(left - right) < 1e-5 * (1 + abs(left))


def test_wide_breakpoint_values():
    l, A = 2.0, 0.9
    sub = C.WideSubsolution(l, A, 4.0)
    b0, b1 = sub.breaks
    assert sub(b0) == pytest.approx(A * (1 - l - math.log(l) / 3), abs=1e-15)
    assert sub(b1) == pytest.approx(A * (1 - l), abs=1e-15)


@pytest.mark.parametrize("l,A,k", [(2.0, 0.9, 4.0), (math.sqrt(5), 0.99, 5.0), (1.3, 0.5, 2.0)])
def test_wide_derivative_bound(l, A, k):
    sub = C.WideSubsolution(l, A, k)
    xi = np.linspace(-6, 20, 100_001)
    dv = sub.derivative(xi)
    bound = A * l * math.log(l)
    assert dv.min() >= 0.0 and dv.max() <= bound * (1 + 1e-12)
    assert float(sub.derivative(-1.0)) == pytest.approx(bound, rel=1e-14)


def test_wide_domain_errors():
    with pytest.raises(DomainError):
        C.WideSubsolution(3.0, 0.9, 2.0)
    with pytest.raises(DomainError):
        C.WideSubsolution(1.5, 0.9, 1.0)
    with pytest.raises(DomainError):
        C.build_wide(System.cubic(0.2, 0.4, 1.0))
    with pytest.raises(DomainError):
        C.build_wide(LARGE_D, l=6.0)
    with pytest.raises(DomainError):
        C.build_wide(LARGE_D, A=0.1)


def test_build_wide_example(wave_large):
    sub = C.build_wide(LARGE_D)
    assert sub.l == pytest.approx(math.sqrt(5))
    assert sub.d_star > R.d_star(CUBIC, 0.1933, 5)
    assert sub.d_star < 0.4
    assert sub.eps == pytest.approx((0.4 - sub.d_star) * (5 - sub.l) * (1 - 1 / sub.l))
    L = math.log(sub.l)
    factor = (5 - sub.l) * (1 - 1 / sub.l)
    want = 0.99 * max(-sub.eps / L, -sub.eps * sub.C / (sub.A * factor * sub.l * L))
    assert sub.cbar == pytest.approx(want)
    rep = C.verify_certificate(LARGE_D, sub.cbar, sub)
    assert rep.passed
    assert wave_large.c <= sub.cbar + 1e-6


def test_wide_C_matches_dense_scan():
    sub = C.build_wide(LARGE_D)
    # the infimum is approached at the left end of the open interval
    xs = np.linspace(sub.breaks[0] + 1e-9, -1e-9, 400_001)
    assert sub.C == pytest.approx(np.min(C.delta_k_fn(5.0, sub, xs)), abs=1e-8)


@pytest.mark.parametrize("l", [1.0 + 1e-4, 5.0 - 1e-4])
def test_wide_fails_near_l_limits(l):
    with pytest.raises(C.CertificateUnavailable):
        C.build_wide(LARGE_D, l=l)


def test_wide_fails_below_threshold():
    with pytest.raises(C.CertificateUnavailable):
        C.build_wide(System.cubic(0.1933, 0.005, 5))


# --- ordering and soundness -----------------------------------------------------------


def test_dominating_shift(wave_small, wave_large):
    for s, sol, sub in ((SMALL_D, wave_small, C.build_steep(SMALL_D)),
                        (LARGE_D, wave_large, C.build_wide(LARGE_D))):
        phi = C.InterpolatedProfile.from_wave(sol)
        lo, hi = sub.active_range()
        xi = np.linspace(lo - 2, hi + 2, 20_001)
        shift = C.dominating_shift(phi, sub, xi)
        assert shift is not None
        assert np.all(phi(xi + shift) >= sub(xi))
        if shift > 1e-6:
            assert not np.all(phi(xi + shift - 1e-3) >= sub(xi))


def test_dominating_shift_none_when_impossible():
    phi = C.ConstantProfile(0.2)
    sub = C.SteepSubsolution(0.9, -0.4, 0.4)
    assert C.dominating_shift(phi, sub, np.linspace(-2, 2, 101)) is None


@settings(max_examples=6, deadline=None)
@given(st.floats(0.05, 0.3), st.floats(2.0, 5.0))
def test_certificate_soundness_small_d(a, k):
    inside = [d for d in np.geomspace(1e-4, 0.05, 30) if R.in_D_minus(CUBIC, a, d, k)[0]]
    if not inside:
        return
    s = System.cubic(a, inside[len(inside) // 2], k)
    sub = C.build_steep(s)
    if C.verify_certificate(s, sub.cbar, sub).passed:
        assert W.solve(s).c <= sub.cbar + 1e-6


# --- Delta_k[Psi] structure -------------------------------------------------------------


def test_psi_delta_props_example():
    rep = C.verify_psi_delta_props(2.0, 0.9, 4.0)
    assert rep.passed, rep.details
    assert rep.details["i"] == 0.0
    assert rep.details["v"] <= 1e-12


@settings(max_examples=15, deadline=None)
@given(st.floats(1.1, 3.0), st.floats(0.1, 0.99), st.floats(0.2, 4.0))
def test_psi_delta_props_random(l, A, extra):
    assert C.verify_psi_delta_props(l, A, l + extra, n=5001).passed


def test_psi_delta_props_domain():
    with pytest.raises(DomainError):
        C.verify_psi_delta_props(2.0, 1.0, 4.0)
