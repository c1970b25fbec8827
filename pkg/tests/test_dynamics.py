import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treewaves import dynamics as D
from treewaves import wave_solver as W
from treewaves.nonlinearity import CUBIC, DomainError, System, eval_g


def lattice(u, lo=0, boundary="edge"):
    u = np.asarray(u, dtype=float)
    return D.LatticeState(lo, lo + len(u) - 1, u, boundary)


# --- right-hand sides -------------------------------------------------------------


def test_rhs_equilibria():
    s = System.cubic(0.3, 0.2, 2)
    assert np.all(D.rhs_lattice(s, None, 0.0, lattice(np.zeros(9))) == 0.0)
    assert np.max(np.abs(D.rhs_lattice(s, None, 0.0, lattice(np.full(9, 0.3))))) < 1e-16
    assert np.all(D.rhs_lattice(s, None, 0.0, lattice(np.ones(9))) == 0.0)


def test_rhs_at_last_zero_site_of_step():
    s = System.cubic(0.5, 0.1, 2)
    st_ = D.LatticeState.step(-5, 5)
    rhs = D.rhs_lattice(s, None, 0.0, st_)
    assert rhs[st_.index.tolist().index(-1)] == pytest.approx(0.2, abs=1e-15)
    assert rhs[0] == 0.0 and rhs[-1] == 0.0


def test_rhs_uses_schedule_time():
    s = System.cubic(0.5, 0.1, 2)
    sched = D.DiffusionSchedule(lambda t: 0.1 * (1 + t))
    st_ = D.LatticeState.step(-3, 3)
    assert D.rhs_lattice(s, sched, 1.0, st_)[2] == pytest.approx(0.4)


def test_fixed_ghost_boundary():
    s = System.cubic(0.5, 0.1, 2)
    rhs = D.rhs_lattice(s, None, 0.0, lattice([0.5, 0.5], boundary=(0.25, 0.75)))
    assert rhs == pytest.approx([0.1 * (1.0 - 1.5 + 0.25), 0.1 * (1.5 - 1.5 + 0.5)])


def test_state_validation():
    with pytest.raises(DomainError):
        D.LatticeState(0, 3, np.zeros(3))
    with pytest.raises(DomainError):
        D.LatticeState(0, 1, [0.0, np.nan])
    with pytest.raises(DomainError):
        lattice([0, 1], boundary="periodic")
    with pytest.raises(DomainError):
        D.TreeState.layered(0, 2, 2.5, [0, 0.5, 1])
    with pytest.raises(DomainError):
        D.TreeState(0, 1, 2, [np.zeros(1), np.zeros(3)])


def test_tree_layered_matches_lattice():
    s = System.cubic(0.4, 0.3, 3)
    v = [0.0, 0.1, 0.45, 0.8, 1.0]
    tree = D.TreeState.layered(-2, 2, 3, v, "front")
    got = D.rhs_tree(s, None, 0.0, tree)
    want = D.rhs_lattice(s, None, 0.0, lattice(v, -2, "front"))
    for n, layer in enumerate(got):
        assert np.allclose(layer, want[n], atol=1e-15, rtol=0)


def test_tree_constant_one_is_fixed():
    s = System.cubic(0.4, 0.3, 2)
    tree = D.TreeState.layered(0, 3, 2, [1.0] * 4, "edge")
    assert all(np.all(x == 0.0) for x in D.rhs_tree(s, None, 0.0, tree))


def test_tree_locality():
    k = 3
    s = System.cubic(0.4, 0.3, k)
    base = D.TreeState.layered(0, 3, k, [0.2] * 4, "edge")
    bumped = [x.copy() for x in base.layers]
    bumped[2][4] += 0.1
    r0 = D.rhs_tree(s, None, 0.0, base)
    r1 = D.rhs_tree(s, None, 0.0, D.TreeState(0, 3, k, bumped, "edge"))
    changed = {(n, j) for n in range(4) for j in np.flatnonzero(r1[n] != r0[n])}
    assert changed == {(2, 4), (1, 4 // k)} | {(3, k * 4 + l) for l in range(k)}


# --- integration ------------------------------------------------------------------


def test_stability_guard():
    s = System.cubic(0.4, 0.5, 2)
    bound = D.stable_dt(s, None, 10.0)
    with pytest.raises(D.StabilityError) as err:
        D.integrate(s, None, lattice(np.zeros(5)), 1.0, dt=2 * bound)
    assert err.value.dt_max == pytest.approx(bound)
    with pytest.raises(DomainError):
        D.integrate(s, None, lattice(np.zeros(5)), 0.0)


def test_schedule_must_stay_positive():
    with pytest.raises(DomainError):
        D.DiffusionSchedule(lambda t: 1.0 - t).max_on(0.0, 2.0)
    with pytest.raises(DomainError):
        D.DiffusionSchedule.const(0.0)
    assert D.parse_schedule("const:0.25")(3.0) == 0.25
    assert D.parse_schedule("reversal")(400.0) == pytest.approx(0.001 + 300 / 1500)


@pytest.mark.parametrize("value", [0.0, 0.35, 1.0])
def test_equilibria_stay_fixed(value):
    s = System.cubic(0.35, 0.2, 2)
    tr = D.integrate(s, None, lattice(np.full(21, value)), 100.0, sample_dt=10)
    assert np.max(np.abs(tr.states - value)) < 1e-12


def test_pinned_step_stays_put():
    s = System.cubic(0.72, 0.001, 2)
    tr = D.integrate(s, None, D.LatticeState.step(-30, 30), 100.0, sample_dt=1)
    pos = D.front_track(tr)
    assert np.max(np.abs(pos - pos[0])) < 1


def test_layered_tree_trajectory_matches_lattice():
    s = System.cubic(0.3, 0.15, 2)
    v = [0.0, 0.05, 0.2, 0.5, 0.8, 0.95, 1.0, 1.0, 1.0, 1.0]
    tt = D.integrate(s, None, D.TreeState.layered(-4, 5, 2, v, "front"), 20.0, sample_dt=1)
    tl = D.integrate(s, None, lattice(v, -4, "front"), 20.0, sample_dt=1)
    for n in range(len(tt.t)):
        for i, layer in enumerate(tt.layer_values(n)):
            assert np.max(np.abs(layer - tl.states[n, i])) < 1e-10


# --- fronts -------------------------------------------------------------------------


def test_front_position_examples():
    st_ = D.LatticeState.step(-10, 10, at=3)
    assert D.front_position(st_) == pytest.approx(2.5)
    assert D.front_position(D.LatticeState.step(-9, 11, at=4)) == pytest.approx(3.5)
    assert D.front_position(np.zeros(5)) is None
    assert D.front_position(np.ones(5)) is None
    assert D.front_position([0.0, 0.25, 0.75, 1.0], lo=10) == pytest.approx(11.5)


@given(st.lists(st.floats(0, 1), min_size=3, max_size=20), st.integers(-50, 50))
def test_front_position_shift_equivariance(vals, lo):
    u = np.concatenate([[0.0], np.sort(vals), [1.0]])
    p = D.front_position(u, lo=lo)
    q = D.front_position(u, lo=lo + 1)
    assert p is not None and q == pytest.approx(p + 1)


@pytest.mark.parametrize("params", [(0.1933, 0.4, 5.0), (0.3, 0.5, 2.0), (0.7, 0.3, 0.5)])
def test_drift_matches_solver_speed(params):
    s = System.cubic(*params)
    sol = W.solve(s)
    c = sol.c
    assert abs(c) > 1e-4
    t_end = min(50 / abs(c), 500.0)
    span = abs(c) * t_end
    lo, hi = (-int(span) - 40, 40) if c < 0 else (-40, int(span) + 40)
    i = np.arange(lo, hi + 1)
    xs = np.concatenate([[-sol.grid.L], sol.xi, [sol.grid.L]])
    u0 = np.interp(i, xs, sol.profile(), left=0.0, right=1.0)
    tr = D.integrate(s, None, D.LatticeState(lo, hi, u0, "front"), t_end, sample_dt=t_end / 10)
    pos = D.front_track(tr)
    rate = (pos[-1] - pos[0]) / t_end
    assert rate == pytest.approx(c, rel=0.02)


# --- order properties ----------------------------------------------------------------


def test_comparison_identical_data():
    s = System.cubic(0.4, 0.05, 3)
    u = np.linspace(0, 1, 15)
    rep = D.comparison_check(s, u, u, 10.0)
    assert rep.passed and rep.max_violation == 0.0


def test_comparison_shifted_front():
    s = System.cubic(0.4, 0.05, 3)
    i = np.arange(-15, 16)
    v0 = 0.5 * (1 + np.tanh(i / 2.0))
    u0 = 0.5 * (1 + np.tanh((i + 1) / 2.0))
    assert D.comparison_check(s, u0, v0, 20.0, lo=-15, boundary="front").passed


def test_comparison_precondition():
    s = System.cubic(0.4, 0.05, 3)
    with pytest.raises(DomainError):
        D.comparison_check(s, [0.2, 0.1], [0.3, 0.0], 1.0)
    with pytest.raises(DomainError):
        D.comparison_check(s, [0.2], [0.1, 0.0], 1.0)


def test_comparison_reports_violation_for_unordered_result():
    # a negative tolerance turns exact equality into a violation
    s = System.cubic(0.4, 0.05, 3)
    u0 = np.linspace(0, 1, 11)
    rep = D.comparison_check(s, u0, u0, 5.0, schedule=D.DiffusionSchedule.const(0.05), tol=-1.0)
    assert not rep.passed and rep.first_violation is not None


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_comparison_random_pairs(seed):
    rng = np.random.default_rng(seed)
    s = System.cubic(0.4, 0.05, 3)
    v0 = rng.uniform(0, 1, 25)
    u0 = np.minimum(1.0, v0 + rng.uniform(0, 1, 25) * rng.integers(0, 2, 25))
    assert D.comparison_check(s, u0, v0, 20.0).passed


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.95), st.floats(0.005, 1.0), st.floats(0.5, 4))
def test_monotone_data_stays_monotone_and_bounded(seed, a, d, k):
    rng = np.random.default_rng(seed)
    u0 = np.sort(rng.uniform(0, 1, 30))
    tr = D.integrate(System.cubic(a, d, k), None, lattice(u0, 0, "front"), 20.0, sample_dt=1.0)
    assert np.min(np.diff(tr.states, axis=1)) >= -1e-9
    assert tr.states.min() >= -1e-9 and tr.states.max() <= 1 + 1e-9


# --- invariant levels --------------------------------------------------------------


def test_invariant_levels_closed_form():
    # a = 1/2, d = 0.02, k = 2: u^2 - u/2 + 0.04 = 0 and u^2 - 1.5u + 0.52 = 0
    ceiling, floor = D.invariant_levels(System.cubic(0.5, 0.02, 2))
    assert ceiling == pytest.approx(0.4, abs=1e-10)
    assert floor == pytest.approx((1.5 - np.sqrt(0.17)) / 2, abs=1e-10)


def test_invariant_levels_absent_above_thresholds():
    assert D.invariant_levels(System.cubic(0.5, 1.0, 2)) == (None, None)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 0.8), st.floats(0.5, 3), st.floats(0.1, 0.9), st.integers(0, 10**6))
def test_invariant_levels_hold_along_trajectories(a, k, frac, seed):
    from treewaves import regions as R
    d = frac * min(R.d_plus(CUBIC, a, k), R.d_minus(CUBIC, a))
    s = System.cubic(a, d, k)
    ceiling, floor = D.invariant_levels(s)
    assert ceiling is not None and floor is not None
    rng = np.random.default_rng(seed)
    u0 = np.sort(rng.uniform(0, 1, 40))
    tr = D.integrate(s, None, lattice(u0, 0, "front"), 60.0, sample_dt=0.5)
    below = u0 < ceiling
    above = u0 > floor
    assert np.all(tr.states[:, below] < ceiling)
    assert np.all(tr.states[:, above] > floor)


def test_ceiling_inequality_left_of_root():
    s = System.cubic(0.6, 0.01, 3)
    ceiling, floor = D.invariant_levels(s)
    u = ceiling - np.linspace(1e-6, 1e-3, 50)
    assert np.all(s.d * s.k * (1 - u) + eval_g(CUBIC, u, s.a) < 0)
    x = floor + np.linspace(1e-6, 1e-3, 50)
    assert np.all(s.d * x - eval_g(CUBIC, x, s.a) < 0)


# --- propagation reversal ----------------------------------------------------------


@pytest.fixture(scope="module")
def reversal():
    return D.reversal_demo()


def test_reversal_phases(reversal):
    pos = reversal.positions
    assert abs(pos[100.0] - pos[0.0]) < 1
    assert pos[220.0] > pos[100.0]
    assert pos[460.0] < pos[300.0]
    assert reversal.sequence == ["pinned", "right", "pinned", "left"]


def test_classify_drift_labels():
    t = np.arange(0, 201.0)
    x = np.where(t < 100, 0.0, (t - 100) * 0.1)
    labels = [w[3] for w in D.classify_drift(t, x)]
    assert labels == ["pinned", "pinned", "right", "right"]
