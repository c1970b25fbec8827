"""Time integration of the lattice equation and of layered k-ary trees.

    du_i/dt = d(t) (k u_{i+1} - (k+1) u_i + u_{i-1}) + g(u_i; a)

Finite windows are closed by ghost values: ``"front"`` boundaries clamp to 0
below the window and 1 above it, ``"edge"`` boundaries repeat the edge value,
and a pair ``(left, right)`` fixes the ghost values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .nonlinearity import DomainError, System, eval_g, max_abs_dg

BOUNDARIES = ("front", "edge")


# --- diffusion schedules --------------------------------------------------------


@dataclass(frozen=True)
class DiffusionSchedule:
    """Diffusion coefficient as a function of time.

    The stability guard uses the maximum of ``fn`` sampled on [0, t_end].
    """

    fn: Callable[[float], float]
    label: str = "custom"

    def __call__(self, t: float) -> float:
        return self.fn(t)

    @classmethod
    def const(cls, d: float) -> "DiffusionSchedule":
        if not d > 0:
            raise DomainError("d must be positive")
        return cls(lambda t: d, f"const:{d}")

    @classmethod
    def reversal(cls, d0: float = 0.001, t_on: float = 100.0, rate: float = 1.0 / 1500.0):
        """Constant d0 up to t_on, then growing linearly at ``rate``."""
        return cls(lambda t: d0 + rate * max(t - t_on, 0.0), "reversal")

    def max_on(self, t0: float, t1: float, n: int = 1001) -> float:
        ts = np.linspace(t0, t1, n)
        vals = np.array([self.fn(t) for t in ts])
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise DomainError("diffusion schedule must stay positive")
        return float(vals.max())


def parse_schedule(text: str) -> DiffusionSchedule:
    """``const:<d>`` or ``reversal``."""
    if text == "reversal":
        return DiffusionSchedule.reversal()
    if text.startswith("const:"):
        try:
            d = float(text.split(":", 1)[1])
        except ValueError:
            raise DomainError(f"bad schedule {text!r}") from None
        return DiffusionSchedule.const(d)
    raise DomainError(f"unknown schedule {text!r}; use const:<d> or reversal")


def _schedule(system: System, schedule: Optional[DiffusionSchedule]) -> DiffusionSchedule:
    return schedule if schedule is not None else DiffusionSchedule.const(system.d)


# --- lattice ---------------------------------------------------------------------


@dataclass
class LatticeState:
    lo: int
    hi: int
    u: np.ndarray
    boundary: Union[str, tuple] = "edge"

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != (self.hi - self.lo + 1,):
            raise DomainError("state length must be hi - lo + 1")
        if not np.all(np.isfinite(self.u)):
            raise DomainError("state values must be finite")
        if isinstance(self.boundary, tuple):
            if len(self.boundary) != 2:
                raise DomainError("fixed boundary needs (left, right) ghost values")
            self.boundary = (float(self.boundary[0]), float(self.boundary[1]))
        elif self.boundary not in BOUNDARIES:
            raise DomainError(f"boundary must be one of {BOUNDARIES} or a (left, right) pair")

    @property
    def index(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    @classmethod
    def step(cls, lo: int, hi: int, at: int = 0) -> "LatticeState":
        """0 below ``at``, 1 from ``at`` on, with front boundaries."""
        i = np.arange(lo, hi + 1)
        return cls(lo, hi, (i >= at).astype(float), "front")


def _ghosts(u, boundary):
    if isinstance(boundary, tuple):
        return boundary
    if boundary == "front":
        return 0.0, 1.0
    return u[0], u[-1]


def lattice_rhs_values(u, d, k, spec, a, boundary):
    left, right = _ghosts(u, boundary)
    up = np.append(u[1:], right)
    um = np.insert(u[:-1], 0, left)
    return d * (k * up - (k + 1) * u + um) + eval_g(spec, u, a)


def rhs_lattice(system: System, schedule: Optional[DiffusionSchedule], t: float,
                state: LatticeState) -> np.ndarray:
    d = _schedule(system, schedule)(t)
    return lattice_rhs_values(state.u, d, system.k, system.spec, system.a, state.boundary)


# --- trees -------------------------------------------------------------------------


@dataclass
class TreeState:
    """Truncated k-ary tree with layers i_min..i_max.

    Layer ``i`` holds k**(i - i_min) nodes; node (i, j) has parent
    (i-1, j // k) and children (i+1, k j + l) for l < k.
    """

    i_min: int
    i_max: int
    k: int
    layers: list
    boundary: str = "front"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise DomainError("tree branching k must be a positive integer")
        self.k = int(self.k)
        if len(self.layers) != self.i_max - self.i_min + 1:
            raise DomainError("one array per layer required")
        self.layers = [np.asarray(x, dtype=float) for x in self.layers]
        for n, layer in enumerate(self.layers):
            if layer.shape != (self.k ** n,):
                raise DomainError(f"layer {self.i_min + n} must hold {self.k ** n} nodes")
        if self.boundary not in BOUNDARIES:
            raise DomainError(f"boundary must be one of {BOUNDARIES}")

    @classmethod
    def layered(cls, i_min: int, i_max: int, k: int, values: Sequence[float], boundary: str = "front"):
        """Tree whose layer i is constant, equal to ``values[i - i_min]``."""
        if int(k) != k or k < 1:
            raise DomainError("tree branching k must be a positive integer")
        k = int(k)
        return cls(i_min, i_max, k, [np.full(k ** n, float(v)) for n, v in enumerate(values)], boundary)

    @property
    def sizes(self) -> list:
        return [len(x) for x in self.layers]

    def flat(self) -> np.ndarray:
        return np.concatenate(self.layers)

    def with_flat(self, x: np.ndarray) -> "TreeState":
        cuts = np.cumsum(self.sizes)[:-1]
        return TreeState(self.i_min, self.i_max, self.k, np.split(np.asarray(x, float), cuts), self.boundary)


def _tree_rhs_layers(layers, k, d, spec, a, boundary):
    out = []
    last = len(layers) - 1
    for n, u in enumerate(layers):
        if n > 0:
            parent = np.repeat(layers[n - 1], k)
        else:
            parent = np.zeros_like(u) if boundary == "front" else u
        if n < last:
            children = layers[n + 1].reshape(-1, k).sum(axis=1)
        else:
            children = k * (np.ones_like(u) if boundary == "front" else u)
        lap = parent + children - (k + 1) * u
        out.append(d * lap + eval_g(spec, u, a))
    return out


def rhs_tree(system: System, schedule: Optional[DiffusionSchedule], t: float,
             tree: TreeState) -> list:
    """Graph-Laplacian dynamics; one derivative array per layer."""
    d = _schedule(system, schedule)(t)
    return _tree_rhs_layers(tree.layers, tree.k, d, system.spec, system.a, tree.boundary)


# --- integration -------------------------------------------------------------------


class StabilityError(DomainError):
    def __init__(self, dt: float, dt_max: float):
        super().__init__(f"dt={dt} exceeds the stability bound; use dt <= {dt_max:.6g}")
        self.dt_max = dt_max


def stable_dt(system: System, schedule: Optional[DiffusionSchedule], t_end: float) -> float:
    """Largest dt allowed by the guard 0.5 / (d_max (k+1) + max|g'|)."""
    d_max = _schedule(system, schedule).max_on(0.0, t_end)
    return 0.5 / (d_max * (system.k + 1) + max_abs_dg(system.spec, system.a))


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray = field(repr=False)
    lo: Optional[int] = None
    tree: Optional[TreeState] = field(default=None, repr=False)

    def state(self, n: int):
        if self.tree is not None:
            return self.tree.with_flat(self.states[n])
        return LatticeState(self.lo, self.lo + self.states.shape[1] - 1, self.states[n])

    def at(self, t: float):
        return self.state(int(np.argmin(np.abs(self.t - t))))

    def layer_values(self, n: int) -> list:
        """Per-layer arrays of sample ``n`` (tree trajectories only)."""
        return self.state(n).layers


def _rk4(f, x, t_end, dt, sample_dt):
    if sample_dt:
        # whole number of steps per sample so samples land on multiples of sample_dt
        n_samples = max(1, int(math.ceil(t_end / sample_dt - 1e-12)))
        every = max(1, int(math.ceil((t_end / n_samples) / dt - 1e-12)))
        steps = n_samples * every
    else:
        steps = max(1, int(math.ceil(t_end / dt - 1e-12)))
        every = 1
    h = t_end / steps
    ts, xs = [0.0], [x.copy()]
    t = 0.0
    for n in range(1, steps + 1):
        k1 = f(t, x)
        k2 = f(t + h / 2, x + h / 2 * k1)
        k3 = f(t + h / 2, x + h / 2 * k2)
        k4 = f(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = n * h
        if n % every == 0 or n == steps:
            ts.append(t)
            xs.append(x.copy())
    return np.array(ts), np.array(xs)


def integrate(system: System, schedule: Optional[DiffusionSchedule], state0, t_end: float,
              dt: Optional[float] = None, sample_dt: Optional[float] = None) -> Trajectory:
    """Classical RK4 from ``state0`` (a LatticeState or TreeState) to ``t_end``.

    ``dt`` defaults to the stability bound; a larger ``dt`` is refused. The
    step is shrunk slightly so that ``t_end`` is hit exactly. Samples are
    stored every ``sample_dt`` (default: every step).
    """
    if not t_end > 0:
        raise DomainError("t_end must be positive")
    sched = _schedule(system, schedule)
    bound = stable_dt(system, sched, t_end)
    if dt is None:
        dt = bound
    elif dt > bound * (1 + 1e-12):
        raise StabilityError(dt, bound)
    spec, a, k = system.spec, system.a, system.k
    if isinstance(state0, TreeState):
        tree = state0
        if int(k) != tree.k:
            raise DomainError("tree branching must equal the system's k")
        cuts = np.cumsum(tree.sizes)[:-1]

        def f(t, x):
            parts = _tree_rhs_layers(np.split(x, cuts), tree.k, sched(t), spec, a, tree.boundary)
            return np.concatenate(parts)

        ts, xs = _rk4(f, tree.flat(), t_end, dt, sample_dt)
        return Trajectory(ts, xs, tree=tree)
    boundary = state0.boundary

    def f(t, x):
        return lattice_rhs_values(x, sched(t), k, spec, a, boundary)

    ts, xs = _rk4(f, state0.u.copy(), t_end, dt, sample_dt)
    return Trajectory(ts, xs, lo=state0.lo)


# --- fronts --------------------------------------------------------------------------


def front_position(state, level: float = 0.5, lo: int = 0) -> Optional[float]:
    """Index where the profile first reaches ``level``, linearly interpolated.

    ``state`` is a LatticeState or a plain array whose first entry has index
    ``lo``. Returns ``None`` without a crossing.
    """
    if isinstance(state, LatticeState):
        u, lo = state.u, state.lo
    else:
        u = np.asarray(state, dtype=float)
    above = np.flatnonzero(u >= level)
    if above.size == 0 or above[0] == 0:
        return None
    i = int(above[0])
    return lo + (i - 1) + (level - u[i - 1]) / (u[i] - u[i - 1])


def front_track(traj: Trajectory, level: float = 0.5) -> np.ndarray:
    return np.array([np.nan if (p := front_position(row, level, traj.lo)) is None else p
                     for row in traj.states])


# --- comparison principle ------------------------------------------------------------


@dataclass
class ComparisonReport:
    passed: bool
    max_violation: float
    first_violation: Optional[tuple] = None  # (t, i, v - u)


def comparison_check(system: System, u0, v0, t_end: float, dt: Optional[float] = None,
                     schedule: Optional[DiffusionSchedule] = None, lo: int = 0,
                     boundary: str = "edge", tol: float = 1e-9) -> ComparisonReport:
    """Integrate both data sets and check u >= v at every step."""
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if u0.shape != v0.shape:
        raise DomainError("u0 and v0 differ in length")
    if np.any(u0 < v0):
        raise DomainError("comparison requires u0 >= v0")
    hi = lo + len(u0) - 1
    tu = integrate(system, schedule, LatticeState(lo, hi, u0, boundary), t_end, dt)
    tv = integrate(system, schedule, LatticeState(lo, hi, v0, boundary), t_end, dt)
    gap = tv.states - tu.states
    worst = float(gap.max())
    if worst > tol:
        n, i = np.unravel_index(int(np.argmax(gap > tol)), gap.shape)
        return ComparisonReport(False, worst, (float(tu.t[n]), lo + int(i), float(gap[n, i])))
    return ComparisonReport(True, worst)


# --- invariant levels ------------------------------------------------------------------


def _edge_root(f, lo, hi, n, side):
    # root of f at the chosen end of the set {f < 0} inside (lo, hi)
    v = np.linspace(lo, hi, n)[1:-1]
    fv = f(v)
    neg = np.flatnonzero(fv < 0)
    if neg.size == 0:
        return None
    if side == "right":
        j = int(neg[-1])
        return float(brentq(f, v[j], hi)) if j + 1 == v.size else float(brentq(f, v[j], v[j + 1]))
    j = int(neg[0])
    return float(brentq(f, lo, v[j])) if j == 0 else float(brentq(f, v[j - 1], v[j]))


def invariant_levels(system: System, n: int = 4097) -> tuple:
    """Levels that a monotone solution cannot cross at a single site.

    Returns ``(ceiling, floor)``. A site starting below ``ceiling`` in (0, a)
    stays below it: just under the ceiling d k (1 - u) + g(u) < 0, so the site
    cannot climb. A site starting above ``floor`` in (a, 1) stays above it,
    because g(u) - d u > 0 just over the floor. Either entry is ``None`` when
    the inequality has no solution, which happens above the pinning thresholds.
    """
    d, k, a = system.d, system.k, system.a
    up = lambda u: d * k * (1.0 - u) + system.g(u)
    down = lambda u: d * u - system.g(u)
    return _edge_root(up, 0.0, a, n, "right"), _edge_root(down, a, 1.0, n, "left")


# --- propagation reversal ------------------------------------------------------------

DRIFT_WINDOW = 50.0
PINNED_DRIFT = 0.25


@dataclass
class ReversalReport:
    trajectory: Trajectory = field(repr=False)
    positions: dict
    phases: list
    windows: list = field(repr=False)

    @property
    def sequence(self) -> list:
        """Phase labels with consecutive repeats collapsed."""
        out = []
        for p in self.phases:
            if not out or out[-1] != p:
                out.append(p)
        return out


def classify_drift(times, positions, window: float = DRIFT_WINDOW, pinned: float = PINNED_DRIFT):
    """Label consecutive windows as pinned/right/left from front drift."""
    times = np.asarray(times)
    positions = np.asarray(positions)
    out = []
    t0 = times[0]
    while t0 + window <= times[-1] + 1e-9:
        i0 = int(np.argmin(np.abs(times - t0)))
        i1 = int(np.argmin(np.abs(times - (t0 + window))))
        drift = positions[i1] - positions[i0]
        label = "pinned" if abs(drift) < pinned else ("right" if drift > 0 else "left")
        out.append((float(times[i0]), float(times[i1]), float(drift), label))
        t0 += window
    return out


def reversal_demo(k: float = 2, a: float = 0.72, t_end: float = 460.0, lo: int = -60, hi: int = 60,
                  schedule: Optional[DiffusionSchedule] = None, dt: Optional[float] = None,
                  report_times=(0.0, 100.0, 220.0, 300.0, 460.0)) -> ReversalReport:
    """Step data under slowly growing diffusion: the front is pinned, moves right,
    stalls again and finally moves left."""
    schedule = schedule or DiffusionSchedule.reversal()
    system = System.cubic(a, schedule(0.0), k)
    traj = integrate(system, schedule, LatticeState.step(lo, hi), t_end, dt, sample_dt=1.0)
    pos = front_track(traj)
    positions = {float(t): float(pos[int(np.argmin(np.abs(traj.t - t)))]) for t in report_times if t <= t_end}
    windows = classify_drift(traj.t, pos)
    return ReversalReport(traj, positions, [w[3] for w in windows], windows)
