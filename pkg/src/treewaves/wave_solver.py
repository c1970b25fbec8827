"""Traveling-wave speeds from a discretized profile equation.

Unknowns are the interior profile values Phi_1..Phi_{N-1} on the grid
xi_i = -L + i/I0 plus the speed c. The profile equation is sampled with a
fourth-order central difference for Phi' and exact grid shifts by I0 points for
Phi(xi +- 1); one phase row pins Phi at xi = 0 to 1/2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import splu

from .nonlinearity import System, eval_dg, eval_g
from .regions import asymptotic_speed

TOL = 1e-10
MAX_ITER = 50
MAX_HALVINGS = 8
TAIL_TOL = 1e-6
MAX_L = 640
PINNED_SPEED = 1e-5
MONOTONE_TOL = 1e-8
# largest jump between neighbouring grid values for a resolved front
MAX_STEP = 0.1
MAX_I0 = 512
SIM_T_MAX = 2e4


class DimensionError(ValueError):
    pass


class NotMonotoneWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class WaveGrid:
    L: float = 20.0
    I0: int = 8

    def __post_init__(self):
        if not self.L > 0 or int(self.I0) != self.I0 or self.I0 < 1:
            raise ValueError("need L > 0 and a positive integer I0")
        if abs(self.L * self.I0 - round(self.L * self.I0)) > 1e-9:
            raise ValueError("L * I0 must be an integer")

    @property
    def dx(self) -> float:
        return 1.0 / self.I0

    @property
    def N(self) -> int:
        """Number of segments N_L = 2 L I0 (always even)."""
        return 2 * int(round(self.L * self.I0))

    @property
    def mid(self) -> int:
        """Grid index of xi = 0."""
        return self.N // 2

    @property
    def xi(self) -> np.ndarray:
        """Coordinates of the interior points 1..N-1."""
        return -self.L + np.arange(1, self.N) * self.dx


@dataclass
class WaveSolution:
    grid: WaveGrid
    c: float
    values: np.ndarray = field(repr=False)
    residual_norm: float
    newton_iters: int
    converged: bool = True
    monotone: bool = True
    pinned: bool = False

    @property
    def xi(self) -> np.ndarray:
        return self.grid.xi

    def profile(self) -> np.ndarray:
        """Values including the clamped end points Phi_0 = 0 and Phi_N = 1."""
        return np.concatenate([[0.0], self.values, [1.0]])


class ConvergenceError(RuntimeError):
    def __init__(self, solution: WaveSolution):
        super().__init__(f"Newton did not converge (residual {solution.residual_norm:.3e})")
        self.solution = solution


def _padded(grid: WaveGrid, values: np.ndarray) -> np.ndarray:
    # ghost values: 0 for i <= 0, 1 for i >= N; padding wide enough for the shifts
    n = grid.N
    if values.shape != (n - 1,):
        raise DimensionError(f"expected {n - 1} profile values, got {values.shape}")
    p = max(grid.I0, 2)
    return np.concatenate([np.zeros(p + 1), values, np.ones(p + 1)]), p + 1


def _derivative(grid, full, off):
    n, i = grid.N, np.arange(1, grid.N)
    at = lambda m: full[off + i - 1 + m]
    return (8 * at(1) - 8 * at(-1) - at(2) + at(-2)) / (12 * grid.dx)


def residual(system: System, grid: WaveGrid, c: float, values) -> np.ndarray:
    """Residual vector of length N: N-1 profile equations then the phase condition."""
    values = np.asarray(values, dtype=float)
    full, off = _padded(grid, values)
    i = np.arange(1, grid.N)
    at = lambda m: full[off + i - 1 + m]
    I0, d, k = grid.I0, system.d, system.k
    mfde = (-c * _derivative(grid, full, off)
            - d * (k * at(I0) - (k + 1) * values + at(-I0))
            - eval_g(system.spec, values, system.a))
    return np.concatenate([mfde, [values[grid.mid - 1] - 0.5]])


def jacobian(system: System, grid: WaveGrid, c: float, values) -> sp.csc_matrix:
    """Analytic Jacobian of :func:`residual`; the last column is d/dc."""
    values = np.asarray(values, dtype=float)
    full, off = _padded(grid, values)
    n = grid.N
    m = n - 1
    I0, d, k = grid.I0, system.d, system.k
    s = c / (12 * grid.dx)
    diag = d * (k + 1) - eval_dg(system.spec, values, system.a)
    bands = {0: diag, -2: -s, -1: 8 * s, 1: -8 * s, 2: s}
    # Laplacian couplings; with I0 <= 2 they fall on the derivative bands
    for offset, coef in ((I0, -d * k), (-I0, -d)):
        bands[offset] = bands.get(offset, 0.0) + coef
    offsets = [o for o in bands if abs(o) < m]
    data = [bands[o] if o == 0 else np.full(m - abs(o), bands[o]) for o in offsets]
    core = sp.diags(data, offsets, shape=(m, m), format="csc")
    dc = -_derivative(grid, full, off)
    phase = sp.csc_matrix(([1.0], ([0], [grid.mid - 1])), shape=(1, m))
    return sp.bmat([[core, dc[:, None]], [phase, None]], format="csc")


def initial_guess(system: System, grid: WaveGrid):
    """tanh front centred at 0 and a speed from the large-d prediction."""
    w = max(1.0, 4.0 * math.sqrt(system.d))
    values = 0.5 * (1.0 + np.tanh(grid.xi / w))
    values[grid.mid - 1] = 0.5
    c0 = asymptotic_speed(system.a, system.d, system.k) if system.spec.is_cubic else 0.0
    return float(np.clip(c0, -10.0, 10.0)), values


def _newton(system, grid, c, values, tol, max_iter):
    x = np.concatenate([values, [c]])
    F = residual(system, grid, x[-1], x[:-1])
    norm = float(np.max(np.abs(F)))
    it = 0
    while norm >= tol and it < max_iter:
        it += 1
        J = jacobian(system, grid, x[-1], x[:-1])
        try:
            step = splu(J).solve(-F)
        except RuntimeError:
            break
        if not np.all(np.isfinite(step)):
            break
        lam, best = 1.0, None
        for _ in range(MAX_HALVINGS + 1):
            trial = x + lam * step
            Ft = residual(system, grid, trial[-1], trial[:-1])
            nt = float(np.max(np.abs(Ft)))
            if np.isfinite(nt) and (best is None or nt < best[2]):
                best = (trial, Ft, nt)
            if nt < norm:
                break
            lam *= 0.5
        if best is None:
            break
        x, F, norm = best
    return x[-1], x[:-1], norm, it


def _tails_ok(grid, values):
    z = max(1, int(0.1 * (grid.N - 1)))
    return np.max(np.abs(values[:z])) <= TAIL_TOL and np.max(np.abs(1.0 - values[-z:])) <= TAIL_TOL


def _is_monotone(values):
    return bool(np.all(np.diff(np.concatenate([[0.0], values, [1.0]])) >= -MONOTONE_TOL))


def _resolved(values):
    steps = np.diff(np.concatenate([[0.0], values, [1.0]]))
    return bool(np.all(steps >= -MONOTONE_TOL) and np.max(steps) <= MAX_STEP)


def _polish(system, grid, c, values, tol, max_iter, adapt):
    """Newton, then grow L while the tails are off and I0 while the front is under-resolved."""
    c, values, norm, total = _newton(system, grid, c, values, tol, max_iter)
    while adapt and norm < tol:
        if not _tails_ok(grid, values) and 2 * grid.L <= MAX_L:
            new = WaveGrid(2 * grid.L, grid.I0)
            pad = (new.N - grid.N) // 2
            guess = np.concatenate([np.zeros(pad), values, np.ones(pad)])
        elif not _resolved(values) and 2 * grid.I0 <= MAX_I0:
            new = WaveGrid(grid.L, 2 * grid.I0)
            guess = _interp(grid, values, new)
        else:
            break
        c2, v2, n2, it = _newton(system, new, c, guess, tol, max_iter)
        total += it
        if not n2 < tol:
            break
        grid, c, values, norm = new, c2, v2, n2
    return grid, c, values, norm, total


def _interp(grid, values, new):
    xs = np.concatenate([[-grid.L], grid.xi, [grid.L]])
    ys = np.concatenate([[0.0], values, [1.0]])
    out = np.interp(new.xi, xs, ys, left=0.0, right=1.0)
    out[new.mid - 1] = 0.5
    return out


# --- pinned fronts ---------------------------------------------------------------


def stationary_front(system: System, M: int, tol: float = 1e-12, max_iter: int = 60):
    """Monotone standing front of the lattice equation on sites -M..M, or ``None``.

    Newton from step data, with u = 0 left of the window and u = 1 right of it.
    A hit must be monotone with its transition well inside the window. A
    standing monotone front forces the wave speed to vanish.
    """
    d, k = system.d, system.k
    n = 2 * M + 1
    j = np.arange(-M, M + 1)
    for guess in ((j >= 0).astype(float), (j > 0).astype(float)):
        u = guess.copy()
        for _ in range(max_iter):
            up = np.append(u[1:], 1.0)
            um = np.insert(u[:-1], 0, 0.0)
            F = d * (k * up - (k + 1) * u + um) + system.g(u)
            if np.max(np.abs(F)) < tol:
                break
            J = sp.diags([np.full(n - 1, d), -d * (k + 1) + system.dg(u), np.full(n - 1, d * k)],
                         [-1, 0, 1], format="csc")
            try:
                u = u + splu(J).solve(-F)
            except RuntimeError:
                break
            if not np.all(np.isfinite(u)):
                break
        else:
            continue
        if not np.all(np.isfinite(u)) or np.max(np.abs(F)) >= tol:
            continue
        inner = M // 2
        if (np.all(np.diff(np.concatenate([[0.0], u, [1.0]])) >= -MONOTONE_TOL)
                and np.all(u[: M - inner] <= TAIL_TOL) and np.all(u[M + inner + 1:] >= 1 - TAIL_TOL)):
            return u, float(np.max(np.abs(F)))
    return None


def _pinned_solution(grid, u, M, norm):
    # Phi(xi) = u_j on [j - 1/2, j + 1/2): every sublattice carries the same standing front
    idx = np.floor(grid.xi + 0.5).astype(int) + M
    full = np.concatenate([[0.0], u, [1.0]])
    values = full[np.clip(idx + 1, 0, len(full) - 1)]
    return WaveSolution(grid, 0.0, values, norm, 0, True, True, pinned=True)


# --- simulated initial guess -------------------------------------------------------


def _simulated_guess(system: System, grid: WaveGrid, sites: int = 6, t_max: float = SIM_T_MAX):
    """Run the lattice equation from tanh data until the front has moved ``sites`` sites.

    The speed follows from the time between displacements of sites/2 and
    sites (the lattice front is periodic with period 1/|c|), and the profile
    from sampling the last period in the co-moving frame. ``None`` when the
    front does not travel far enough.
    """
    d, k = system.d, system.k
    M = int(math.ceil(grid.L)) + 2 * sites
    n = 2 * M + 1
    j = np.arange(-M, M + 1)
    w = max(1.0, 4.0 * math.sqrt(d))
    u0 = 0.5 * (1.0 + np.tanh(j / w))

    def rhs(t, u):
        up = np.append(u[1:], 1.0)
        um = np.insert(u[:-1], 0, 0.0)
        return d * (k * up - (k + 1) * u + um) + system.g(u)

    def jac(t, u):
        return sp.diags([np.full(n - 1, d), -d * (k + 1) + system.dg(u), np.full(n - 1, d * k)],
                        [-1, 0, 1], format="csc")

    # for a monotone front, M + 1/2 - sum(u) tracks its position
    x0 = M + 0.5 - u0.sum()
    half = lambda t, u: abs(M + 0.5 - u.sum() - x0) - sites / 2
    full = lambda t, u: abs(M + 0.5 - u.sum() - x0) - sites
    full.terminal = True
    sol = solve_ivp(rhs, (0.0, t_max), u0, method="BDF", jac=jac, events=[half, full],
                    dense_output=True, rtol=1e-8, atol=1e-10)
    if len(sol.t_events[1]) == 0 or len(sol.t_events[0]) == 0:
        return None
    t_half, t_end = sol.t_events[0][0], sol.t_events[1][0]
    direction = np.sign(M + 0.5 - sol.y[:, -1].sum() - x0)
    c = direction * (sites / 2) / (t_end - t_half)
    period = 1.0 / abs(c)
    ts = np.linspace(t_end - period, t_end, 400)
    U = sol.sol(ts)
    # linear co-moving frame; the mass position itself moves unevenly within a period
    xf = M + 0.5 - U[:, -1].sum() + c * (ts - t_end)
    xi = (j[:, None] - xf[None, :]).ravel()
    vals = U.ravel()
    order = np.argsort(xi)
    xi, vals = xi[order], np.maximum.accumulate(np.clip(vals[order], 0.0, 1.0))
    centre = np.interp(0.5, vals, xi)

    def on(g):
        values = np.interp(g.xi + centre, xi, vals, left=0.0, right=1.0)
        values[g.mid - 1] = 0.5
        return values

    return float(c), on


def _refined_for(grid, values_on):
    """Smallest I0 (by doubling) at which the sampled guess is resolved."""
    while 2 * grid.I0 <= MAX_I0 and not _resolved(values_on(grid)):
        grid = WaveGrid(grid.L, 2 * grid.I0)
    return grid


def solve(system: System, grid: Optional[WaveGrid] = None, initial=None, *,
          tol: float = TOL, max_iter: int = MAX_ITER, adapt: bool = True,
          raise_on_failure: bool = False) -> WaveSolution:
    """Speed and profile of the travelling front.

    ``initial`` is ``(c, values)`` or a previous :class:`WaveSolution`. Without
    it the solver first looks for a standing front (speed exactly 0), then runs
    Newton from a tanh guess, and as a last resort seeds Newton from a short
    lattice simulation. With ``adapt`` the domain and resolution are doubled
    until the tails sit at the clamps and the front is resolved; the returned
    ``grid`` is the final one. A failed solve returns ``converged=False`` with
    the best iterate unless ``raise_on_failure`` is set.
    """
    grid = grid or WaveGrid()
    attempts = []

    def attempt(g, c, v):
        out = _polish(system, g, c, v, tol, max_iter, adapt)
        attempts.append(out)
        g2, c2, v2, norm, _ = out
        return norm < tol and (not adapt or _resolved(v2))

    done = False
    if initial is not None:
        if isinstance(initial, WaveSolution):
            c, values = initial.c, (initial.values.copy() if initial.grid == grid
                                    else _interp(initial.grid, initial.values, grid))
        else:
            c, values = float(initial[0]), np.asarray(initial[1], dtype=float)
        done = attempt(grid, c, values)
    if not done and adapt:
        # wide standing fronts need a longer window for flat tails
        M = int(math.ceil(grid.L))
        for M in (M, 2 * M, 4 * M, 8 * M):
            hit = stationary_front(system, M)
            if hit is not None:
                return _pinned_solution(grid, hit[0], M, hit[1])
    if not done:
        done = attempt(grid, *initial_guess(system, grid))
    if not done and adapt:
        guess = _simulated_guess(system, grid)
        if guess is not None:
            c, values_on = guess
            g2 = _refined_for(grid, values_on)
            # near depinning an under-resolved grid admits sawtooth solutions;
            # refine the seed itself until Newton lands on a monotone profile
            while True:
                out = _polish(system, g2, c, values_on(g2), tol, max_iter, False)
                if out[3] < tol and _is_monotone(out[2]):
                    done = attempt(g2, out[1], out[2])
                    break
                attempts.append(out)
                if 2 * g2.I0 > MAX_I0:
                    break
                g2 = WaveGrid(g2.L, 2 * g2.I0)
    best = min(attempts, key=lambda o: (not (o[3] < tol and _resolved(o[2])), o[3]))
    g, c, values, norm, _ = best
    total = sum(o[4] for o in attempts)
    converged = bool(norm < tol)
    monotone = _is_monotone(values)
    sol = WaveSolution(g, float(c), values, norm, total, converged, monotone)
    if converged and not monotone:
        warnings.warn("converged profile is not monotone", NotMonotoneWarning)
    if raise_on_failure and not converged:
        raise ConvergenceError(sol)
    return sol


def resample(sol: WaveSolution, grid: WaveGrid) -> np.ndarray:
    """Interpolate a solution onto another grid, clamping outside its domain."""
    return sol.values.copy() if sol.grid == grid else _interp(sol.grid, sol.values, grid)


def speed(system: System, grid: Optional[WaveGrid] = None) -> float:
    return solve(system, grid, raise_on_failure=True).c


# --- parameter sweeps ----------------------------------------------------------


@dataclass
class SpeedMap:
    a: np.ndarray
    d: np.ndarray
    k: float
    c: np.ndarray
    converged: np.ndarray
    pinned: np.ndarray

    def rows(self):
        for j, dv in enumerate(self.d):
            for i, av in enumerate(self.a):
                yield float(av), float(dv), float(self.c[j, i]), bool(self.converged[j, i]), bool(self.pinned[j, i])


def _sweep_row(spec, a_values, dv, k, grid):
    cs = np.full(len(a_values), np.nan)
    ok = np.zeros(len(a_values), dtype=bool)
    prev = None
    for i, av in enumerate(a_values):
        system = System(spec, float(av), float(dv), k)
        sol = solve(system, grid, prev)
        if not sol.converged and prev is not None:
            sol = solve(system, grid)
        ok[i] = sol.converged
        if sol.converged:
            cs[i] = sol.c
            prev = sol
        else:
            prev = None
    return cs, ok


def sweep(spec, a_values, d_values, k: float, grid: Optional[WaveGrid] = None,
          threads: int = 1) -> SpeedMap:
    """Speeds on the (a, d) lattice, continuing in a along each d-row.

    Rows are independent and run on ``threads`` worker threads. Speeds inside a
    detected pinning plateau are reported as exactly 0.
    """
    a_values = np.asarray(a_values, dtype=float)
    d_values = np.asarray(d_values, dtype=float)
    for arr in (a_values, d_values):
        if arr.size > 1 and not (np.all(np.diff(arr) > 0) or np.all(np.diff(arr) < 0)):
            raise ValueError("ranges must be monotone")
    grid = grid or WaveGrid()
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(lambda dv: _sweep_row(spec, a_values, dv, k, grid), d_values))
    else:
        rows = [_sweep_row(spec, a_values, dv, k, grid) for dv in d_values]
    c = np.array([r[0] for r in rows]).reshape(len(d_values), len(a_values))
    conv = np.array([r[1] for r in rows]).reshape(c.shape)
    pinned = np.zeros(c.shape, dtype=bool)
    for j in range(len(d_values)):
        interval = detect_pinning(a_values, c[j])
        small = np.abs(c[j]) < PINNED_SPEED
        if interval is not None:
            lo, hi = interval
            small &= (a_values >= lo) & (a_values <= hi)
        pinned[j] = small & conv[j]
        c[j, pinned[j]] = 0.0
    return SpeedMap(a_values, d_values, k, c, conv, pinned)


def detect_pinning(a_values, speeds, threshold: float = PINNED_SPEED, decades: float = 3.0):
    """Interval of a where the speed collapses onto a near-zero plateau.

    A plateau sample has |c| < ``threshold``. The plateau counts as pinned when
    it is entered or left by a drop of at least ``decades`` orders of magnitude
    between neighbouring samples (or touches the end of the range). Returns
    ``(a_lo, a_hi)`` spanning all such plateaus, or ``None``.
    """
    a_values = np.asarray(a_values, dtype=float)
    c = np.abs(np.asarray(speeds, dtype=float))
    if a_values.shape != c.shape:
        raise DimensionError("a grid and speeds differ in length")
    with np.errstate(divide="ignore"):
        lg = np.log10(np.maximum(c, 1e-300))
    small = c < threshold
    found = []
    i, n = 0, len(c)
    while i < n:
        if not small[i] or not np.isfinite(c[i]):
            i += 1
            continue
        j = i
        while j + 1 < n and small[j + 1]:
            j += 1
        jump_in = i == 0 or (np.isfinite(c[i - 1]) and lg[i - 1] - lg[i] >= decades)
        jump_out = j == n - 1 or (np.isfinite(c[j + 1]) and lg[j + 1] - lg[j] >= decades)
        if (jump_in or jump_out) and not (i == 0 and j == n - 1):
            found.append((a_values[i], a_values[j]))
        i = j + 1
    if not found:
        return None
    return float(min(f[0] for f in found)), float(max(f[1] for f in found))
