"""Pinned steady states with arbitrary {0,1} symbol patterns.

Steady states of the lattice equation solve

    d (u_{i-1} - (k+1) u_i + k u_{i+1}) + g(u_i; a) = 0,

which is the orbit relation phi(u_i, u_{i-1}) = (u_{i+1}, u_i) of the planar map
phi below. For small d the map carries a horseshoe, and every symbol sequence is
realised by a steady state. Orbits are built here by Newton's method from a
symbol-shaped guess; the strip geometry is kept for verification.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .nonlinearity import DomainError, NonlinearitySpec, System, eval_dg, eval_g

HD_SAMPLES = 512
POINT_TOL = 1e-10
ORBIT_TOL = 1e-12
SHADOW_TOL = 1e-9
GUESS_OFFSET = 0.02
DEFAULT_PAD = 8
MIN_PAD = 5


class InvalidCertificate(DomainError):
    """Strip construction failed one of its geometric checks."""


class NoCertificate(DomainError):
    """(Hd) could not be certified and no override was given."""


class OrbitConvergenceError(RuntimeError):
    """Newton did not reach the residual target; ``orbit`` holds the best iterate."""

    def __init__(self, message: str, orbit: "SymbolOrbit"):
        super().__init__(message)
        self.orbit = orbit


# --- planar map ------------------------------------------------------------------


@dataclass(frozen=True)
class PlanarMap:
    """phi(u, v) = ((k+1)/k u - v/k - g(u)/(kd), u)."""

    spec: NonlinearitySpec
    a: float
    d: float
    k: float

    def __post_init__(self):
        if not self.d > 0:
            raise DomainError("d must be positive (the map divides by k d)")
        if not self.k > 0:
            raise DomainError("k must be positive")

    @classmethod
    def of(cls, system: System) -> "PlanarMap":
        return cls(system.spec, system.a, system.d, system.k)

    def g(self, u):
        return eval_g(self.spec, u, self.a)


def map_forward(pm: PlanarMap, u, v):
    k = pm.k
    return (k + 1.0) / k * u - v / k - pm.g(u) / (k * pm.d), u


def map_inverse(pm: PlanarMap, ut, vt):
    k = pm.k
    return vt, (k + 1.0) * vt - k * ut - pm.g(vt) / pm.d


def apply_R(k: float, u, v):
    """R_k = [[0, 1], [k, 0]] acting on (u, v)."""
    return v, k * u


# --- condition (Hd) ----------------------------------------------------------------


def h(system: System, v):
    """h(v) = (k+1) v - g(v)/d."""
    return (system.k + 1.0) * v - system.g(v) / system.d


def dh(system: System, v):
    return (system.k + 1.0) - eval_dg(system.spec, v, system.a) / system.d


@dataclass(frozen=True)
class HdCertificate:
    system: System
    y0: float
    y1: float
    x1: float
    x2: float
    x3: float
    z0: float
    z1: float
    z2: float

    @property
    def points(self) -> dict:
        return {n: getattr(self, n) for n in ("x1", "x2", "x3", "y0", "y1", "z0", "z1", "z2")}

    def targets(self) -> dict:
        k = self.system.k
        return {"x1": 1.0, "x2": k, "x3": k + 1.0, "z0": 0.0, "z1": 1.0, "z2": k}


def _edge_zero(f, xs, vals, which):
    """Refined zero of f between the grid samples around the first or last non-positive value."""
    bad = np.flatnonzero(vals <= 0)
    if bad.size == 0:
        return None
    if which == "first":
        j = bad[0]
        return xs[0] if j == 0 else brentq(f, xs[j - 1], xs[j], xtol=1e-15)
    j = bad[-1]
    return xs[-1] if j == xs.size - 1 else brentq(f, xs[j], xs[j + 1], xtol=1e-15)


def check_Hd(system: System, n: int = HD_SAMPLES) -> Optional[HdCertificate]:
    """Certificate for (Hd) and the six special points, or None.

    y0 is taken at the first zero of h' in (0, a), the largest point with h
    increasing on (0, y0); y1 at the last zero of h' in (a, 1). Monotonicity is
    checked on n samples per subinterval.
    """
    a, k = system.a, system.k
    f = lambda v: dh(system, v)
    xs = np.linspace(0.0, a, n + 2)[1:-1]
    y0 = _edge_zero(f, xs, f(xs), "first")
    if y0 is None:
        y0 = xs[-1]
    xs = np.linspace(a, 1.0, n + 2)[1:-1]
    y1 = _edge_zero(f, xs, f(xs), "last")
    if y1 is None:
        y1 = xs[0]
    if not (h(system, y0) > k + 1.0 and h(system, y1) < 0.0):
        return None
    for lo, hi in ((0.0, y0), (y1, 1.0)):
        s = np.linspace(lo, hi, n + 2)[1:-1]
        if np.any(f(s) <= 0):
            return None

    def root(t, lo, hi):
        return brentq(lambda v: h(system, v) - t, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    x1, x2, x3 = (root(t, 0.0, y0) for t in (1.0, k, k + 1.0))
    z0, z1, z2 = (root(t, y1, 1.0) for t in (0.0, 1.0, k))
    cert = HdCertificate(system, float(y0), float(y1), x1, x2, x3, z0, z1, z2)
    for name, t in cert.targets().items():
        if abs(h(system, getattr(cert, name)) - t) > POINT_TOL:
            return None
    # x1, x2 (and z1, z2) swap for k < 1 and coincide for k = 1
    chain = [0.0, min(x1, x2), max(x1, x2), x3, y0, a, y1, z0, min(z1, z2), max(z1, z2), 1.0]
    strict = [True, k != 1.0, True, True, True, True, True, True, k != 1.0, True]
    for lo, hi, s in zip(chain, chain[1:], strict):
        if (lo >= hi) if s else (lo > hi):
            return None
    return cert


# --- strips ------------------------------------------------------------------------


@dataclass
class Strips:
    """Sampled boundary curves of V_0, V_1 and their images U_0, U_1."""

    cert: HdCertificate
    curves: dict = field(repr=False)

    def in_V(self, n: int, u, v, tol: float = 1e-9):
        """Membership in V_n: between the graphs v = h(u) and v = h(u) - k."""
        c, s = self.cert, self.cert.system
        u, v = np.asarray(u, float), np.asarray(v, float)
        lo, hi = (0.0, c.x3) if n == 0 else (c.z0, 1.0)
        hu = h(s, u)
        return ((u >= lo - tol) & (u <= hi + tol) & (v >= -tol) & (v <= 1 + tol)
                & (v <= hu + tol) & (v >= hu - s.k - tol))

    def in_U(self, n: int, u, v, tol: float = 1e-9):
        pu, pv = map_inverse(PlanarMap.of(self.cert.system), np.asarray(u, float), np.asarray(v, float))
        return self.in_V(n, pu, pv, tol)


def build_strips(system: System, cert: HdCertificate, n: int = 401, tol: float = 1e-9) -> Strips:
    """Sample u1..u4 (vertical) and v1..v4 (horizontal) and check the strip geometry."""
    if cert is None:
        raise InvalidCertificate("no (Hd) certificate")
    k = system.k
    pm = PlanarMap.of(system)
    c = cert

    def vert(lo, hi, shift):
        u = np.linspace(lo, hi, n)
        return u, h(system, u) - shift

    def horiz(lo, hi, v0):
        u = np.linspace(lo, hi, n)
        return map_forward(pm, u, np.full_like(u, v0))

    curves = {
        "u1": vert(0.0, c.x1, 0.0), "u2": vert(c.x2, c.x3, k),
        "u3": vert(c.z0, c.z1, 0.0), "u4": vert(c.z2, 1.0, k),
        "v1": horiz(0.0, c.x2, 0.0), "v2": horiz(c.x1, c.x3, 1.0),
        "v3": horiz(c.z0, c.z2, 0.0), "v4": horiz(c.z1, 1.0, 1.0),
    }
    for name, (u, v) in curves.items():
        if np.any((u < -tol) | (u > 1 + tol) | (v < -tol) | (v > 1 + tol)):
            raise InvalidCertificate(f"curve {name} leaves the unit square")
        # vertical curves are graphs over v, horizontal ones over u
        along = v if name[0] == "u" else u
        if np.any(np.diff(along) <= 0):
            raise InvalidCertificate(f"curve {name} is not monotone")
    # vertical boundaries of V_n land on u = 0 and u = 1
    for name, side in (("u1", 0.0), ("u2", 1.0), ("u3", 0.0), ("u4", 1.0)):
        img, _ = map_forward(pm, *curves[name])
        if np.max(np.abs(img - side)) > tol:
            raise InvalidCertificate(f"phi({name}) is off the line u = {side}")
    if not c.x3 < c.z0:
        raise InvalidCertificate("V_0 and V_1 overlap")
    return Strips(cert, curves)


# --- orbits from words ----------------------------------------------------------------


@dataclass
class SymbolOrbit:
    word: tuple
    symbols: np.ndarray = field(repr=False)
    index: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    ghosts: tuple
    residual_norm: float
    converged: bool
    membership: np.ndarray = field(repr=False)
    offset: float
    iterations: int

    @property
    def members_ok(self) -> bool:
        return bool(np.all(self.membership))

    def extended(self) -> np.ndarray:
        """Values with the two clamp values attached."""
        return np.concatenate([[self.ghosts[0]], self.values, [self.ghosts[1]]])


def parse_word(text: str) -> tuple:
    if not text or any(ch not in "01" for ch in text):
        raise DomainError("word must be a non-empty string of 0s and 1s")
    return tuple(int(ch) for ch in text)


def _steady_residual(system: System, u, ghosts):
    um = np.insert(u[:-1], 0, ghosts[0])
    up = np.append(u[1:], ghosts[1])
    return system.d * (um - (system.k + 1.0) * u + system.k * up) + system.g(u)


def steady_residual(system: System, orbit: SymbolOrbit) -> np.ndarray:
    return _steady_residual(system, orbit.values, orbit.ghosts)


def _membership(system: System, s, u, tol=1e-12):
    zero = (u >= -tol) & (u < system.a)
    one = (u > system.a) & (u <= 1.0 + tol)
    return np.where(s == 0, zero, one)


def steady_state_from_word(system: System, word: Sequence[int], pad: int = DEFAULT_PAD,
                           offset: float = GUESS_OFFSET, override: bool = False,
                           max_iter: int = 50) -> SymbolOrbit:
    """Steady state whose sites follow ``word``, padded with constant tails.

    Symbols sit at sites 1..n, with ``pad`` tail copies on each side and the
    stable equilibria 0 or 1 clamped just outside. The guess is
    offset + (1 - 2 offset) s_i.
    """
    word = tuple(int(s) for s in word)
    if not word or any(s not in (0, 1) for s in word):
        raise DomainError("word must be a non-empty sequence of 0s and 1s")
    if pad < MIN_PAD:
        raise DomainError(f"pad must be at least {MIN_PAD}")
    if not 0.0 < offset < min(system.a, 1.0 - system.a):
        raise DomainError("offset must keep the guess inside both basins")
    if not override and check_Hd(system) is None:
        raise NoCertificate("(Hd) does not hold at these parameters; pass override=True to try anyway")

    s = np.array((word[0],) * pad + word + (word[-1],) * pad)
    index = np.arange(1 - pad, len(word) + pad + 1)
    ghosts = (float(word[0]), float(word[-1]))
    d, k = system.d, system.k
    u = offset + (1.0 - 2.0 * offset) * s.astype(float)
    F = _steady_residual(system, u, ghosts)
    norm = np.abs(F).max()
    best = (norm, u)
    it = 0
    while norm >= ORBIT_TOL and it < max_iter:
        it += 1
        ab = np.zeros((3, u.size))
        ab[0, 1:] = d * k
        ab[1] = -d * (k + 1.0) + system.dg(u)
        ab[2, :-1] = d
        step = solve_banded((1, 1), ab, -F)
        lam = 1.0
        for _ in range(9):
            trial = u + lam * step
            Ft = _steady_residual(system, trial, ghosts)
            if np.abs(Ft).max() < norm:
                break
            lam *= 0.5
        u, F = trial, Ft
        norm = np.abs(F).max()
        if norm < best[0]:
            best = (norm, u)
    norm, u = best
    orbit = SymbolOrbit(word, s, index, u, ghosts, float(norm), bool(norm < ORBIT_TOL),
                        _membership(system, s, u), offset, it)
    if not orbit.converged:
        raise OrbitConvergenceError(f"Newton stalled at residual {norm:.3e}", orbit)
    return orbit


def shadowing_defect(pm: PlanarMap, orbit: SymbolOrbit) -> float:
    """max |phi(u_i, u_{i-1}) - (u_{i+1}, u_i)| over the window."""
    x = orbit.extended()
    fu, fv = map_forward(pm, x[1:-1], x[:-2])
    return float(max(np.abs(fu - x[2:]).max(), np.abs(fv - x[1:-1]).max()))


def orbit_shadowing_check(pm: PlanarMap, orbit: SymbolOrbit, strips: Optional[Strips] = None,
                          tol: float = SHADOW_TOL) -> bool:
    """Orbit relation to ``tol``, plus (u_i, u_{i-1}) in V_{s_i} when strips are given.

    With symbols attached to u_i, the point (u_i, u_{i-1}) lies in V_{s_i} and,
    being the image of the previous point, in U_{s_{i-1}}.
    """
    if shadowing_defect(pm, orbit) > tol:
        return False
    if strips is None:
        return True
    x = orbit.extended()
    u, v = x[1:-1], x[:-2]
    s = orbit.symbols
    inside = np.where(s == 0, strips.in_V(0, u, v), strips.in_V(1, u, v))
    prev = np.concatenate([[s[0]], s[:-1]])
    inside &= np.where(prev == 0, strips.in_U(0, u, v), strips.in_U(1, u, v))
    return bool(np.all(inside))


def all_words(n: int) -> list:
    return [tuple((m >> (n - 1 - j)) & 1 for j in range(n)) for m in range(2 ** n)]


def word_sweep(system: System, n: int = 8, pad: int = DEFAULT_PAD, threads: int = 1) -> list:
    """Orbits for all 2^n words of length n, in lexicographic order."""
    words = all_words(n)
    job = lambda w: steady_state_from_word(system, w, pad)
    if threads <= 1:
        return [job(w) for w in words]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(job, words))
