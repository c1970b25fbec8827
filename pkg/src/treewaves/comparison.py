"""Sub-solutions of the travelling-wave equation and grid certificates.

The residual operator is

    I[c, Phi](xi) = -c Phi'(xi) - d Delta_k[Phi](xi) - g(Phi(xi); a),
    Delta_k[Phi](xi) = Phi(xi - 1) - (k + 1) Phi(xi) + k Phi(xi + 1).

A profile with I[cbar, Psi] <= 0 everywhere that sits below a wave forces the
wave speed to satisfy c <= cbar. Two families are provided: a steep bridge for
small d and a wide exponential profile for large d.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .nonlinearity import DomainError, System, eval_g
from .regions import d_star_general, in_D_minus, j_minus

SAFETY = 0.99
CERT_TOL = 1e-10
MIN_POINTS = 10_000
MAX_POINTS = 1_000_000


class CertificateUnavailable(ValueError):
    """The parameters do not admit the requested sub-solution."""


# --- residual operator -----------------------------------------------------------


def delta_k_fn(k: float, profile, xi):
    """Delta_k[Phi](xi) for a callable profile."""
    xi = np.asarray(xi, dtype=float)
    return profile(xi - 1.0) - (k + 1.0) * profile(xi) + k * profile(xi + 1.0)


@dataclass
class ResidualReport:
    xi: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    max: float
    argmax: float


def residual_op(system: System, c: float, profile, xi_grid) -> ResidualReport:
    """Pointwise I[c, profile] on ``xi_grid``.

    ``profile`` is called for values and must expose ``derivative(xi)``.
    """
    xi = np.asarray(xi_grid, dtype=float)
    vals = (-c * profile.derivative(xi) - system.d * delta_k_fn(system.k, profile, xi)
            - eval_g(system.spec, profile(xi), system.a))
    i = int(np.argmax(vals))
    return ResidualReport(xi, vals, float(vals[i]), float(xi[i]))


class Profile:
    """Callable profile with a ``derivative`` method."""

    def __call__(self, xi):
        raise NotImplementedError

    def derivative(self, xi):
        raise NotImplementedError

    def active_range(self) -> tuple:
        raise NotImplementedError


class ConstantProfile(Profile):
    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, xi):
        return np.full(np.shape(xi), self.value)

    def derivative(self, xi):
        return np.zeros(np.shape(xi))

    def active_range(self):
        return (0.0, 0.0)


class InterpolatedProfile(Profile):
    """Cubic spline through nodal values, clamped to 0 and 1 outside the domain."""

    def __init__(self, xi, values):
        xi = np.asarray(xi, dtype=float)
        self.lo, self.hi = float(xi[0]), float(xi[-1])
        self.spline = CubicSpline(xi, values)

    @classmethod
    def from_wave(cls, sol) -> "InterpolatedProfile":
        g = sol.grid
        return cls(np.concatenate([[-g.L], g.xi, [g.L]]), sol.profile())

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        inside = self.spline(np.clip(xi, self.lo, self.hi))
        return np.where(xi < self.lo, 0.0, np.where(xi > self.hi, 1.0, inside))

    def derivative(self, xi):
        xi = np.asarray(xi, dtype=float)
        d = self.spline(np.clip(xi, self.lo, self.hi), 1)
        return np.where((xi < self.lo) | (xi > self.hi), 0.0, d)

    def active_range(self):
        return (self.lo, self.hi)


class ShiftedProfile(Profile):
    def __init__(self, base: Profile, shift: float):
        self.base, self.shift = base, float(shift)

    def __call__(self, xi):
        return self.base(np.asarray(xi, dtype=float) + self.shift)

    def derivative(self, xi):
        return self.base.derivative(np.asarray(xi, dtype=float) + self.shift)

    def active_range(self):
        lo, hi = self.base.active_range()
        return (lo - self.shift, hi - self.shift)


# --- steep bridge ------------------------------------------------------------------


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def smoothstep_derivative(t):
    inside = (t > 0.0) & (t < 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * t * t * (t - 1.0) ** 2, 0.0)


@dataclass
class SteepSubsolution(Profile):
    """0 left of xi0, A right of xi1, quintic smoothstep in between."""

    A: float
    xi0: float
    xi1: float
    eps: float = math.nan
    cbar: float = math.nan

    def __post_init__(self):
        if not self.xi1 > self.xi0:
            raise DomainError("need xi0 < xi1")

    @property
    def width(self) -> float:
        return self.xi1 - self.xi0

    def __call__(self, xi):
        return self.A * smoothstep((np.asarray(xi, dtype=float) - self.xi0) / self.width)

    def derivative(self, xi):
        t = (np.asarray(xi, dtype=float) - self.xi0) / self.width
        return self.A / self.width * smoothstep_derivative(t)

    @property
    def max_derivative(self) -> float:
        # smoothstep' peaks at t = 1/2 with value 15/8
        return 15.0 / 8.0 * self.A / self.width

    def active_range(self):
        return (self.xi0, self.xi1)


def build_steep(system: System, A: Optional[float] = None, xi0: float = -0.45,
                xi1: float = 0.45) -> SteepSubsolution:
    """Steep sub-solution with negative speed bound for (a, d) in the small-d set.

    eps = min_{v in [0,A]} g(v) + d(kA - (k+1)v) = -J^-(a,d,A,k) must be
    positive; cbar = -0.99 eps / max Psi'. Without ``A`` the witness of the
    membership scan is used.
    """
    a, d, k = system.a, system.d, system.k
    if not 0.0 < xi1 - xi0 < 1.0:
        raise DomainError("bridge width must lie in (0, 1)")
    if A is None:
        inside, A = in_D_minus(system.spec, a, d, k)
        if not inside:
            raise CertificateUnavailable("no A with J^- < 0; point is outside the small-d negative set")
    if not a < A < 1.0:
        raise DomainError("need a < A < 1")
    eps = -j_minus(system.spec, a, d, A, k)
    if not eps > 0:
        raise CertificateUnavailable(f"J^- = {-eps:.3e} >= 0 at A = {A}")
    sub = SteepSubsolution(A, xi0, xi1, eps)
    sub.cbar = -SAFETY * eps / sub.max_derivative
    return sub


# --- wide profile ------------------------------------------------------------------


@dataclass
class WideSubsolution(Profile):
    """Constant, then a cubic, then A(1 - l^-xi), joined C^1 at -1-1/l and -1."""

    l: float
    A: float
    k: float
    eps: float = math.nan
    C: float = math.nan
    cbar: float = math.nan
    d_star: float = math.nan

    def __post_init__(self):
        if not (self.k > 1.0 and 1.0 < self.l < self.k):
            raise DomainError("need k > 1 and l in (1, k)")

    @property
    def breaks(self) -> tuple:
        return (-1.0 - 1.0 / self.l, -1.0)

    @property
    def floor(self) -> float:
        return self.A * (1.0 - self.l - math.log(self.l) / 3.0)

    def kappa(self, xi):
        return self.A * (1.0 - self.l ** (-np.asarray(xi, dtype=float)))

    def kappa_derivative(self, xi):
        return self.A * math.log(self.l) * self.l ** (-np.asarray(xi, dtype=float))

    def _p(self, xi):
        L = math.log(self.l)
        return L / 3.0 * (self.l * xi + 1.0 + self.l) ** 3 + 1.0 - self.l - L / 3.0

    def _dp(self, xi):
        return math.log(self.l) * self.l * (self.l * xi + 1.0 + self.l) ** 2

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        b0, b1 = self.breaks
        return np.where(xi <= b0, self.floor,
                        np.where(xi <= b1, self.A * self._p(xi), self.kappa(np.maximum(xi, b1))))

    def derivative(self, xi):
        xi = np.asarray(xi, dtype=float)
        b0, b1 = self.breaks
        return np.where(xi <= b0, 0.0,
                        np.where(xi <= b1, self.A * self._dp(xi), self.kappa_derivative(np.maximum(xi, b1))))

    def delta_kappa_exact(self, xi):
        """Closed form A l^-xi (k - l)(1 - 1/l)."""
        return self.A * self.l ** (-np.asarray(xi, dtype=float)) * (self.k - self.l) * (1.0 - 1.0 / self.l)

    def junction_gaps(self) -> dict:
        """One-sided value and slope mismatches at both break points."""
        b0, b1 = self.breaks
        A = self.A
        return {
            "value_b0": abs(A * self._p(b0) - self.floor),
            "slope_b0": abs(A * self._dp(b0)),
            "value_b1": abs(A * self._p(b1) - float(self.kappa(b1))),
            "slope_b1": abs(A * self._dp(b1) - float(self.kappa_derivative(b1))),
        }

    def active_range(self):
        # kappa is within 1e-12 of A once l^-xi < 1e-12
        return (self.breaks[0] - 1.0, 12.0 * math.log(10.0) / math.log(self.l))


def build_wide(system: System, l: Optional[float] = None, A: float = 0.99,
               n_scan: int = 20_001) -> WideSubsolution:
    """Wide sub-solution Psi_{l,A} with its speed bound.

    Requires d > d*(a; l, A, k). Then eps = (d - d*)(k - l)(1 - 1/l),
    C = inf of Delta_k[Psi] over (-1-1/l, 0), and cbar is 0.99 times the
    larger of -eps/log l and -eps C / (A (k-l)(1-1/l) l log l).
    """
    a, d, k = system.a, system.d, system.k
    if not k > 1.0:
        raise DomainError("the wide profile needs k > 1")
    l = math.sqrt(k) if l is None else float(l)
    if not 1.0 < l < k:
        raise DomainError("need l in (1, k)")
    if not a <= A < 1.0:
        raise DomainError("need A in [a, 1)")
    ds = d_star_general(system.spec, a, l, A, k)
    if not d > ds:
        raise CertificateUnavailable(f"d = {d} does not exceed d*(a;l,A,k) = {ds:.6g}")
    factor = (k - l) * (1.0 - 1.0 / l)
    eps = (d - ds) * factor
    sub = WideSubsolution(l, A, k, eps=eps, d_star=ds)
    # infimum over an open interval: scan the closed one shrunk by 1e-9
    b0 = sub.breaks[0]
    xs = np.linspace(b0 + 1e-9, -1e-9, n_scan)
    C = float(np.min(delta_k_fn(k, sub, xs)))
    sub.C = C
    L = math.log(l)
    sub.cbar = SAFETY * max(-eps / L, -eps * C / (A * factor * l * L))
    return sub


# --- certificates ----------------------------------------------------------------


@dataclass
class CertificateReport:
    passed: bool
    max_I: float
    argmax: float
    n_points: int
    cbar: float
    residual: ResidualReport = field(repr=False)


def verify_certificate(system: System, cbar: float, sub: Profile, xi_range=None,
                       n_points: int = MIN_POINTS, tol: float = CERT_TOL) -> CertificateReport:
    """Grid certificate: max I[cbar, sub] <= tol.

    The grid is doubled until the maximum moves by less than 1e-12 or reaches
    1e6 points. This is a sampled check, not a proof.
    """
    if n_points < MIN_POINTS:
        raise DomainError(f"n_points must be at least {MIN_POINTS}")
    if xi_range is None:
        lo, hi = sub.active_range()
        xi_range = (lo - 2.0, hi + 2.0)
    n = n_points
    rep = residual_op(system, cbar, sub, np.linspace(xi_range[0], xi_range[1], n))
    while 2 * n <= MAX_POINTS:
        n *= 2
        nxt = residual_op(system, cbar, sub, np.linspace(xi_range[0], xi_range[1], n))
        done = abs(nxt.max - rep.max) < 1e-12
        rep = nxt
        if done:
            break
    return CertificateReport(rep.max <= tol, rep.max, rep.argmax, n, cbar, rep)


def dominating_shift(phi: Profile, sub: Profile, xi_grid, s_max: float = 200.0) -> Optional[float]:
    """Smallest s >= 0 (to 1e-6) with phi(xi + s) >= sub(xi) on ``xi_grid``."""
    xi = np.asarray(xi_grid, dtype=float)
    target = sub(xi)

    def ok(s):
        return bool(np.all(phi(xi + s) >= target))

    if ok(0.0):
        return 0.0
    hi = 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > s_max:
            return None
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


# --- structure of Delta_k[Psi] ---------------------------------------------------------


@dataclass
class PsiDeltaReport:
    items: dict
    details: dict

    @property
    def passed(self) -> bool:
        return all(self.items.values())


def verify_psi_delta_props(l: float, A: float, k: float, n: int = 20_001) -> PsiDeltaReport:
    """Dense-grid check of the five qualitative properties of Delta_k[Psi_{l,A}]."""
    if not 0.0 < A < 1.0:
        raise DomainError("need A in (0, 1)")
    sub = WideSubsolution(l, A, k)
    dk = lambda x: delta_k_fn(k, sub, x)
    b0 = -1.0 - 1.0 / l
    scale = A * k * l
    items, details = {}, {}

    x = np.linspace(b0 - 1.0 - 5.0, b0 - 1.0, n)
    v = np.abs(dk(x)).max()
    items["i"], details["i"] = bool(v <= 1e-13 * scale), float(v)

    x = np.linspace(b0 - 1.0, b0, n)[1:]
    dv = np.diff(dk(x))
    items["ii"], details["ii"] = bool(np.all(dv > 0)), float(dv.min())

    x = np.linspace(b0, -1.0, n)[1:-1]
    y = dk(x)
    second = y[:-2] - 2.0 * y[1:-1] + y[2:]
    slack = 1e-13 * scale
    items["iii"], details["iii"] = bool(np.all(second <= slack)), float(second.max())

    x = np.linspace(-1.0, 0.0, n)[:-1]
    gap = dk(x) - sub.delta_kappa_exact(x)
    items["iv"], details["iv"] = bool(np.all(gap > 0)), float(gap.min())

    x = np.linspace(0.0, 10.0, n)
    err = np.abs(dk(x) - sub.delta_kappa_exact(x)).max()
    items["v"], details["v"] = bool(err <= 1e-12), float(err)
    return PsiDeltaReport(items, details)
