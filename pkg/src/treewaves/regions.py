"""Analytical pinning and propagation regions in the (a, d) plane.

Every curve has a general route (scan plus golden-section refinement of the
defining extremal problem) and, for the cubic, a closed form. ``method="scan"``
forces the general route so the two can be checked against each other.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from ._extremum import batch_scan_max, scan_max, scan_min
from .nonlinearity import (CUBIC, DomainError, NonlinearitySpec, System, SystemParams, eval_dg,
                           eval_g, reflect, validate_params)

A_GRID = 512
MEMBERSHIP_TOL = 1e-12
# keeps the difference quotient in d_diamond away from catastrophic cancellation
_DQ_GAP = 1e-7


class SuspiciousMaximizer(RuntimeWarning):
    pass


def _use_closed_form(spec, method):
    if method not in ("auto", "scan"):
        raise ValueError(f"unknown method {method!r}")
    return spec.is_cubic and method == "auto"


# --- pinning thresholds -------------------------------------------------------


def d_minus(spec: NonlinearitySpec, a: float, method: str = "auto") -> float:
    """d^-(a) = max_{y in (a,1)} g(y;a)/y."""
    validate_params(a)
    if _use_closed_form(spec, method):
        return (1.0 - a) ** 2 / 4.0
    e = scan_max(lambda y: eval_g(spec, y, a) / y, a, 1.0)
    if e.at_boundary:
        warnings.warn(f"d_minus maximizer at interval edge (a={a})", SuspiciousMaximizer)
    return e.value


def d_plus(spec: NonlinearitySpec, a: float, k: float, method: str = "auto") -> float:
    """d^+(a,k) = max_{y in (1-a,1)} -g(1-y;a)/(k y)."""
    validate_params(a, k=k)
    if _use_closed_form(spec, method):
        return a * a / (4.0 * k)
    e = scan_max(lambda y: -eval_g(spec, 1.0 - y, a) / (k * y), 1.0 - a, 1.0)
    if e.at_boundary:
        warnings.warn(f"d_plus maximizer at interval edge (a={a})", SuspiciousMaximizer)
    return e.value


def d_star(spec: NonlinearitySpec, a: float, k: float, method: str = "auto") -> float:
    """Large-diffusion threshold above which the speed is negative (needs k > 1)."""
    if not k > 1.0:
        raise DomainError("d_star requires k > 1")
    return d_plus(spec, a, k, method) / (1.0 - k ** -0.5) ** 2


def d_star_general(spec: NonlinearitySpec, a: float, l: float, A: float, k: float) -> float:
    """d*(a; l, A, k) for the wide sub-solution Psi_{l,A}; needs 1 < l < k and a <= A <= 1."""
    if not (k > 1.0 and 1.0 < l < k):
        raise DomainError("need k > 1 and l in (1, k)")
    if not (a <= A <= 1.0):
        raise DomainError("need A in [a, 1]")
    pref = 1.0 / ((k - l) * (1.0 - 1.0 / l))
    s_lo = 1.0 - a / A
    if s_lo >= 1.0:
        return 0.0
    e = scan_max(lambda s: -eval_g(spec, A * (1.0 - s), a) / (A * s), max(s_lo, 1e-300), 1.0)
    return pref * max(e.value, 0.0)


def d_zero(spec: NonlinearitySpec, a: float, k: float):
    """Upper bound on d for the chaotic-steady-state regime.

    Closed form for the cubic; for other nonlinearities the largest d at which
    ``chaos.check_Hd`` certifies (Hd), found by bisection. In that case a
    :class:`DZeroResult` is returned carrying the bracket.
    """
    validate_params(a, k=k)
    if spec.is_cubic:
        return min(a * a / 4.0, (1.0 - a) ** 2 / 4.0) / (k + 1.0)
    return d_zero_bisect(spec, a, k)


@dataclass
class DZeroResult:
    value: Optional[float]
    bracket: tuple
    certified: bool

    def __float__(self):
        return float("nan") if self.value is None else float(self.value)


def d_zero_bisect(spec, a, k, d_hi: float = 1.0, iters: int = 50) -> DZeroResult:
    from .chaos import check_Hd

    holds = lambda d: check_Hd(System(spec, a, d, k)) is not None
    lo, hi = 0.0, d_hi
    d = d_hi
    # walk down until (Hd) holds
    while not holds(d):
        hi = d
        d /= 2.0
        if d < 1e-12:
            return DZeroResult(None, (0.0, hi), False)
    lo = d
    if lo == d_hi:
        return DZeroResult(lo, (lo, lo), True)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if not holds(mid):
            hi = mid
        else:
            lo = mid
    return DZeroResult(lo, (lo, hi), True)


# --- geometric quantities for the small-d propagation sets -------------------


def _dq_batch(spec, A, a, k):
    """Vectorised d_diamond(A; a) for an array of A."""
    A = np.atleast_1d(np.asarray(A, dtype=float))
    Ac = A[:, None]
    gA = eval_g(spec, Ac, a)

    def q(v):
        return (gA - eval_g(spec, v, a)) / ((k + 1.0) * (Ac - v))

    hi = np.maximum(A - _DQ_GAP, 0.0)
    _, interior = batch_scan_max(q, np.zeros_like(A), hi, n=256)
    tangent = eval_dg(spec, A, a) / (k + 1.0)
    return np.maximum(interior, tangent)


def d_diamond(spec: NonlinearitySpec, A: float, a: float, k: float, method: str = "auto") -> float:
    """Smallest d for which the line through (A, -g(A)) with slope -d(k+1) stays above -g on [0, A]."""
    if not (0.0 < a < A < 1.0):
        raise DomainError("d_diamond requires 0 < a < A < 1")
    if _use_closed_form(spec, method):
        v_i = (a + 1.0) / 3.0
        if A > v_i:
            return (-3.0 * A * A + 2.0 * (a + 1.0) * A + (a - 1.0) ** 2) / (4.0 * (k + 1.0))
        return float(eval_dg(spec, A, a)) / (k + 1.0)
    return float(_dq_batch(spec, A, a, k)[0])


def touching_point(A: float, a: float) -> float:
    """Tangency point of the cubic d_diamond construction, valid for A > (a+1)/3."""
    return 0.5 * (1.0 + a - A)


def _j_minus_batch(spec, a, d, A, k):
    A = np.atleast_1d(np.asarray(A, dtype=float))
    Ac = A[:, None]

    def f(v):
        return d * (k + 1.0) * v - d * k * Ac - eval_g(spec, v, a)

    _, val = batch_scan_max(f, np.zeros_like(A), A)
    return val


def j_minus(spec: NonlinearitySpec, a: float, d: float, A: float, k: float) -> float:
    """J^-(a,d,A,k) = max_{v in [0,A]} d(k+1)v - dkA - g(v;a)."""
    return float(_j_minus_batch(spec, a, d, A, k)[0])


def in_D_minus(spec: NonlinearitySpec, a: float, d: float, k: float, n_A: int = A_GRID):
    """Membership of (a, d) in the negative-speed set via min_A J^-(a,d,A,k) < 0.

    Returns ``(inside, witness_A)``; the witness is the minimizing A (``None``
    when outside).
    """
    validate_params(a, d, k)
    As = np.linspace(a, 1.0, n_A + 2)[1:-1]
    J = _j_minus_batch(spec, a, d, As, k)
    i = int(np.argmin(J))
    best_A, best_J = float(As[i]), float(J[i])
    lo, hi = As[max(i - 1, 0)], As[min(i + 1, n_A - 1)]
    if hi > lo:
        e = scan_min(lambda x: _j_minus_batch(spec, a, d, x, k), float(lo), float(hi), n=8, tol=1e-9)
        if e.value < best_J:
            best_A, best_J = e.x, e.value
    inside = best_J < -MEMBERSHIP_TOL * max(1.0, d)
    return inside, (best_A if inside else None)


def diamond_witness(spec: NonlinearitySpec, a: float, d: float, k: float, n_A: int = A_GRID) -> Optional[float]:
    """An A with d_diamond(A; a) < d < g(A; a)/A, or None.

    Picks the grid point with the widest margin on both sides. The minimizer of
    J^- need not qualify: J^- < 0 uses the line through (A, -dA), d_diamond the
    line through (A, -g(A)), so only the sets agree, not the witnesses.
    """
    # admissible A can hug A = 1, so add points clustering there
    tail = 1.0 - (1.0 - a) * np.geomspace(1e-10, 1.0, n_A // 2 + 2)[:-1]
    As = np.union1d(np.linspace(a, 1.0, n_A + 2)[1:-1], tail)
    margin = np.minimum(d - _dq_batch(spec, As, a, k), eval_g(spec, As, a) / As - d)
    i = int(np.argmax(margin))
    return float(As[i]) if margin[i] > 0 else None


def in_D_plus(spec: NonlinearitySpec, a: float, d: float, k: float, n_A: int = A_GRID):
    """Membership in the positive-speed set, through the reflected system.

    The witness is reported in the reflected coordinates (an A in (1-a, 1)).
    """
    rspec, rp = reflect(spec, SystemParams(a, d, k))
    return in_D_minus(rspec, rp.a, rp.d, rp.k, n_A)


# --- cubic closed forms -------------------------------------------------------


def a_star_minus(k: float) -> float:
    return 1.0 - 2.0 / (math.sqrt(4.0 * k + 1.0) + 1.0)


def a1_minus(k: float) -> float:
    return max(1.0 - 2.0 / (2.0 * math.sqrt(k) + 1.0), 0.0)


def a_star_plus(k: float) -> float:
    return (math.sqrt(4.0 * k + k * k) - k) / 2.0


def a1_plus(k: float) -> float:
    return min(2.0 * math.sqrt(k) / (2.0 + math.sqrt(k)), 1.0)


def a2(k: float) -> float:
    return min(0.0, 1.0 - 2.0 * math.sqrt(k + 4.0) / (math.sqrt(k + 4.0) + 3.0 * math.sqrt(k)))


def _root_term(a, k):
    disc = k * a * a - a * (2.0 * k + 1.0) + k
    return 2.0 * (a + 1.0) * math.sqrt(k) * math.sqrt(max(disc, 0.0))


def dminus_min(a: float, k: float) -> float:
    """Lower boundary of the cubic negative-speed set; NaN for a > a_star_minus(k)."""
    if a > a_star_minus(k):
        return math.nan
    return (2.0 * a * a * k - a + 2.0 * k - _root_term(a, k)) / (4.0 * k + 1.0) ** 2


def dminus_max(a: float, k: float) -> float:
    """Upper boundary of the cubic negative-speed set; NaN for a > a_star_minus(k)."""
    if a > a_star_minus(k):
        return math.nan
    if a < a1_minus(k):
        return (1.0 - a) ** 2 / 4.0
    return (2.0 * a * a * k - a + 2.0 * k + _root_term(a, k)) / (4.0 * k + 1.0) ** 2


def dplus_min(a: float, k: float) -> float:
    # mirror of dminus_min under (a, d, k) -> (1-a, dk, 1/k)
    return dminus_min(1.0 - a, 1.0 / k) / k


def dplus_max(a: float, k: float) -> float:
    return dminus_max(1.0 - a, 1.0 / k) / k


def cubic_in_D_minus(a: float, d: float, k: float) -> bool:
    return a < a_star_minus(k) and dminus_min(a, k) < d < dminus_max(a, k)


def cubic_in_D_plus(a: float, d: float, k: float) -> bool:
    return a > a_star_plus(k) and dplus_min(a, k) < d < dplus_max(a, k)


@dataclass
class CubicBoundary:
    k: float
    a_star_minus: float
    a1_minus: float
    a_star_plus: float
    a1_plus: float
    a: np.ndarray = field(repr=False)
    curves: dict = field(repr=False)


CURVE_COLUMNS = ("d_minus", "d_plus", "d_star", "d0", "dminus_min", "dminus_max",
                 "dplus_min", "dplus_max")


def cubic_boundaries(k: float, n: int = 201, a_grid=None) -> CubicBoundary:
    """Thresholds and all boundary curves of the cubic on a uniform a-grid.

    Undefined values (``d_star`` for k <= 1, band curves outside their
    a-range) are NaN.
    """
    if not k > 0:
        raise DomainError("k must be positive")
    a = np.linspace(0.0, 1.0, n + 2)[1:-1] if a_grid is None else np.asarray(a_grid, float)
    ds = (lambda x: x * x / (4.0 * (math.sqrt(k) - 1.0) ** 2)) if k > 1 else (lambda x: math.nan)
    curves = {
        "d_minus": np.array([(1 - x) ** 2 / 4 for x in a]),
        "d_plus": np.array([x * x / (4 * k) for x in a]),
        "d_star": np.array([ds(x) for x in a]),
        "d0": np.array([min(x * x, (1 - x) ** 2) / (4 * (k + 1)) for x in a]),
        "dminus_min": np.array([dminus_min(x, k) for x in a]),
        "dminus_max": np.array([dminus_max(x, k) for x in a]),
        "dplus_min": np.array([dplus_min(x, k) for x in a]),
        "dplus_max": np.array([dplus_max(x, k) for x in a]),
    }
    return CubicBoundary(k, a_star_minus(k), a1_minus(k), a_star_plus(k), a1_plus(k), a, curves)


# --- general band of the negative-speed set -----------------------------------


def d_minus_band(spec: NonlinearitySpec, a: float, k: float, n_A: int = 256):
    """(inf, sup) of the d-slice of the negative-speed set at fixed a, or None.

    Built directly from the definition: the slice is the union over admissible
    A of (d_diamond(A), g(A)/A). Assumes the union is an interval.
    """
    validate_params(a, k=k)
    As = np.linspace(a, 1.0, n_A + 2)[1:-1]

    def gap(x):
        x = np.atleast_1d(x)
        return _dq_batch(spec, x, a, k) - eval_g(spec, x, a) / x

    F = gap(As)
    ok = F <= 0
    if not ok.any():
        # admissible set may be thinner than the grid; check near the best sample
        i = int(np.argmin(F))
        e = scan_min(gap, float(As[max(i - 1, 0)]), float(As[min(i + 1, n_A - 1)]), n=16, tol=1e-9)
        if e.value >= 0:
            return None
        As = np.array([e.x])
        F = np.array([e.value])
        ok = np.array([True])
    lo_vals, hi_vals = [], []
    idx = np.flatnonzero(ok)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    f1 = lambda x: float(gap(x)[0])
    # F > 0 at both ends of (a, 1), so every run is bracketed
    ext = np.concatenate([[a], As, [1.0]]) if len(As) == n_A else np.array([a, As[0], 1.0])
    for run in runs:
        i0, i1 = run[0] + 1, run[-1] + 1
        left = brentq(f1, ext[i0 - 1], ext[i0], xtol=1e-13)
        right = brentq(f1, ext[i1], ext[i1 + 1], xtol=1e-13)
        dd = lambda x: _dq_batch(spec, x, a, k)
        ga = lambda x: eval_g(spec, np.atleast_1d(x), a) / np.atleast_1d(x)
        cand_min = [float(dd(left)[0]), float(dd(right)[0])]
        cand_max = [float(ga(left)[0]), float(ga(right)[0])]
        if right - left > 1e-9:
            cand_min.append(scan_min(dd, left, right, n=32, tol=1e-8).value)
            cand_max.append(scan_max(ga, left, right, n=32, tol=1e-8).value)
        lo_vals.append(min(cand_min))
        hi_vals.append(max(cand_max))
    return min(lo_vals), max(hi_vals)


def d_plus_band(spec: NonlinearitySpec, a: float, k: float, n_A: int = 256):
    """(inf, sup) of the d-slice of the positive-speed set, via reflection."""
    rspec, rp = reflect(spec, SystemParams(a, 1.0, k))
    band = d_minus_band(rspec, rp.a, rp.k, n_A)
    if band is None:
        return None
    return band[0] / k, band[1] / k


# --- classification -----------------------------------------------------------

PINNED = "PinnedGuaranteed"
NEGATIVE = "NegativeSpeed"
POSITIVE = "PositiveSpeed"
NEGATIVE_LARGE_D = "NegativeByLargeD"
UNKNOWN = "Unknown"


@dataclass
class RegionVerdict:
    a: float
    d: float
    k: float
    classification: str
    certificate: dict

    @property
    def witness_A(self) -> Optional[float]:
        return self.certificate.get("A")

    @property
    def sign(self) -> Optional[int]:
        return {PINNED: 0, NEGATIVE: -1, NEGATIVE_LARGE_D: -1, POSITIVE: 1}.get(self.classification)


def classify(spec: NonlinearitySpec, a: float, d: float, k: float) -> RegionVerdict:
    """Apply the theorems in fixed order: pinning, small-d negative, small-d positive, large d."""
    validate_params(a, d, k)
    dm, dp = d_minus(spec, a), d_plus(spec, a, k)
    if d < min(dm, dp):
        return RegionVerdict(a, d, k, PINNED, {"curve": "D0", "d_minus": dm, "d_plus": dp})
    inside, A = in_D_minus(spec, a, d, k)
    if inside:
        return RegionVerdict(a, d, k, NEGATIVE, {"curve": "D-", "A_J": A,
                                                 "A": diamond_witness(spec, a, d, k)})
    inside, A = in_D_plus(spec, a, d, k)
    if inside:
        rspec, rp = reflect(spec, SystemParams(a, d, k))
        return RegionVerdict(a, d, k, POSITIVE, {"curve": "D+", "A_J": A,
                                                 "A": diamond_witness(rspec, rp.a, rp.d, rp.k)})
    if k > 1.0:
        ds = d_star(spec, a, k)
        if d > ds:
            return RegionVerdict(a, d, k, NEGATIVE_LARGE_D, {"curve": "d*", "d_star": ds})
    return RegionVerdict(a, d, k, UNKNOWN, {})


# --- continuum asymptotics ----------------------------------------------------


def asymptotic_speed(a: float, d: float, k: float) -> float:
    """Large-d speed prediction for the cubic: sqrt((k+1)d)(a - 1/2) - (k-1)d."""
    if not d > 0:
        raise DomainError("d must be positive")
    return math.sqrt((k + 1.0) * d) * (a - 0.5) - (k - 1.0) * d


def critical_diffusion(a: float, k: float) -> float:
    """Diffusion at which the asymptotic speed changes sign (k > 1)."""
    if not k > 1.0:
        raise DomainError("critical_diffusion requires k > 1")
    return (k + 1.0) / (k - 1.0) ** 2 * (a - 0.5) ** 2
