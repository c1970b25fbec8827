"""Coarse-scan plus golden-section refinement for maxima of smooth 1-D functions."""
from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
SCAN_POINTS = 1024
REFINE_WIDTH = 1e-10


class Extremum(NamedTuple):
    x: float
    value: float
    at_boundary: bool


def golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float = REFINE_WIDTH):
    """Golden-section search for the maximum of a unimodal ``f`` on [lo, hi]."""
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = f(d)
    x = 0.5 * (lo + hi)
    return x, f(x)


def scan_max(f: Callable, lo: float, hi: float, n: int = SCAN_POINTS,
             tol: float = REFINE_WIDTH) -> Extremum:
    """Maximize ``f`` over [lo, hi].

    ``f`` must accept numpy arrays. The best of ``n`` equispaced samples is
    refined by golden-section search on the two neighbouring cells.
    """
    xs = np.linspace(lo, hi, n)
    ys = np.asarray(f(xs), dtype=float)
    i = int(np.nanargmax(ys))
    best_x, best_y = float(xs[i]), float(ys[i])
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, n - 1)]
    if b > a:
        x, y = golden_max(lambda t: np.asarray(f(np.float64(t)), dtype=float).item(), float(a), float(b), tol)
        if y > best_y:
            best_x, best_y = x, y
    edge = min(best_x - lo, hi - best_x) <= 2 * tol + 1e-12 * max(1.0, abs(hi))
    return Extremum(best_x, best_y, edge)


def scan_min(f: Callable, lo: float, hi: float, n: int = SCAN_POINTS,
             tol: float = REFINE_WIDTH) -> Extremum:
    e = scan_max(lambda x: -np.asarray(f(x)), lo, hi, n, tol)
    return Extremum(e.x, -e.value, e.at_boundary)


def batch_scan_max(f: Callable, lo, hi, n: int = SCAN_POINTS, tol: float = REFINE_WIDTH):
    """Row-wise maximization of ``m`` independent problems.

    ``f(x)`` receives an array of shape ``(m, j)`` whose row ``r`` lies in
    ``[lo[r], hi[r]]`` and returns values of the same shape; problem data must
    therefore be captured with shape ``(m, 1)``. Returns ``(x, value)`` arrays
    of shape ``(m,)``.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    m = lo.size
    t = np.linspace(0.0, 1.0, n)
    xs = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    ys = np.asarray(f(xs), dtype=float)
    i = np.argmax(ys, axis=1)
    rows = np.arange(m)
    best_x, best_y = xs[rows, i], ys[rows, i]
    a = xs[rows, np.maximum(i - 1, 0)]
    b = xs[rows, np.minimum(i + 1, n - 1)]
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc = f(c[:, None])[:, 0]
    fd = f(d[:, None])[:, 0]
    width = float(np.max(b - a)) if m else 0.0
    steps = 0 if width <= tol else int(math.ceil(math.log(tol / width) / math.log(INV_PHI)))
    for _ in range(steps):
        left = fc >= fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        c_new = np.where(left, b - INV_PHI * (b - a), d)
        d_new = np.where(left, c, a + INV_PHI * (b - a))
        # one fresh evaluation per row; the surviving interior point is reused
        f_eval = f(np.where(left, c_new, d_new)[:, None])[:, 0]
        fc, fd = np.where(left, f_eval, fd), np.where(left, fc, f_eval)
        c, d = c_new, d_new
    xm = 0.5 * (a + b)
    ym = f(xm[:, None])[:, 0]
    better = ym > best_y
    return np.where(better, xm, best_x), np.where(better, ym, best_y)
