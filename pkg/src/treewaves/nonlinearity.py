"""Bistable nonlinearities g(v; a), their derivatives, and the reflection symmetry."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Scalar = Callable[..., "np.ndarray | float"]


class CapabilityError(ValueError):
    """A custom nonlinearity is missing an evaluator that was asked for."""


class DomainError(ValueError):
    """Parameters outside the admissible set."""


@dataclass(frozen=True)
class NonlinearitySpec:
    """Bistable nonlinearity g(v; a).

    ``kind`` is ``"cubic"`` for g(v; a) = v(1 - v)(v - a); anything else is a
    custom nonlinearity and must supply ``g`` plus the analytic derivatives
    ``dg`` (d/dv), ``d2g`` (d^2/dv^2) and ``dga`` (d/da). All evaluators take
    ``(v, a)`` and must broadcast over numpy arrays.
    """

    kind: str = "cubic"
    g: Optional[Scalar] = field(default=None, compare=False)
    dg: Optional[Scalar] = field(default=None, compare=False)
    d2g: Optional[Scalar] = field(default=None, compare=False)
    dga: Optional[Scalar] = field(default=None, compare=False)
    name: str = ""
    # set on reflected specs so that reflecting twice hands back the original
    base: Optional["NonlinearitySpec"] = field(default=None, compare=False, repr=False)

    @property
    def is_cubic(self) -> bool:
        return self.kind == "cubic"


CUBIC = NonlinearitySpec("cubic", name="cubic")


def custom(g, dg=None, d2g=None, dga=None, name="custom") -> NonlinearitySpec:
    return NonlinearitySpec("custom", g=g, dg=dg, d2g=d2g, dga=dga, name=name)


@dataclass(frozen=True)
class SystemParams:
    a: float
    d: float
    k: float

    def __post_init__(self):
        validate_params(self.a, self.d, self.k)


@dataclass(frozen=True)
class System:
    """A nonlinearity together with the parameters (a, d, k)."""

    spec: NonlinearitySpec
    a: float
    d: float
    k: float

    def __post_init__(self):
        validate_params(self.a, self.d, self.k)

    @classmethod
    def cubic(cls, a: float, d: float, k: float) -> "System":
        return cls(CUBIC, a, d, k)

    @property
    def params(self) -> SystemParams:
        return SystemParams(self.a, self.d, self.k)

    def g(self, v):
        return eval_g(self.spec, v, self.a)

    def dg(self, v):
        return eval_dg(self.spec, v, self.a)

    def reflected(self) -> "System":
        spec, p = reflect(self.spec, self.params)
        return System(spec, p.a, p.d, p.k)


def validate_params(a: float, d: Optional[float] = None, k: Optional[float] = None) -> None:
    if not (0.0 < a < 1.0):
        raise DomainError("a must lie in (0,1)")
    if d is not None and not d > 0.0:
        raise DomainError("d must be positive")
    if k is not None and not k > 0.0:
        raise DomainError("k must be positive")


def eval_g(spec: NonlinearitySpec, v, a):
    if spec.is_cubic:
        return v * (1.0 - v) * (v - a)
    return spec.g(v, a)


def _require(fn, what):
    if fn is None:
        raise CapabilityError(f"custom nonlinearity does not provide {what}")
    return fn


def eval_dg(spec: NonlinearitySpec, v, a):
    if spec.is_cubic:
        return -3.0 * v * v + 2.0 * (1.0 + a) * v - a
    return _require(spec.dg, "g'")(v, a)


def eval_d2g(spec: NonlinearitySpec, v, a):
    if spec.is_cubic:
        return -6.0 * v + 2.0 * (1.0 + a) + 0.0 * v
    return _require(spec.d2g, "g''")(v, a)


def eval_dga(spec: NonlinearitySpec, v, a):
    if spec.is_cubic:
        return -v * (1.0 - v)
    return _require(spec.dga, "d_a g")(v, a)


def eval_derivatives(spec: NonlinearitySpec, v, a):
    """Return ``(g', g'', d_a g)`` at ``(v, a)``."""
    return eval_dg(spec, v, a), eval_d2g(spec, v, a), eval_dga(spec, v, a)


def max_abs_dg(spec: NonlinearitySpec, a: float, n: int = 513) -> float:
    v = np.linspace(0.0, 1.0, n)
    return float(np.max(np.abs(eval_dg(spec, v, a))))


# --- hypothesis checks -----------------------------------------------------


@dataclass
class HypothesisResult:
    name: str
    passed: bool
    violation: Optional[tuple] = None
    detail: str = ""


@dataclass
class HypothesisReport:
    results: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> HypothesisResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)


def _first_bad(mask, *coords):
    idx = np.argwhere(mask)
    if idx.size == 0:
        return None
    i = tuple(idx[0])
    return tuple(float(c[i]) for c in coords)


def check_hypotheses(spec: NonlinearitySpec, grid_resolution: int = 512) -> HypothesisReport:
    """Grid-sampled check of (Hg), (Hg1) and (Hg2).

    These are sampled certificates, not proofs. The first violating sample is
    reported for each failed hypothesis.
    """
    if grid_resolution < 100:
        raise ValueError("grid_resolution must be at least 100")
    n = grid_resolution
    tol = 1e-12 if spec.is_cubic else 1e-8
    a_axis = np.linspace(0.0, 1.0, n + 2)[1:-1]
    results = []

    # (Hg): zeros, slopes and sign pattern
    zeros = np.concatenate([eval_g(spec, np.zeros_like(a_axis), a_axis),
                            eval_g(spec, a_axis, a_axis),
                            eval_g(spec, np.ones_like(a_axis), a_axis)])
    bad = None
    if np.any(np.abs(zeros) > tol):
        j = int(np.argmax(np.abs(zeros) > tol)) % n
        bad = (float(a_axis[j]),)
        detail = "g does not vanish at 0, a, 1"
    else:
        try:
            slopes_ok = ((eval_dg(spec, 0.0 * a_axis, a_axis) < 0)
                         & (eval_dg(spec, 1.0 + 0.0 * a_axis, a_axis) < 0)
                         & (eval_dg(spec, a_axis, a_axis) > 0))
            detail = ""
        except CapabilityError as exc:
            slopes_ok, detail = np.zeros(1, dtype=bool), str(exc)
        if detail:
            bad = ()
        elif not np.all(slopes_ok):
            bad = (float(a_axis[np.argmin(slopes_ok)]),)
            detail = "slope conditions at 0, a, 1 violated"
        else:
            A, V = np.meshgrid(a_axis, np.linspace(-0.5, 1.5, 2 * n + 1), indexing="ij")
            G = eval_g(spec, V, A)
            # stay clear of the zeros where the sign is numerically ambiguous
            margin = 1e-9
            pos = ((V < -margin) | ((V > A + margin) & (V < 1 - margin)))
            neg = (((V > margin) & (V < A - margin)) | (V > 1 + margin))
            wrong = (pos & (G <= 0)) | (neg & (G >= 0))
            bad = _first_bad(wrong, A, V)
            detail = "sign pattern violated" if bad else ""
    results.append(HypothesisResult("Hg", bad is None, bad or None, "" if bad is None else detail))

    # (Hg1): d_a g < 0 on (0,1)^2
    try:
        A, V = np.meshgrid(a_axis, a_axis, indexing="ij")
        bad = _first_bad(eval_dga(spec, V, A) >= 0, A, V)
        results.append(HypothesisResult("Hg1", bad is None, bad))
    except CapabilityError as exc:
        results.append(HypothesisResult("Hg1", False, None, str(exc)))

    # (Hg2): endpoint conditions at a in {0, 1}; inflection uniqueness near them
    try:
        ok = (abs(eval_dg(spec, 0.0, 0.0)) <= tol and abs(eval_dg(spec, 1.0, 1.0)) <= tol
              and eval_d2g(spec, 0.0, 0.0) > 0 and eval_d2g(spec, 1.0, 1.0) < 0)
        detail = "" if ok else "endpoint conditions at a in {0,1} fail"
        if ok:
            v = np.linspace(0.0, 1.0, 4 * n + 1)
            for a in (0.01, 0.99):
                s = np.sign(eval_d2g(spec, v, a))
                if np.count_nonzero(np.diff(s[s != 0])) != 1:
                    ok, detail = False, f"inflection point not unique at a={a}"
                    break
        results.append(HypothesisResult("Hg2", ok, None, detail))
    except CapabilityError as exc:
        results.append(HypothesisResult("Hg2", False, None, str(exc)))
    return HypothesisReport(results)


# --- symmetry ---------------------------------------------------------------


def reflect(spec: NonlinearitySpec, params: SystemParams):
    """Reflected system: g~(v; 1-a) = -g(1-v; a), with (a, d, k) -> (1-a, dk, 1/k).

    The cubic is closed under the reflection. Applying ``reflect`` twice returns
    the original parameters and an equivalent nonlinearity.
    """
    new = SystemParams(1.0 - params.a, params.d * params.k, 1.0 / params.k)
    if spec.is_cubic:
        return spec, new
    if spec.base is not None:
        return spec.base, new
    g, dg, d2g, dga = spec.g, spec.dg, spec.d2g, spec.dga
    rg = lambda v, b: -g(1.0 - v, 1.0 - b)
    rdg = None if dg is None else (lambda v, b: dg(1.0 - v, 1.0 - b))
    rd2g = None if d2g is None else (lambda v, b: -d2g(1.0 - v, 1.0 - b))
    rdga = None if dga is None else (lambda v, b: dga(1.0 - v, 1.0 - b))
    out = NonlinearitySpec("reflected", g=rg, dg=rdg, d2g=rd2g, dga=rdga,
                           name="reflected:" + (spec.name or "custom"), base=spec)
    return out, new


# --- registry of built-ins for the CLI ---------------------------------------


def _quintic():
    # v(1-v)(v-a) * (1 + v(1-v)); the extra factor is positive on [0, 1]
    def g(v, a):
        return v * (1 - v) * (v - a) * (1 + v * (1 - v))

    def dg(v, a):
        p = v * (1 - v) * (v - a)
        dp = -3 * v * v + 2 * (1 + a) * v - a
        q = 1 + v * (1 - v)
        return dp * q + p * (1 - 2 * v)

    def d2g(v, a):
        p = v * (1 - v) * (v - a)
        dp = -3 * v * v + 2 * (1 + a) * v - a
        d2p = -6 * v + 2 * (1 + a)
        q = 1 + v * (1 - v)
        return d2p * q + 2 * dp * (1 - 2 * v) - 2 * p

    def dga(v, a):
        return -v * (1 - v) * (1 + v * (1 - v))

    return custom(g, dg, d2g, dga, name="quintic")


REGISTRY = {"cubic": CUBIC, "quintic": _quintic()}


def by_name(name: str) -> NonlinearitySpec:
    try:
        return REGISTRY[name]
    except KeyError:
        raise DomainError(f"unknown nonlinearity {name!r}; choose from {sorted(REGISTRY)}") from None
