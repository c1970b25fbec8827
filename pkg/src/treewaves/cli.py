"""Command-line front end. Every command writes CSV to --out or stdout.

Exit codes: 0 success, 1 failed selftest, 2 invalid input, 3 solver did not
converge, 64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import chaos, comparison, dynamics, regions, wave_solver
from .nonlinearity import CUBIC, DomainError, System, by_name

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_USAGE = 0, 1, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else repr(float(x))
    return str(x)


class Output:
    """CSV sink for --out or stdout."""

    def __init__(self, path: Optional[str]):
        self.path = path
        self.buf = io.StringIO()
        self.writer = csv.writer(self.buf, lineterminator="\n")

    def row(self, *cells):
        self.writer.writerow([fmt(c) for c in cells])

    def close(self):
        text = self.buf.getvalue()
        if self.path:
            with open(self.path, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


# --- commands ---------------------------------------------------------------------


def _system(args) -> System:
    return System(by_name(args.nonlinearity), args.a, args.d, args.k)


def _grid(args) -> wave_solver.WaveGrid:
    return wave_solver.WaveGrid(args.L, args.i0)


def cmd_speed(args, out: Output) -> int:
    sol = wave_solver.solve(_system(args), _grid(args))
    out.row("c", sol.c, "converged", sol.converged, "residual", sol.residual_norm)
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_scan(args, out: Output) -> int:
    if args.a_steps < 1 or args.d_steps < 1:
        raise DomainError("step counts must be positive")
    a_vals = np.linspace(args.a_min, args.a_max, args.a_steps)
    d_vals = np.linspace(args.d_min, args.d_max, args.d_steps)
    for av in a_vals:
        System(CUBIC, float(av), 1.0, args.k)
    for dv in d_vals:
        System(CUBIC, 0.5, float(dv), args.k)
    sm = wave_solver.sweep(by_name(args.nonlinearity), a_vals, d_vals, args.k, _grid(args), args.threads)
    out.row("a", "d", "c", "converged", "pinned")
    for row in sm.rows():
        out.row(*row)
    return EXIT_OK if sm.converged.all() else EXIT_NONCONVERGED


def cmd_regions(args, out: Output) -> int:
    if args.n < 1:
        raise DomainError("n must be positive")
    a_grid = np.linspace(args.a_min, args.a_max, args.n)
    for av in a_grid:
        System(CUBIC, float(av), 1.0, args.k)
    cb = regions.cubic_boundaries(args.k, a_grid=a_grid)
    out.row("a", *regions.CURVE_COLUMNS)
    for i, av in enumerate(cb.a):
        out.row(float(av), *(float(cb.curves[c][i]) for c in regions.CURVE_COLUMNS))
    return EXIT_OK


def cmd_classify(args, out: Output) -> int:
    s = _system(args)
    v = regions.classify(s.spec, s.a, s.d, s.k)
    out.row("a", "d", "verdict", "witness_A")
    out.row(s.a, s.d, v.classification, v.witness_A)
    return EXIT_OK


def _schedule_system(args):
    sched = dynamics.parse_schedule(args.schedule)
    return sched, System(by_name(args.nonlinearity), args.a, sched(0.0), args.k)


def cmd_simulate(args, out: Output) -> int:
    sched, system = _schedule_system(args)
    if args.hi <= args.lo:
        raise DomainError("need lo < hi")
    traj = dynamics.integrate(system, sched, dynamics.LatticeState.step(args.lo, args.hi),
                              args.t_end, args.dt, args.sample_dt)
    out.row("t", "i", "u")
    idx = np.arange(args.lo, args.hi + 1)
    for t, u in zip(traj.t, traj.states):
        for i, v in zip(idx, u):
            out.row(float(t), int(i), float(v))
    return EXIT_OK


def cmd_simulate_tree(args, out: Output) -> int:
    if args.k != int(args.k) or args.k < 1:
        raise DomainError("tree simulation needs an integer k >= 1")
    sched, system = _schedule_system(args)
    layers = [1.0 if i >= 0 else 0.0 for i in range(args.i_min, args.i_max + 1)]
    tree = dynamics.TreeState.layered(args.i_min, args.i_max, int(args.k), layers)
    traj = dynamics.integrate(system, sched, tree, args.t_end, args.dt, args.sample_dt)
    out.row("t", "layer", "node", "u")
    for n, t in enumerate(traj.t):
        for j, vals in enumerate(traj.layer_values(n)):
            for node, v in enumerate(vals):
                out.row(float(t), args.i_min + j, node, float(v))
    return EXIT_OK


def cmd_reversal(args, out: Output) -> int:
    rep = dynamics.reversal_demo(k=args.k, a=args.a, t_end=args.t_end, dt=args.dt)
    out.row("t_start", "t_end", "drift", "phase")
    for w in rep.windows:
        out.row(*w)
    out.row("sequence", *rep.sequence)
    return EXIT_OK


def cmd_check_sub(args, out: Output) -> int:
    system = _system(args)
    if args.family == "steep":
        sub = comparison.build_steep(system, args.A, args.xi0, args.xi1)
    else:
        sub = comparison.build_wide(system, args.l, 0.99 if args.A is None else args.A)
    rep = comparison.verify_certificate(system, sub.cbar, sub, n_points=args.n)
    out.row("xi", "I_value")
    for x, v in zip(rep.residual.xi, rep.residual.values):
        out.row(float(x), float(v))
    out.row("pass", rep.passed, "cbar", rep.cbar, "maxI", rep.max_I)
    return EXIT_OK


def cmd_chaos(args, out: Output) -> int:
    system = _system(args)
    if args.all_words is not None:
        if not 1 <= args.all_words <= 16:
            raise DomainError("all-words length must lie in [1, 16]")
        if not args.override and chaos.check_Hd(system) is None:
            raise chaos.NoCertificate("(Hd) does not hold at these parameters")
        orbits = chaos.word_sweep(system, args.all_words, args.pad, args.threads)
        out.row("word", "i", "s_i", "u_i")
        for o in orbits:
            w = "".join(map(str, o.word))
            for i, s, u in zip(o.index, o.symbols, o.values):
                out.row(w, int(i), int(s), float(u))
        return EXIT_OK
    if args.word is None:
        raise DomainError("give --word or --all-words")
    orbit = chaos.steady_state_from_word(system, chaos.parse_word(args.word), args.pad,
                                         args.offset, args.override)
    out.row("i", "s_i", "u_i")
    for i, s, u in zip(orbit.index, orbit.symbols, orbit.values):
        out.row(int(i), int(s), float(u))
    if not orbit.members_ok:
        print("warning: orbit violates the symbol membership pattern", file=sys.stderr)
    return EXIT_OK


def cmd_chaos_strips(args, out: Output) -> int:
    system = _system(args)
    cert = chaos.check_Hd(system)
    if cert is None:
        raise chaos.NoCertificate("(Hd) does not hold at these parameters")
    strips = chaos.build_strips(system, cert, n=args.n)
    out.row("curve", "u", "v")
    for name, (u, v) in strips.curves.items():
        for x, y in zip(u, v):
            out.row(name, float(x), float(y))
    return EXIT_OK


# --- selftest ---------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def run_selftest(seed: int = 0, d_plus_fn: Optional[Callable[[float, float], float]] = None) -> list:
    """Fast consistency checks. ``d_plus_fn(a, k)`` replaces the closed form (for negative controls)."""
    rng = np.random.default_rng(seed)
    d_plus_fn = d_plus_fn or (lambda a, k: regions.d_plus(CUBIC, a, k))
    results = []

    worst = 0.0
    for _ in range(20):
        a, k = float(rng.uniform(0.05, 0.95)), float(rng.uniform(0.5, 5.0))
        worst = max(worst,
                    abs(regions.d_minus(CUBIC, a) - regions.d_minus(CUBIC, a, method="scan")),
                    abs(d_plus_fn(a, k) - regions.d_plus(CUBIC, a, k, method="scan")))
    results.append(CheckResult("cubic_closed_form", worst < 1e-6, f"max_err={worst:.2e}"))

    s = System.cubic(0.3, 0.1, 2.0)
    c1 = wave_solver.solve(s).c
    c2 = wave_solver.solve(s.reflected()).c
    err = abs(c1 + c2)
    results.append(CheckResult("symmetry", err < 1e-3, f"|c+c_refl|={err:.2e}"))

    grid = wave_solver.WaveGrid(10, 4)
    s = System.cubic(0.35, 0.2, 2.0)
    c, v = wave_solver.initial_guess(s, grid)
    v = v + 0.01 * rng.standard_normal(v.size)
    J = wave_solver.jacobian(s, grid, c, v).toarray()
    x = np.append(v, c)
    F = lambda y: wave_solver.residual(s, grid, y[-1], y[:-1])
    h = 1e-6
    fd = np.column_stack([(F(x + h * e) - F(x - h * e)) / (2 * h) for e in np.eye(x.size)])
    rel = float(np.abs(J - fd).max() / np.abs(J).max())
    results.append(CheckResult("jacobian_fd", rel < 1e-6, f"rel_err={rel:.2e}"))

    s = System.cubic(0.52, 0.014, 2.0)
    o = chaos.steady_state_from_word(s, (0, 1, 1, 0, 1))
    ok = o.converged and o.members_ok and chaos.orbit_shadowing_check(chaos.PlanarMap.of(s), o)
    results.append(CheckResult("chaos_word", ok, f"residual={o.residual_norm:.2e}"))
    return results


def cmd_selftest(args, out: Output) -> int:
    results = run_selftest(args.seed)
    out.row("check", "result", "detail")
    for r in results:
        out.row(r.name, "pass" if r.passed else "fail", r.detail)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# --- parser -----------------------------------------------------------------------

GLOBAL_DEFAULTS = {"out": None, "config": None, "threads": os.cpu_count() or 1, "seed": 0, "quiet": False}


def _add_globals(p, suppress: bool):
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p.add_argument("--out", help="write CSV here instead of stdout", **kw)
    p.add_argument("--config", help="key=value file; explicit flags win", **kw)
    p.add_argument("--threads", type=int, help="worker threads for sweeps", **kw)
    p.add_argument("--seed", type=int, help="seed for sampled checks", **kw)
    p.add_argument("--quiet", action="store_true", help="suppress progress messages", **kw)


def _params(p, d=True, k_default=None):
    p.add_argument("--a", type=float, required=True)
    if d:
        p.add_argument("--d", type=float, required=True)
    if k_default is None:
        p.add_argument("--k", type=float, required=True)
    else:
        p.add_argument("--k", type=float, default=k_default)
    p.add_argument("--nonlinearity", default="cubic")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treewaves", description="Travelling fronts on k-ary trees.")
    _add_globals(parser, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _add_globals(p, suppress=True)
        p.set_defaults(func=fn)
        return p

    p = add("speed", cmd_speed, "wave speed at one parameter point")
    _params(p)
    p.add_argument("--L", type=float, default=20.0)
    p.add_argument("--i0", type=int, default=8)

    p = add("scan", cmd_scan, "speeds on an (a, d) grid")
    for n in ("a-min", "a-max", "d-min", "d-max"):
        p.add_argument(f"--{n}", type=float, required=True)
    p.add_argument("--a-steps", type=int, required=True)
    p.add_argument("--d-steps", type=int, required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--nonlinearity", default="cubic")
    p.add_argument("--L", type=float, default=20.0)
    p.add_argument("--i0", type=int, default=8)

    p = add("regions", cmd_regions, "cubic boundary curves over a")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--n", type=int, default=201)
    p.add_argument("--a-min", type=float, default=0.005)
    p.add_argument("--a-max", type=float, default=0.995)

    p = add("classify", cmd_classify, "which theorem decides the speed sign")
    _params(p)

    for name, fn, text in (("simulate", cmd_simulate, "lattice integration from step data"),
                           ("simulate-tree", cmd_simulate_tree, "layered tree integration from step data")):
        p = add(name, fn, text)
        _params(p, d=False)
        p.add_argument("--schedule", required=True, help="const:<d> or reversal")
        p.add_argument("--t-end", type=float, required=True)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--sample-dt", type=float, default=1.0)
        if name == "simulate":
            p.add_argument("--lo", type=int, default=-30)
            p.add_argument("--hi", type=int, default=30)
        else:
            p.add_argument("--i-min", type=int, default=-4)
            p.add_argument("--i-max", type=int, default=4)

    p = add("reversal", cmd_reversal, "propagation reversal under growing diffusion")
    p.add_argument("--a", type=float, default=0.72)
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--t-end", type=float, default=460.0)
    p.add_argument("--dt", type=float, default=None)

    p = add("check-sub", cmd_check_sub, "sub-solution certificate on a grid")
    p.add_argument("--family", choices=("steep", "wide"), required=True)
    _params(p)
    p.add_argument("--A", type=float, default=None)
    p.add_argument("--l", type=float, default=None)
    p.add_argument("--xi0", type=float, default=-0.45)
    p.add_argument("--xi1", type=float, default=0.45)
    p.add_argument("--n", type=int, default=comparison.MIN_POINTS)

    p = add("chaos", cmd_chaos, "steady state realising a 0/1 word")
    _params(p)
    p.add_argument("--word", default=None)
    p.add_argument("--all-words", type=int, default=None, help="sweep every word of this length")
    p.add_argument("--pad", type=int, default=chaos.DEFAULT_PAD)
    p.add_argument("--offset", type=float, default=chaos.GUESS_OFFSET)
    p.add_argument("--override", action="store_true", help="skip the (Hd) precondition")

    p = add("chaos-strips", cmd_chaos_strips, "sampled strip boundary curves")
    _params(p)
    p.add_argument("--n", type=int, default=401)

    add("selftest", cmd_selftest, "fast consistency checks")
    return parser


def load_config(path: str) -> dict:
    """Parse a key=value file. Blank lines and # comments are skipped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DomainError(f"{path}:{n}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def _apply_config(parser, argv):
    """Install config values as subcommand defaults so explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    path = pre.parse_known_args(argv)[0].config
    if not path:
        return
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    if command is None:
        return
    sub = choices[command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in load_config(path).items():
        if key not in known or key in ("help", "config"):
            raise DomainError(f"unknown config key {key!r} for {command}")
        act = known[key]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes")
        else:
            defaults[key] = act.type(raw) if act.type else raw
        act.required = False
    sub.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (DomainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for key, val in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, val)
    if args.threads < 1:
        print("error: threads must be positive", file=sys.stderr)
        return EXIT_INVALID
    out = Output(args.out)
    t0 = time.perf_counter()
    try:
        code = args.func(args, out)
    except (wave_solver.ConvergenceError, chaos.OrbitConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        out.close()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if not args.quiet:
        print(f"{args.command}: done in {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
