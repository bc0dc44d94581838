"""Command line front end: ``algstab {mesh,solve,convergence,check} [flags]``.

Every flag may also be given in a ``--config`` file of ``key = value`` lines
(keys are flag names without the leading dashes); explicit flags win.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .assembly import assemble, interpolate
from .mesh import GridSpec, MeshError, build_grid, write_mesh
from .problems import catalog
from .solver import SolverConfig, SolverError, solve
from .stabilizers import METHODS, StabilizerKind
from .vtk import write_vtk

log = logging.getLogger("algstab")

SUITES = ("matrix-props", "a2", "dmp", "linearity", "fixtures")


def _mu(value: str):
    if value == "patch":
        return value
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--mu expects 'patch' or a number, got {value!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("--mu must be positive")
    return v


def _ne_list(value: str):
    try:
        return [int(v) for v in value.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ne list {value!r}") from None


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _common(p: argparse.ArgumentParser, ne_list: bool = False):
    p.add_argument("--config", help="file of 'key = value' lines mirroring the flags")
    p.add_argument("--example", type=int, default=1, choices=range(1, 6))
    p.add_argument("--eps", type=float, default=None, help="diffusion coefficient (default 1e-8)")
    p.add_argument("--grid", type=int, default=1, choices=(1, 4, 5))
    if ne_list:
        p.add_argument("--ne", type=_ne_list, default=[16, 32, 64],
                       help="comma separated, each value twice the previous one")
    else:
        p.add_argument("--ne", type=int, default=16)
    p.add_argument("--shift", type=float, default=0.1, help="Grid 5 node shift as a fraction of h")
    p.add_argument("--method", default="kuzmin", choices=METHODS)
    p.add_argument("--weights", default="matrix", choices=("matrix", "unit"))
    p.add_argument("--mu", type=_mu, default="patch")
    p.add_argument("--pvariant", default="standard", choices=("standard", "bjk-p"))
    p.add_argument("--tol", type=float, default=1e-10, help="relative residual tolerance")
    p.add_argument("--max-iter", type=int, default=50_000)
    p.add_argument("--scheme", default="auto", choices=("auto", "matrix", "rhs"))
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="algstab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="write a structured mesh")
    _common(p)

    p = sub.add_parser("solve", help="solve one configuration")
    _common(p)

    p = sub.add_parser("convergence", help="errors and orders over a sequence of meshes")
    _common(p, ne_list=True)
    p.add_argument("--coarse", action="store_true",
                   help="also solve on ne/2 to fill the orders of the first row")
    p.add_argument("--sigma0", type=float, default=None,
                   help="weight of the L2 term in the solution-dependent norm")

    p = sub.add_parser("check", help="run a property suite")
    p.add_argument("suite", choices=SUITES)
    _common(p)
    p.add_argument("--fixture", default="all", choices=analysis.FIXTURES + ("all",))
    p.add_argument("--trials", type=int, default=100)
    return ap


def parse_args(argv=None) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, raw in cfg.items():
            if key not in known or key in ("config", "help"):
                ap.error(f"unknown config key {key!r}")
            action = known[key]
            if action.nargs == 0:
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
                continue
            value = action.type(raw) if action.type else raw
            if action.choices is not None and value not in action.choices:
                ap.error(f"config key {key!r}: invalid value {raw!r}")
            defaults[key] = value
        sub.set_defaults(**defaults)
        args = ap.parse_args(argv)
    return args


def _grid(args, ne=None) -> GridSpec:
    return GridSpec(args.grid, args.ne if ne is None else ne, args.shift)


def _kind(args) -> StabilizerKind:
    return StabilizerKind(args.method, mu=args.mu, weights=args.weights, pvariant=args.pvariant)


def _solver_cfg(args) -> SolverConfig:
    return SolverConfig(tol_rel=args.tol, max_iter=args.max_iter, scheme=args.scheme)


def cmd_mesh(args) -> int:
    mesh = build_grid(_grid(args))
    out = args.out or f"grid{args.grid}_ne{args.ne}.mesh"
    write_mesh(mesh, out)
    print(f"wrote {out}: {mesh.n_nodes} vertices ({mesh.n_interior} interior), "
          f"{mesh.n_triangles} triangles")
    return 0


def _run(args, ne=None):
    mesh = build_grid(_grid(args, ne))
    problem = catalog(args.example, args.eps)
    system = assemble(mesh, problem)
    U, report, stab = solve(system, _kind(args), _solver_cfg(args))
    return mesh, problem, system, U, report, stab


def cmd_solve(args) -> int:
    mesh, problem, system, U, report, stab = _run(args)
    summary = {"example": args.example, "epsilon": problem.epsilon, "grid": args.grid,
               "ne": args.ne, "method": args.method, **report.summary(),
               "u_min": float(U.min()), "u_max": float(U.max())}
    fields = {"u_h": U}
    if problem.has_exact:
        err = analysis.error_norms(mesh, U, problem, stab)
        diff = U - interpolate(mesh, problem.exact)
        fields["error"] = diff
        summary.update(l2=err.l2, h1semi=err.h1semi, norm_h=err.norm_h,
                       max_nodal_error=float(np.abs(diff).max()))
    out = Path(args.out or f"solution_ex{args.example}_grid{args.grid}_ne{args.ne}_{args.method}.vtk")
    write_vtk(out, mesh, fields, title=f"example {args.example} {args.method}")
    out.with_suffix(".json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0 if report.converged else 1


def cmd_convergence(args) -> int:
    nes = list(args.ne)
    for a, b in zip(nes, nes[1:]):
        if b != 2 * a:
            raise ValueError(f"ne values must double: {a} -> {b}")
    problem = catalog(args.example, args.eps)
    if not problem.has_exact:
        raise ValueError(f"example {args.example} has no exact solution")

    all_ok = True

    def errors(ne):
        nonlocal all_ok
        mesh, problem, _, U, report, stab = _run(args, ne)
        if not report.converged:
            all_ok = False
            log.warning("ne=%d did not converge (residual %.3e)", ne, report.residual)
        return analysis.error_norms(mesh, U, problem, stab, sigma0=args.sigma0)

    coarse = errors(nes[0] // 2) if args.coarse else None
    rows = [(ne, errors(ne)) for ne in nes]
    table = analysis.convergence_table(rows, coarse)
    text = table.to_csv()
    if args.csv:
        Path(args.csv).write_text(text)
    sys.stdout.write(text)
    return 0 if all_ok else 1


def _report(rows, args) -> None:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(("check", "status", "detail"))
    for r in rows:
        wr.writerow(r)
    if args.csv:
        Path(args.csv).write_text(buf.getvalue())
    for name, status, detail in rows:
        print(f"{status.upper():15s} {name}  {detail}")


def cmd_check(args) -> int:
    rows = []
    if args.suite == "fixtures":
        names = analysis.FIXTURES if args.fixture == "all" else (args.fixture,)
        eps = 1e-8 if args.eps is None else args.eps
        for name in names:
            r = analysis.run_fixture(name, args.ne, eps)
            rows.append((f"{name} ne={args.ne}", "pass" if r.passed else "fail",
                         f"measured={r.measured:.16g} expected={r.expected:.16g} error={r.error:.3e}"))
    else:
        mesh = build_grid(_grid(args))
        problem = catalog(args.example, args.eps)
        system = assemble(mesh, problem)
        kind = _kind(args)
        label = f"{args.method} grid{args.grid} ne={args.ne}"
        if args.suite == "matrix-props":
            v = analysis.check_matrix_properties(mesh, system.A, kind, args.trials, args.seed)
            rows.append((label, "pass" if v.passed else "fail",
                         " ".join(f"{k}={x:.3e}" for k, x in v.metrics.items())))
        elif args.suite == "linearity":
            v = analysis.check_linearity(mesh, system.A, kind, args.trials, args.seed)
            rows.append((label, "pass" if v.passed else "fail",
                         f"max|b|/max|a|={v.metrics['max_b_over_max_a']:.3e}"))
        elif args.suite == "a2":
            v = analysis.check_a2(mesh, system.A, kind, args.trials, args.seed)
            rows.append((label, v.status, f"trials={v.trials} worst={v.worst:.3e}"))
        else:  # dmp on the whole domain
            U, report, _ = solve(system, kind, _solver_cfg(args))
            region = analysis.dmp_region(mesh, np.arange(mesh.n_triangles), problem)
            v = analysis.check_dmp(mesh, U, region, problem.reaction_is_zero, slack=1e-10)
            detail = " ".join(f"{k}: value={a:.6g} bound={b:.6g}" for k, a, b in v.checks)
            rows.append((label, "pass" if v.passed else "fail",
                         f"{detail} violations={len(v.violations)} converged={report.converged}"))
    _report(rows, args)
    ok = all(status in ("pass", "not-applicable") for _, status, _ in rows)
    return 0 if ok else 1


COMMANDS = {"mesh": cmd_mesh, "solve": cmd_solve, "convergence": cmd_convergence, "check": cmd_check}


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (MeshError, ValueError, SolverError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
