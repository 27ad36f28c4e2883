"""Command-line entry point.

Exit status: 0 on success, 1 for bad input, 2 when an iterative solver does
not converge.  Results are CSV; diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
import warnings

import numpy as np

from . import kernels
from .io import (
    InputError,
    MeshSource,
    RunConfig,
    append_csv_row,
    format_csv,
    load_pqr,
    parse_config,
    parse_sphere,
    serialize_config,
    write_csv,
)
from .mesh import MeshError
from .model import BemError, Solute
from .solve import ConvergenceError, write_trace

SUMMARY_COLUMNS = ("model", "panels", "energy_kcal_mol", "iterations", "residual", "wall_seconds", "notes")
EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(self.prog, None, message)


def _add_inputs(p, require_pqr=True):
    p.add_argument("--pqr", required=require_pqr, help="solute charges and radii")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--mesh", help="surface mesh file (OFF or flat-tri)")
    src.add_argument("--sphere", help='inline sphere "a,subdiv,cx,cy,cz"')
    p.add_argument("--config", help="key = value run configuration")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="biobem", description="Boundary-element continuum electrostatics.")
    parser.add_argument("--threads", type=int, help="compiled-kernel threads (overrides BEM_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="one solve, summary CSV")
    p.add_argument("model", choices=("pcm", "nonlocal", "nlbc"))
    _add_inputs(p)
    p.add_argument("--out", help="summary CSV (default: standard output)")
    p.add_argument("--surface-out", help="per-panel CSV")
    p.add_argument("--trace", help="GMRES residual history CSV")

    p = sub.add_parser("sweep", help="one solve per parameter value")
    p.add_argument("--param", required=True, choices=("lambda_w", "eps_p", "q"))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--model", choices=("pcm", "nonlocal", "nlbc"),
                   help="default: nonlocal for lambda_w, nlbc for q, pcm otherwise")
    p.add_argument("--charge-index", type=int, default=0, help="charge varied by a q sweep")
    _add_inputs(p)
    p.add_argument("--out", help="CSV (default: standard output)")

    p = sub.add_parser("convergence", help="energy error against a sphere oracle under refinement")
    p.add_argument("model", choices=("pcm", "nonlocal"))
    p.add_argument("--subdivisions", required=True, help="comma-separated icosphere levels")
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--center", default="0,0,0")
    p.add_argument("--pqr", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--n-max", type=int, default=100, help="harmonic truncation of the oracle")
    p.add_argument("--out")

    p = sub.add_parser("oracle", help="closed-form or semi-analytic sphere energies")
    p.add_argument("kind", choices=("born", "kirkwood", "nonlocal-sphere"))
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--distance", type=float, default=0.0, help="charge distance from the center")
    p.add_argument("--eps-p", type=float, default=2.0)
    p.add_argument("--eps-w", type=float, default=80.0)
    p.add_argument("--eps-inf", type=float, default=1.8)
    p.add_argument("--lambda-w", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--n-max", type=int, default=100)
    p.add_argument("--out")
    return parser


# --------------------------------------------------------------------------
# shared plumbing
# --------------------------------------------------------------------------


def _run_config(args) -> RunConfig:
    text = ""
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise InputError(args.config, None, "config file does not exist")
        with open(args.config) as fh:
            text = fh.read()
    overrides = []
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise InputError("--set", None, f"expected KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides.append((key.strip(), value.strip()))
    if overrides:
        # later keys replace earlier ones, so strip overridden keys from the file text
        base = parse_config(text, args.config or "<config>")
        keys = {k for k, _ in overrides}
        kept = [ln for ln in serialize_config(base).splitlines() if ln.split("=", 1)[0].strip() not in keys]
        text = "\n".join(kept + [f"{k} = {v}" for k, v in overrides])
        return parse_config(text, "<config + --set>")
    return parse_config(text, args.config or "<config>")


def _mesh_source(args, cfg: RunConfig) -> MeshSource:
    if getattr(args, "mesh", None):
        if not os.path.exists(args.mesh):
            raise InputError(args.mesh, None, "mesh file does not exist")
        return MeshSource(path=args.mesh)
    if getattr(args, "sphere", None):
        try:
            return MeshSource(sphere=parse_sphere(args.sphere))
        except ValueError as exc:
            raise InputError("--sphere", None, str(exc)) from None
    if cfg.mesh.given:
        return cfg.mesh
    raise InputError("arguments", None, "no surface given (use --mesh, --sphere or mesh.* config keys)")


def _emit(rows, schema, path):
    if path:
        write_csv(rows, schema, path)
    else:
        sys.stdout.write(format_csv(rows, schema))


def _solver_kwargs(cfg: RunConfig):
    return dict(rule=cfg.rule, storage=cfg.storage)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _solve_one(model, solute, mesh, cfg: RunConfig, cache=None):
    """Run one model; returns ``(solution, energy, iterations, residual, wall, notes)``."""
    from .nlbc import solve_nlbc
    from .nonlocal_solver import solve_nonlocal
    from .pcm import solve_pcm

    cache = {} if cache is None else cache
    start = time.perf_counter()
    kw = _solver_kwargs(cfg)
    if model == "pcm":
        if "kprime" not in cache:
            from .operators import adjoint_double_layer

            cache["kprime"] = adjoint_double_layer(mesh, cfg.rule, cfg.storage, cfg.kprime_diagonal)
        sol = solve_pcm(solute, mesh, cfg.dielectrics, cfg.solver, kprime=cache["kprime"], **kw)
        d = sol.diagnostics
        return sol, sol.energy, d.iterations, d.residual, time.perf_counter() - start, ""
    if model == "nonlocal":
        if cfg.dielectrics.lambda_w > 0 and "laplace" not in cache:
            from .nonlocal_solver import laplace_pair

            cache["laplace"] = laplace_pair(mesh, cfg.rule, cfg.storage)
        sol = solve_nonlocal(solute, mesh, cfg.dielectrics, cfg.solver, laplace=cache.get("laplace"), **kw)
        d = sol.diagnostics
        return sol, sol.energy, d.iterations, d.residual, time.perf_counter() - start, "; ".join(d.notes)
    params = cfg.nlbc_params()
    if "kprime" not in cache:
        from .operators import adjoint_double_layer

        cache["kprime"] = adjoint_double_layer(mesh, cfg.rule, cfg.storage, cfg.kprime_diagonal)
    sol = solve_nlbc(solute, mesh, cfg.dielectrics, params, cfg.solver, kprime=cache["kprime"], **kw)
    d = sol.diagnostics
    note = f"picard_outer={sol.outer_iterations}"
    return sol, sol.energy, d.iterations, d.residual, time.perf_counter() - start, note


def _surface_rows(model, sol, solute, mesh, cfg):
    c = mesh.centroids
    ids = range(len(mesh))
    if model == "nonlocal":
        from .nonlocal_solver import reaction_surface_map

        phi = reaction_surface_map(sol, solute, mesh, cfg.rule).values
        return ("panel_id", "cx", "cy", "cz", "phi_reac"), [(i, *c[i], phi[i]) for i in ids]
    sigma = sol.sigma.values
    if model == "nlbc":
        e_n = sol.e_n.values
        return (("panel_id", "cx", "cy", "cz", "area", "sigma", "e_n"),
                [(i, *c[i], mesh.areas[i], sigma[i], e_n[i]) for i in ids])
    return ("panel_id", "cx", "cy", "cz", "area", "sigma"), [(i, *c[i], mesh.areas[i], sigma[i]) for i in ids]


def cmd_solve(args) -> int:
    cfg = _run_config(args)
    if args.model == "nlbc":
        cfg.nlbc_params()  # fail early when parameters are missing
    solute = load_pqr(args.pqr)
    mesh = _mesh_source(args, cfg).build()
    out = args.out or cfg.out
    trace = args.trace or cfg.trace
    surface_out = args.surface_out or cfg.surface_out
    try:
        sol, energy, iters, residual, wall, notes = _solve_one(args.model, solute, mesh, cfg)
    except ConvergenceError as exc:
        if trace and exc.history and isinstance(exc.history[0], tuple):
            write_trace(exc.history, trace)
        raise
    if notes:
        print(f"note: {notes}", file=sys.stderr)
    _emit([(args.model, len(mesh), energy, iters, residual, wall, notes)], SUMMARY_COLUMNS, out)
    if surface_out:
        schema, rows = _surface_rows(args.model, sol, solute, mesh, cfg)
        write_csv(rows, schema, surface_out)
    if trace:
        write_trace(sol.diagnostics.residual_history, trace)
    return EXIT_OK


def _parse_values(text) -> list[float]:
    try:
        values = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InputError("--values", None, f"not a comma-separated list of numbers: {text!r}") from None
    if not values or not all(math.isfinite(v) for v in values):
        raise InputError("--values", None, "need at least one finite value")
    return values


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    values = _parse_values(args.values)
    model = args.model or {"lambda_w": "nonlocal", "q": "nlbc"}.get(args.param, "pcm")
    if model == "nlbc":
        cfg.nlbc_params()
    solute = load_pqr(args.pqr)
    if args.param == "q" and not 0 <= args.charge_index < len(solute):
        raise InputError("--charge-index", None, f"solute has {len(solute)} charges")
    mesh = _mesh_source(args, cfg).build()
    out = args.out
    schema = ("value", "energy_kcal_mol")
    if out:
        write_csv([], schema, out)
    else:
        sys.stdout.write(format_csv([], schema))
    cache: dict = {}
    for v in values:
        run_cfg, run_solute = cfg, solute
        if args.param == "lambda_w":
            run_cfg = cfg.replace(dielectrics=cfg.dielectrics.replace(lambda_w=v))
        elif args.param == "eps_p":
            run_cfg = cfg.replace(dielectrics=cfg.dielectrics.replace(eps_p=v))
        else:
            charges = np.array(solute.charges)
            charges[args.charge_index] = v
            run_solute = solute.with_charges(charges)
        _, energy, *_ = _solve_one(model, run_solute, mesh, run_cfg, cache)
        if out:
            append_csv_row((v, energy), schema, out)
        else:
            sys.stdout.write(format_csv([(v, energy)], schema).split("\n", 1)[1])
            sys.stdout.flush()
    return EXIT_OK


def _oracle_energy(model, solute, radius, center, cfg: RunConfig, n_max):
    from .oracles import nonlocal_sphere_solve

    dielectrics = cfg.dielectrics if model == "nonlocal" else cfg.dielectrics.replace(lambda_w=0.0)
    return nonlocal_sphere_solve(solute, radius, dielectrics, n_max=n_max, center=center).energy


def convergence_table(energies, oracle, sizes):
    """Rows ``(panels, energy, error, order)``; order from successive error ratios against mesh size."""
    rows = []
    prev = None
    for (panels, h), e in zip(sizes, energies):
        err = abs(e - oracle) / abs(oracle) if oracle != 0 else abs(e)
        order = None
        if prev is not None and prev[1] > 0 and err > 0 and prev[0] != h:
            order = math.log(prev[1] / err) / math.log(prev[0] / h)
        rows.append((panels, e, err, order))
        prev = (h, err)
    return rows


def cmd_convergence(args) -> int:
    from .mesh import icosphere

    cfg = _run_config(args)
    try:
        levels = [int(s) for s in args.subdivisions.split(",") if s.strip()]
        center = tuple(float(c) for c in args.center.split(","))
    except ValueError:
        raise InputError("arguments", None, "subdivisions and center must be comma-separated numbers") from None
    if not levels or len(center) != 3:
        raise InputError("arguments", None, "need at least one subdivision level and a 3-component center")
    solute = load_pqr(args.pqr)
    try:
        oracle = _oracle_energy(args.model, solute, args.radius, center, cfg, args.n_max)
    except ValueError as exc:
        raise InputError(args.pqr, None, f"no sphere oracle for this solute: {exc}") from None
    energies, sizes = [], []
    for level in levels:
        mesh = icosphere(args.radius, level, center)
        _, energy, *_ = _solve_one(args.model, solute, mesh, cfg)
        energies.append(energy)
        sizes.append((len(mesh), float(mesh.diameters.mean())))
    rows = convergence_table(energies, oracle, sizes)
    _emit(rows, ("panels", "energy_kcal_mol", "error_vs_oracle", "observed_order"), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .model import DielectricModel
    from .oracles import born_energy, kirkwood_energy, nonlocal_sphere_solve

    try:
        if args.kind == "born":
            e = born_energy(args.q, args.radius, args.eps_p, args.eps_w)
            rows = [("born", args.q, args.radius, 0.0, e)]
        elif args.kind == "kirkwood":
            e = kirkwood_energy(args.q, args.radius, args.distance, args.eps_p, args.eps_w, args.tol)
            rows = [("kirkwood", args.q, args.radius, args.distance, e)]
        else:
            d = DielectricModel(args.eps_p, args.eps_w, args.eps_inf, args.lambda_w)
            e = nonlocal_sphere_solve(Solute.single(args.q, (0.0, 0.0, args.distance)), args.radius, d,
                                      n_max=args.n_max).energy
            rows = [("nonlocal-sphere", args.q, args.radius, args.distance, e)]
    except (ValueError, ArithmeticError) as exc:
        raise InputError("oracle", None, str(exc)) from None
    _emit(rows, ("oracle", "q", "radius", "distance", "energy_kcal_mol"), args.out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "convergence": cmd_convergence, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads is not None:
            if args.threads < 1:
                raise InputError("--threads", None, "must be >= 1")
            os.environ["BEM_THREADS"] = str(args.threads)
        kernels.set_num_threads()
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except ConvergenceError as exc:
        print(f"biobem: not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (InputError, MeshError, BemError, ValueError, OSError, MemoryError) as exc:
        print(f"biobem: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
