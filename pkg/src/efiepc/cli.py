"""Command-line front end: ``efiepc <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

__all__ = ["main", "build_parser"]


class CliError(Exception):
    """A user-facing failure; reported without a traceback."""


PLATE_H = 0.1
SPHERE_H = 1.0 / 12.0


def _add_geometry(p):
    g = p.add_argument_group("geometry")
    g.add_argument("--geometry", choices=["plate", "sphere", "file"], default="sphere")
    g.add_argument("--radius-wavelengths", type=float, default=1.0,
                   help="sphere radius in wavelengths (default 1)")
    g.add_argument("--side-wavelengths", type=float, default=1.0,
                   help="plate side in wavelengths (default 1)")
    g.add_argument("--h-wavelengths", type=float, default=None,
                   help="target edge length in wavelengths (default 1/10 plate, "
                        "1/12 sphere)")
    g.add_argument("--mesh", help="mesh file (Gmsh 2.2 ASCII or raw text)")
    g.add_argument("--frequency", type=float, help="frequency in Hz (default: 1 m wavelength)")


def _add_solver(p):
    s = p.add_argument_group("solver")
    s.add_argument("--precond", default="none",
                   help="none, tri[diagonal] or block[-tridiagonal] (default none)")
    s.add_argument("--entry-mode", choices=["partialPair", "fullEntry"])
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--restart", type=int, default=100)
    s.add_argument("--max-iters", type=int, default=5000)
    s.add_argument("--side", choices=["left", "right"], default="left")
    s.add_argument("--eta", type=float, default=1.0, help="admissibility parameter")
    s.add_argument("--leaf-size", type=int, default=30)
    s.add_argument("--compression-tol", type=float, default=1e-3)
    s.add_argument("--theta", type=float, default=0.0, help="incidence theta (deg)")
    s.add_argument("--phi", type=float, default=0.0, help="incidence phi (deg)")
    s.add_argument("--polarization", choices=["VV", "HH"], default="VV")


def _add_common(p):
    p.add_argument("--output", "-o", default=".", help="output directory (default .)")
    p.add_argument("--threads", type=int, help="cap BLAS threads (else $EFIEPC_THREADS)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="efiepc",
        description="EFIE method-of-moments solver with H-matrix compression "
                    "and computed sparse preconditioners.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("mesh-info", help="mesh statistics as JSON")
    _add_geometry(p)
    _add_common(p)

    p = sub.add_parser("assemble", help="build the H-matrix and a preconditioner")
    _add_geometry(p)
    _add_solver(p)
    _add_common(p)
    p.add_argument("--write-matrix", action="store_true",
                   help="also write the preconditioner as Matrix Market")

    p = sub.add_parser("solve", help="GMRES solve for one plane wave")
    _add_geometry(p)
    _add_solver(p)
    _add_common(p)

    p = sub.add_parser("rcs", help="solve and write bistatic RCS (Mie reference for spheres)")
    _add_geometry(p)
    _add_solver(p)
    _add_common(p)
    p.add_argument("--num-angles", type=int, default=181)
    p.add_argument("--obs-phi", type=float, default=0.0, help="observation phi (deg)")

    p = sub.add_parser("eigs", help="dense eigenvalues of Z or P^-1 Z")
    _add_geometry(p)
    _add_solver(p)
    _add_common(p)
    p.add_argument("--cap", type=int, default=6000, help="largest N for dense eigenvalues")

    p = sub.add_parser("bench", help="plate scaling sweep of a preconditioner")
    p.add_argument("--sizes", type=float, nargs="+", default=[1, 2, 3, 4],
                   help="plate sides in wavelengths (at least four)")
    p.add_argument("--h-wavelengths", type=float, default=0.1)
    p.add_argument("--precond", default="tri")
    p.add_argument("--entry-mode", choices=["partialPair", "fullEntry"])
    p.add_argument("--repeats", type=int, default=3)
    _add_common(p)

    p = sub.add_parser("cost", help="total solve time for many right-hand sides")
    for name, kind, text in [("tpc", float, "preconditioner setup (s)"),
                             ("nitr", float, "iterations per solve"),
                             ("nrhs", float, "right-hand sides"),
                             ("tpcsol", float, "preconditioner solve per iteration (s)"),
                             ("tmmv", float, "matrix-vector product per iteration (s)")]:
        p.add_argument(f"--{name}", type=kind, required=True, help=text)
        p.add_argument(f"--baseline-{name}", type=kind, help=argparse.SUPPRESS)
    p.add_argument("--hours", action="store_true", help="print hours instead of seconds")
    return parser


# ----------------------------------------------------------------------
def _geometry(args):
    from .solver import GeometrySpec
    if args.geometry == "file":
        if not args.mesh:
            raise CliError("--geometry file needs --mesh PATH")
        if not os.path.isfile(args.mesh):
            raise CliError(f"mesh file not found: {args.mesh}")
        return GeometrySpec("file", 1.0, 0.1, args.mesh)
    if args.geometry == "plate":
        h = args.h_wavelengths if args.h_wavelengths is not None else PLATE_H
        return GeometrySpec("plate", args.side_wavelengths, h)
    h = args.h_wavelengths if args.h_wavelengths is not None else SPHERE_H
    return GeometrySpec("sphere", args.radius_wavelengths, h)


def _run_config(args):
    from .harness import RunConfig
    from .krylov import GmresConfig
    try:
        return RunConfig(
            geometry=_geometry(args),
            frequency=args.frequency,
            eta=getattr(args, "eta", 1.0),
            leaf_size=getattr(args, "leaf_size", 30),
            compression_tol=getattr(args, "compression_tol", 1e-3),
            precond=getattr(args, "precond", "none"),
            entry_mode=getattr(args, "entry_mode", None),
            gmres=GmresConfig(getattr(args, "tol", 1e-6), getattr(args, "restart", 100),
                              getattr(args, "max_iters", 5000), getattr(args, "side", "left")),
            output_dir=args.output,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _wave(args):
    from .kernel import PlaneWave
    return PlaneWave(math.radians(args.theta), math.radians(args.phi), args.polarization)


def _outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _emit(obj):
    from .harness import _json_default
    print(json.dumps(obj, indent=2, default=_json_default))


def _solve(args, cfg, problem):
    wave = _wave(args)
    report = problem.solve(wave, cfg.precond, cfg.gmres, cfg.entry_mode)
    return wave, report


def cmd_mesh_info(args):
    from .harness import write_manifest
    from .kernel import PhysicsParams
    # file meshes are in metres; no frequency is needed to describe them
    geometry = _geometry(args)
    physics = (PhysicsParams(args.frequency) if args.frequency
               else PhysicsParams.from_wavelength(1.0))
    mesh = geometry.build(physics.wavelength)
    stats = mesh.stats()
    _emit(stats)
    write_manifest(os.path.join(_outdir(args.output), "manifest.json"),
                   {"geometry": geometry, "frequency": args.frequency},
                   results={"mesh": stats})
    return 0


def cmd_assemble(args):
    from .harness import write_manifest
    from .precond import memory_report, write_matrix_market, write_pattern_csv
    cfg = _run_config(args)
    out = _outdir(args.output)
    problem = cfg.problem()
    H = problem.hmatrix
    result = {"N": problem.num_unknowns, "hmatrix": H.report()}
    P, F = problem.preconditioner(cfg.precond, cfg.entry_mode)
    if P is not None:
        write_pattern_csv(P, os.path.join(out, "pattern.csv"))
        if args.write_matrix:
            write_matrix_market(P, os.path.join(out, "preconditioner.mtx"))
        result["preconditioner"] = {"pattern": memory_report(P), "factor": memory_report(F)}
    result["timings"] = problem.timings
    write_manifest(os.path.join(out, "manifest.json"), cfg.to_dict(), problem.timings, result)
    _emit(result)
    return 0


def cmd_solve(args):
    from .harness import write_manifest
    from .krylov import write_residuals_csv
    cfg = _run_config(args)
    out = _outdir(args.output)
    problem = cfg.problem()
    _, report = _solve(args, cfg, problem)
    result = {"N": problem.num_unknowns, **report.to_dict()}
    write_residuals_csv(report, os.path.join(out, "residuals.csv"))
    write_manifest(os.path.join(out, "manifest.json"), cfg.to_dict(), problem.timings, result)
    _emit(result)
    return 0 if report.converged else 2


def cmd_rcs(args):
    from .harness import write_manifest
    from .krylov import write_residuals_csv
    from .postproc import (MieConfig, bistatic_angles, mie_rcs, rcs_compare,
                           scattered_farfield, write_rcs_csv)
    cfg = _run_config(args)
    out = _outdir(args.output)
    problem = cfg.problem()
    wave, report = _solve(args, cfg, problem)
    angles = bistatic_angles(0.0, 180.0, args.num_angles, args.obs_phi)
    ff = scattered_farfield(problem.mesh, problem.physics, report.solution, angles,
                            args.polarization, wave.amplitude)
    write_rcs_csv(ff, os.path.join(out, "rcs.csv"))
    write_residuals_csv(report, os.path.join(out, "residuals.csv"))
    result = {"N": problem.num_unknowns, "gmres": report.to_dict()}
    if cfg.geometry.kind == "sphere" and args.theta == 0.0 and args.phi == 0.0:
        physics = problem.physics
        mie = MieConfig(cfg.geometry.size * physics.wavelength, physics.frequency)
        ref = mie_rcs(mie, angles, args.polarization)
        write_rcs_csv(ref, os.path.join(out, "rcs_mie.csv"))
        result["mie_compare"] = rcs_compare(ff, ref)
    write_manifest(os.path.join(out, "manifest.json"), cfg.to_dict(), problem.timings, result)
    _emit(result)
    return 0 if report.converged else 2


def cmd_eigs(args):
    from .harness import write_manifest
    from .krylov import dense_spectrum, mean_diagonal_normalized, write_spectrum_csv
    cfg = _run_config(args)
    out = _outdir(args.output)
    problem = cfg.problem()
    n = problem.num_unknowns
    if n > args.cap:
        raise CliError(f"N = {n} exceeds --cap {args.cap}; use a coarser mesh")
    Z = problem.kernel.dense()
    _, F = problem.preconditioner(cfg.precond, cfg.entry_mode)
    spec = dense_spectrum(Z, F, cap=args.cap) if F is not None else \
        dense_spectrum(mean_diagonal_normalized(Z), cap=args.cap)
    write_spectrum_csv(spec, os.path.join(out, "spectrum.csv"))
    result = {"N": n, "precond": cfg.precond, **spec.to_dict()}
    write_manifest(os.path.join(out, "manifest.json"), cfg.to_dict(), problem.timings, result)
    _emit(result)
    return 0


def cmd_bench(args):
    from .harness import BenchSweepError, bench_sweep, write_manifest
    from .solver import GeometrySpec
    out = _outdir(args.output)
    sizes = sorted(args.sizes)
    if len(sizes) < 4:
        raise CliError("--sizes needs at least four values")
    geoms = [GeometrySpec("plate", s, args.h_wavelengths) for s in sizes]
    csv_path = os.path.join(out, "bench.csv")
    try:
        records, slopes = bench_sweep(geoms, args.precond, args.entry_mode,
                                      repeats=args.repeats, csv_path=csv_path)
    except BenchSweepError as exc:
        raise CliError(f"{exc} ({len(exc.records)} records kept in {csv_path})") from exc
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    result = {"N": [r.n for r in records], "slopes": slopes}
    write_manifest(os.path.join(out, "manifest.json"), vars(args), results=result)
    _emit(result)
    return 0


def cmd_cost(args):
    from .harness import CostModelInput, cost_model, speedup
    try:
        inp = CostModelInput(args.tpc, args.nitr, args.nrhs, args.tpcsol, args.tmmv)
        base = [getattr(args, f"baseline_{k}") for k in ("tpc", "nitr", "nrhs", "tpcsol", "tmmv")]
        baseline = CostModelInput(*base) if all(v is not None for v in base) else None
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    total = cost_model(inp)
    print(total / 3600.0 if args.hours else total)
    if baseline is not None:
        print(f"speedup {speedup(baseline, inp)}")
    return 0


COMMANDS = {
    "mesh-info": cmd_mesh_info,
    "assemble": cmd_assemble,
    "solve": cmd_solve,
    "rcs": cmd_rcs,
    "eigs": cmd_eigs,
    "bench": cmd_bench,
    "cost": cmd_cost,
}


def main(argv=None):
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    from .harness import thread_limit
    from .mesh import MeshError
    try:
        with thread_limit(getattr(args, "threads", None)):
            return COMMANDS[args.command](args)
    except (CliError, MeshError, OSError) as exc:
        print(f"efiepc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"efiepc {args.command}: invalid input: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
