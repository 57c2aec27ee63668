"""Run configuration, manifests, the total-solve-time cost model and sweeps."""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, is_dataclass
import csv
import json
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from ._backend import BACKEND
from .kernel import PhysicsParams
from .krylov import GmresConfig
from .precond import (PrecondConfig, build_preconditioner, dissection_points, factorize,
                      memory_report)
from .solver import GeometrySpec, Problem, PRECOND_ALIASES

__all__ = [
    "THREADS_ENV",
    "CostModelInput",
    "cost_model",
    "speedup",
    "BenchRecord",
    "BenchSweepError",
    "RunConfig",
    "bench_sweep",
    "loglog_slope",
    "thread_limit",
    "write_bench_csv",
    "write_manifest",
]

THREADS_ENV = "EFIEPC_THREADS"


# ----------------------------------------------------------------------
# cost model
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class CostModelInput:
    """Components of the multi-RHS solve time (seconds, counts)."""

    t_pc: float
    n_itr: float
    n_rhs: float
    t_pcsol: float
    t_mmv: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise ValueError(f"{name} must be non-negative, got {value!r}")


def cost_model(inp):
    """``T_pc + N_itr * N_rhs * (T_pcsol + T_mmv)`` in seconds."""
    return inp.t_pc + inp.n_itr * inp.n_rhs * (inp.t_pcsol + inp.t_mmv)


def speedup(baseline, candidate):
    """Ratio of two cost-model totals (baseline over candidate)."""
    return cost_model(baseline) / cost_model(candidate)


# ----------------------------------------------------------------------
# run configuration and artifacts
# ----------------------------------------------------------------------
@dataclass
class RunConfig:
    """Everything needed to repeat one pipeline run."""

    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    frequency: float | None = None
    eta: float = 1.0
    leaf_size: int = 30
    compression_tol: float = 1e-3
    precond: str = "none"
    entry_mode: str | None = None
    gmres: GmresConfig = field(default_factory=GmresConfig)
    output_dir: str = "."
    seed: int = 0

    def __post_init__(self):
        if self.frequency is not None and not self.frequency > 0:
            raise ValueError("frequency must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.leaf_size < 1:
            raise ValueError("leaf_size must be positive")
        if not (0 < self.compression_tol < 1):
            raise ValueError("compression_tol must lie in (0, 1)")
        if self.precond not in PRECOND_ALIASES:
            raise ValueError(f"unknown preconditioner {self.precond!r}; "
                             f"choose from {sorted(PRECOND_ALIASES)}")
        g = self.geometry
        if g.kind == "file":
            if not g.path or not os.path.isfile(g.path):
                raise ValueError(f"mesh file not found: {g.path!r}")
            if self.frequency is None:
                raise ValueError("a mesh file needs an explicit frequency")
        elif not (g.size > 0 and g.h > 0):
            raise ValueError("geometry size and h must be positive")

    def physics(self):
        if self.frequency is None:
            return PhysicsParams.from_wavelength(1.0)
        return PhysicsParams(self.frequency)

    def problem(self):
        physics = self.physics()
        mesh = self.geometry.build(physics.wavelength)
        return Problem(mesh, physics, leaf_size=self.leaf_size, eta=self.eta,
                       compression_tol=self.compression_tol)

    def to_dict(self):
        return asdict(self)


def versions():
    import scipy
    return {
        "efiepc": __version__,
        "backend": BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def write_manifest(path, config=None, timings=None, results=None, seed=0):
    """JSON manifest with the config, seed, package versions and timings."""
    data = {
        "config": config if config is not None else {},
        "seed": seed,
        "versions": versions(),
        "timings": timings or {},
        "results": results or {},
        "argv": sys.argv,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, default=_json_default)
        fh.write("\n")
    return data


def _json_default(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return asdict(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


@contextmanager
def thread_limit(threads=None):
    """Cap BLAS/OpenMP threads (argument, else ``$EFIEPC_THREADS``)."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else None
    if threads is None:
        yield None
        return
    if threads < 1:
        raise ValueError("thread count must be positive")
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=threads):
        yield threads


# ----------------------------------------------------------------------
# scaling sweep
# ----------------------------------------------------------------------
@dataclass
class BenchRecord:
    n: int
    build_seconds: float
    factor_seconds: float
    apply_seconds: float
    nnz_before: int
    nnz_after: int
    peak_estimate_bytes: int


class BenchSweepError(RuntimeError):
    """A sweep step failed; ``records`` holds the completed steps."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or len(x) != len(y):
        raise ValueError("need at least two (x, y) pairs of equal length")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _best_time(fn, repeats, clock=time.perf_counter):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = clock()
        out = fn()
        best = min(best, clock() - t0)
    return best, out


def bench_sweep(geometries, variant="tri", entry_mode=None, physics=None,
                repeats=3, applies=20, csv_path=None, leaf_size=30):
    """Preconditioner build/factor/apply timings and storage over a sweep.

    Parameters
    ----------
    geometries : sequence of GeometrySpec
        At least four, in increasing size.
    variant : str
        Preconditioner name or alias.
    repeats : int
        Reported times are the best of this many runs.
    applies : int
        Each apply-time run averages this many solves. Apply runs use
        process CPU time (the triangular solves are single-threaded) and
        are interleaved across sizes.
    csv_path : path, optional
        ``bench.csv`` rewritten after every step, so partial results
        survive a failure.

    Returns
    -------
    records : list of BenchRecord
    slopes : dict
        Log-log slopes against ``N`` of nnz, build, factor and apply time.
    """
    geometries = list(geometries)
    if len(geometries) < 4:
        raise ValueError("a sweep needs at least four sizes")
    name = PRECOND_ALIASES.get(variant, variant)
    if name is None:
        raise ValueError("bench needs a preconditioner variant")
    physics = physics or PhysicsParams.from_wavelength(1.0)
    config = PrecondConfig(name, entry_mode)
    rng = np.random.default_rng(0)
    records, factors = [], []
    for g in geometries:
        try:
            problem = Problem(g.build(physics.wavelength), physics, leaf_size=leaf_size)
            n = problem.num_unknowns
            tb, P = _best_time(lambda: build_preconditioner(problem.kernel, problem.tree,
                                                            config), repeats)
            pts = dissection_points(problem.mesh, config)
            tf, F = _best_time(lambda: factorize(P, config, pts), repeats)
            b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            F.solve(b)
            ta, _ = _best_time(lambda: [F.solve(b) for _ in range(applies)], 1,
                                   time.process_time)
            factors.append((F, b))
            before = memory_report(P)["nnz"]
            after = memory_report(F)["nnz"]
            records.append(BenchRecord(n, tb, tf, ta / applies, before, after,
                                       16 * (before + after)))
        except Exception as exc:
            if csv_path:
                write_bench_csv(records, csv_path)
            raise BenchSweepError(f"sweep failed at {g}: {exc}", records) from exc
        if csv_path:
            write_bench_csv(records, csv_path)
    # apply timings interleaved across sizes so load drift hits every N alike
    for _ in range(repeats - 1):
        for r, (F, b) in zip(records, factors):
            ta, _ = _best_time(lambda: [F.solve(b) for _ in range(applies)], 1,
                                   time.process_time)
            r.apply_seconds = min(r.apply_seconds, ta / applies)
    if csv_path:
        write_bench_csv(records, csv_path)
    ns = [r.n for r in records]
    if len(set(ns)) != len(ns) or ns != sorted(ns):
        raise ValueError("sweep sizes must give strictly increasing N")
    slopes = {
        "nnz": loglog_slope(ns, [r.nnz_before for r in records]),
        "nnz_factor": loglog_slope(ns, [r.nnz_after for r in records]),
        "build": loglog_slope(ns, [r.build_seconds for r in records]),
        "factor": loglog_slope(ns, [r.factor_seconds for r in records]),
        "apply": loglog_slope(ns, [r.apply_seconds for r in records]),
    }
    return records, slopes


def write_bench_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "buildSeconds", "factorSeconds", "applySeconds",
                    "nnzBefore", "nnzAfter", "peakEstimateBytes"])
        for r in records:
            w.writerow([r.n, repr(r.build_seconds), repr(r.factor_seconds),
                        repr(r.apply_seconds), r.nnz_before, r.nnz_after,
                        r.peak_estimate_bytes])
