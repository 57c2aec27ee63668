"""End-to-end scattering problem: mesh, tree, H-matrix, preconditioners, GMRES."""
from __future__ import annotations

from dataclasses import dataclass, asdict
import math
import time

import numpy as np

from .hmatrix import build_hmatrix, build_tree
from .kernel import EfieKernel, PhysicsParams, PlaneWave, excitation
from .krylov import GmresConfig, gmres
from .mesh import load_mesh, mesh_plate, mesh_sphere
from .precond import PrecondConfig, build_preconditioner, dissection_points, factorize

__all__ = ["GeometrySpec", "Problem", "iteration_experiment", "PRECOND_ALIASES"]

PRECOND_ALIASES = {
    "none": None,
    "tri": "triTridiagonal",
    "tridiagonal": "triTridiagonal",
    "triTridiagonal": "triTridiagonal",
    "block": "blockTridiagonal",
    "block-tridiagonal": "blockTridiagonal",
    "blockTridiagonal": "blockTridiagonal",
}


@dataclass(frozen=True)
class GeometrySpec:
    """Test geometry in wavelengths.

    ``kind`` is ``plate`` (square of side ``size``), ``sphere`` (radius
    ``size``) or ``file`` (``path``, coordinates in metres).  ``h`` is the
    target edge length in wavelengths.
    """

    kind: str = "sphere"
    size: float = 1.0
    h: float = 0.1
    path: str | None = None

    def build(self, wavelength=1.0):
        if self.kind == "plate":
            s = self.size * wavelength
            return mesh_plate(s, s, self.h * wavelength)
        if self.kind == "sphere":
            return mesh_sphere(self.size * wavelength, self.h * wavelength)
        if self.kind == "file":
            if not self.path:
                raise ValueError("file geometry needs a path")
            return load_mesh(self.path)
        raise ValueError(f"unknown geometry kind {self.kind!r}")


class Problem:
    """Scattering problem on one mesh at one frequency.

    The mesh is renumbered in cluster-tree leaf order at construction; all
    vectors and matrices use that numbering.  Heavy pieces (H-matrix,
    preconditioners) are built lazily and timed in :attr:`timings`.
    """

    def __init__(self, mesh, physics, leaf_size=30, depth=None, eta=1.0,
                 compression_tol=1e-3, backend=None):
        self.physics = physics
        self.leaf_size = leaf_size
        self.eta = eta
        self.compression_tol = compression_tol
        self.timings = {}
        t0 = time.perf_counter()
        self.tree = build_tree(mesh, leaf_size, depth)
        self.timings["tree"] = time.perf_counter() - t0
        self.mesh = self.tree.mesh
        self.kernel = EfieKernel(self.mesh, physics, backend=backend)
        self._hmatrix = None
        self._precond = {}

    @property
    def num_unknowns(self):
        return self.mesh.num_unknowns

    @property
    def hmatrix(self):
        if self._hmatrix is None:
            t0 = time.perf_counter()
            self._hmatrix = build_hmatrix(self.kernel, self.tree, self.eta,
                                          self.compression_tol)
            self.timings["hmatrix"] = time.perf_counter() - t0
        return self._hmatrix

    def excitation(self, wave=None):
        return excitation(self.mesh, self.physics, wave or PlaneWave())

    def preconditioner(self, variant, entry_mode=None):
        """``(P, factor)`` for a variant name or alias (cached)."""
        name = PRECOND_ALIASES.get(variant, variant)
        if name is None:
            return None, None
        config = PrecondConfig(name, entry_mode)
        key = (name, config.mode)
        if key not in self._precond:
            t0 = time.perf_counter()
            P = build_preconditioner(self.kernel, self.tree, config)
            t1 = time.perf_counter()
            F = factorize(P, config, dissection_points(self.mesh, config))
            t2 = time.perf_counter()
            self.timings[f"{name}.build"] = t1 - t0
            self.timings[f"{name}.factor"] = t2 - t1
            self._precond[key] = (P, F)
        return self._precond[key]

    def solve(self, wave=None, precond="none", config=None, entry_mode=None,
              operator=None):
        """GMRES solve with the H-matrix (or a given `operator`)."""
        b = self.excitation(wave)
        _, F = self.preconditioner(precond, entry_mode)
        A = self.hmatrix if operator is None else operator
        t0 = time.perf_counter()
        report = gmres(A, F, b, config or GmresConfig())
        self.timings[f"solve.{PRECOND_ALIASES.get(precond, precond)}"] = (
            time.perf_counter() - t0)
        return report


def iteration_experiment(geometry, frequency=None, variants=("none", "tri", "block"),
                         config=None, wave=None, problem=None, **problem_kw):
    """GMRES iteration counts without and with each preconditioner.

    `geometry` is a :class:`GeometrySpec` (sizes in wavelengths of
    `frequency`, default wavelength 1 m) or a ready :class:`Problem` via
    `problem`.  Returns ``{variant: GmresReport}``; non-convergence is
    visible in each report's ``converged`` flag.
    """
    if problem is None:
        physics = (PhysicsParams.from_wavelength(1.0) if frequency is None
                   else PhysicsParams(frequency))
        mesh = geometry.build(physics.wavelength)
        problem = Problem(mesh, physics, **problem_kw)
    return {v: problem.solve(wave, v, config) for v in variants}
