"""EFIE method-of-moments scattering solver.

RWG discretisation of the electric field integral equation on triangulated
PEC surfaces, adaptive-cross-approximation H-matrix compression, sparse
triangle/leaf-block tridiagonal preconditioners and restarted GMRES.
"""
from ._backend import BACKEND
from .kernel import EfieKernel, PhysicsParams, PlaneWave, excitation
from .mesh import MeshError, SurfaceMesh, load_mesh, mesh_plate, mesh_sphere

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "EfieKernel", "PhysicsParams", "PlaneWave", "excitation",
    "MeshError", "SurfaceMesh", "load_mesh", "mesh_plate", "mesh_sphere",
]
