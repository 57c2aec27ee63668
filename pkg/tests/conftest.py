import numpy as np
import pytest

from efiepc.kernel import EfieKernel, PhysicsParams
from efiepc.mesh import icosphere, mesh_plate
from efiepc.solver import Problem


@pytest.fixture(scope="session")
def physics():
    return PhysicsParams.from_wavelength(1.0)


@pytest.fixture(scope="session")
def plate280(physics):
    """1 x 1 wavelength plate at h = 0.1 (280 unknowns), leaf-ordered."""
    return Problem(mesh_plate(1.0, 1.0, 0.1), physics)


@pytest.fixture(scope="session")
def plate280_dense(plate280):
    return plate280.kernel.dense()


@pytest.fixture(scope="session")
def sphere480(physics):
    """Level-2 icosphere of radius 0.3 wavelengths (480 unknowns)."""
    return Problem(icosphere(0.3, 2), physics)


@pytest.fixture(scope="session")
def sphere480_dense(sphere480):
    return sphere480.kernel.dense()


@pytest.fixture(scope="session")
def small_plate_kernel(physics):
    mesh = mesh_plate(0.4, 0.3, 0.1)
    return EfieKernel(mesh, physics)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
