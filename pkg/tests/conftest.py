import numpy as np
import pytest

from desorb.geometry import BodySpec, Sphere, build_quadrature

N2_MASS = 4.65e-26  # kg
SPHERE_RADIUS = 75e-9  # m


@pytest.fixture(scope="session")
def sphere_body():
    return BodySpec(Sphere(SPHERE_RADIUS), mass=1e-18)


@pytest.fixture(scope="session")
def sphere_quad(sphere_body):
    """Default-resolution sphere surface (64 x 128 nodes)."""
    return build_quadrature(sphere_body, 64)


@pytest.fixture(scope="session")
def sphere_quad_coarse(sphere_body):
    """Cheap sphere surface for Monte Carlo and decoherence tests."""
    return build_quadrature(sphere_body, 16)


def rel_err(value, reference):
    ref = np.asarray(reference, dtype=float)
    scale = np.max(np.abs(ref))
    if scale == 0.0:
        return np.max(np.abs(np.asarray(value)))
    return np.max(np.abs(np.asarray(value) - ref)) / scale
