import math

import numpy as np
import pytest

from fraclat.lattice import LatticeSpec, build_mesh
from fraclat.material import MagnetizationModel, PairPotential, PenaltyChi

SQRT3 = math.sqrt(3.0)


@pytest.fixture(scope="session")
def mesh16():
    """Rotated lattice at moderate resolution, cleavage margins."""
    return build_mesh(LatticeSpec(phi=0.3, eps=1.0 / 16.0, l=1.0, eta=0.25))


@pytest.fixture(scope="session")
def mesh16_phi0():
    return build_mesh(LatticeSpec(phi=0.0, eps=1.0 / 16.0, l=1.0, eta=0.25))


@pytest.fixture(scope="session")
def mesh32():
    return build_mesh(LatticeSpec(phi=0.3, eps=1.0 / 32.0, l=1.0, eta=0.25))


@pytest.fixture(scope="session")
def pot():
    return PairPotential(alpha=1.3, beta=0.8)


@pytest.fixture(scope="session")
def pot_unit():
    return PairPotential(alpha=1.0, beta=1.0)


@pytest.fixture(scope="session")
def chi():
    return PenaltyChi()


@pytest.fixture(scope="session")
def magmodel():
    return MagnetizationModel(kappa=1.5, T=2.0)


def random_rotation(rng):
    th = rng.uniform(0.0, 2.0 * np.pi)
    c, s = np.cos(th), np.sin(th)
    return np.array([[c, -s], [s, c]])


def random_orthogonal(rng):
    R = random_rotation(rng)
    if rng.random() < 0.5:
        R = R @ np.diag([1.0, -1.0])
    return R
