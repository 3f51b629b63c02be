import numpy as np
import pytest

from vpmm import constitutive as cm
from vpmm.discretization import FEModel, LoadSpec, Material, PointModel
from vpmm.system import ViscoplasticSystem


def random_glplus(rng, d=2, lo=-0.5, hi=0.5):
    """Product of two random rotations around a random positive diagonal."""
    def rot():
        Q, R = np.linalg.qr(rng.standard_normal((d, d)))
        Q = Q * np.sign(np.diag(R))
        if np.linalg.det(Q) < 0:
            Q[:, 0] *= -1
        return Q

    return rot() @ np.diag(np.exp(rng.uniform(lo, hi, d))) @ rot()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def example_material():
    # c1 = c2 = c3 = c4 = 1, the parameter set of the worked examples
    return Material.example()


@pytest.fixture
def balanced_material():
    # identity is stress-free: DK(I) = 0 and M(I) = 0
    return Material.example(c=(1.0, 2.0, 1.0, 12.0))


@pytest.fixture
def dissipation():
    return cm.DissipationParams(1.0, 10.0, 2.0)


@pytest.fixture
def point_system(balanced_material, dissipation):
    model = PointModel(balanced_material, LoadSpec("ramp", traction=((20.0, 0.0), (0.0, 0.0))))
    return ViscoplasticSystem(model, dissipation)


@pytest.fixture
def fem_system(balanced_material, dissipation):
    model = FEModel(balanced_material, LoadSpec("ramp", body_force=(20.0, 0.0)), n=3)
    return ViscoplasticSystem(model, dissipation)
