import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nldpg.mesh import make_lshape_mesh, make_square_mesh, refine_uniform_nvb

settings.register_profile(
    "nldpg", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("nldpg")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def square33():
    return refine_uniform_nvb(make_square_mesh())


@pytest.fixture(scope="session")
def lshape25():
    return make_lshape_mesh()


@pytest.fixture(scope="session")
def lshape97():
    return refine_uniform_nvb(make_lshape_mesh())
