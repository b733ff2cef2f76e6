import numpy as np
import pytest

from mechlift import pendulum_system, rigid_body_system


@pytest.fixture(scope="session")
def pendulum():
    return pendulum_system()


@pytest.fixture(scope="session")
def rigid_body():
    return rigid_body_system(np.diag([1.0, 2.0, 3.0]))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


# inertia wheel pendulum constants used to derive expected numbers in tests
PARAMS = {
    "L1": 0.063, "m1": 0.02, "m2": 0.3, "J1": 47e-6, "J2": 32e-6,
    "a": 9.81, "m0": 0.3832, "md": 49e-4,
}
