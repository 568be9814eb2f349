import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kincbf.barrier import ClassKappa, EnergyBarrier, UnderactuatedBarrier, barrier_catalog
from kincbf.models import make_model

settings.register_profile(
    "kincbf", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("kincbf")

ARM_OBSTACLE = {"type": "sphere_obstacle", "center": [1.2, 0.6], "d": 0.35}
POLE_BAND = {"type": "angle_band", "width": float(np.pi / 6), "center": float(np.pi), "index": 1}


@pytest.fixture
def arm():
    return make_model("two_link_arm")


@pytest.fixture
def cartpole():
    return make_model("cartpole")


@pytest.fixture
def arm_energy(arm):
    return EnergyBarrier(arm, barrier_catalog(ARM_OBSTACLE, arm), alpha_e=2.0)


@pytest.fixture
def pole_barrier(cartpole):
    return UnderactuatedBarrier(cartpole, barrier_catalog(POLE_BAND, cartpole), alpha_e=5.0)


@pytest.fixture
def linear_kappa():
    return ClassKappa("linear", 1.0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
