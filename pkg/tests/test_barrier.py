import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ARM_OBSTACLE, POLE_BAND
from kincbf.barrier import (
    ClassKappa,
    EnergyBarrier,
    UnderactuatedBarrier,
    barrier_catalog,
    energy_h_D,
    hdot_D,
    membership,
    underactuated_h_hat,
)
from kincbf.errors import BarrierParameterError, DomainError
from kincbf.models import State, forward_dynamics, make_model
from kincbf.sim import rk4_step

angle = st.floats(-math.pi, math.pi)
rate = st.floats(-3.0, 3.0)


def test_sphere_value_and_gradient(arm):
    kin = barrier_catalog(ARM_OBSTACLE, arm)
    # tip at (2, 0): offset (0.8, -0.6) from the center
    assert kin.value([0.0, 0.0]) == pytest.approx(1.0 - 0.35**2)
    np.testing.assert_allclose(kin.jacobian([0.0, 0.0]), 2 * np.array([0.8, -0.6]) @ [[0, 0], [2, 1]])


@pytest.mark.parametrize("desc", [
    ARM_OBSTACLE,
    {"type": "angle_box", "width": 0.5, "center": 0.2, "index": 0},
    {"type": "position_box", "limit": 1.5, "index": 1},
])
def test_gradient_and_hessian_match_finite_differences(arm, desc):
    kin = barrier_catalog(desc, arm)
    q = np.array([0.3, 0.9])
    fd = np.array([(kin.value(q + 1e-6 * e) - kin.value(q - 1e-6 * e)) / 2e-6 for e in np.eye(2)])
    np.testing.assert_allclose(kin.jacobian(q), fd, atol=1e-7)
    fdH = np.stack([(kin.jacobian(q + 1e-6 * e) - kin.jacobian(q - 1e-6 * e)) / 2e-6 for e in np.eye(2)])
    np.testing.assert_allclose(kin.hessian(q), fdH, atol=1e-6)


def test_angle_band_and_box_share_their_safe_set(cartpole):
    band = barrier_catalog(POLE_BAND, cartpole)
    box = barrier_catalog({**POLE_BAND, "type": "angle_box"}, cartpole)
    for th in np.linspace(math.pi - 1, math.pi + 1, 101):
        q = np.array([0.0, th])
        assert (band.value(q) >= 0) == (box.value(q) >= 0)
    assert abs(band.jacobian([0.0, math.pi + 1e-9])[1]) == 1.0


def test_energy_barrier_at_rest_scales_h(arm_energy):
    q = np.array([0.2, 0.4])
    assert energy_h_D(arm_energy, State(q, [0.0, 0.0])) == pytest.approx(2.0 * arm_energy.kin.value(q))


@given(q0=angle, q1=angle, v0=rate, v1=rate)
def test_energy_safe_set_inside_kinematic_safe_set(q0, q1, v0, v1):
    arm = make_model("two_link_arm")
    b = EnergyBarrier(arm, barrier_catalog(ARM_OBSTACLE, arm), 3.0)
    m = membership(b, State([q0, q1], [v0, v1]))
    assert m.in_S or not m.in_S_D


@given(q0=angle, q1=angle, v0=rate, v1=rate, a1=st.floats(0.1, 10), a2=st.floats(0.1, 10))
def test_energy_safe_set_grows_with_alpha_e(q0, q1, v0, v1, a1, a2):
    arm = make_model("two_link_arm")
    kin = barrier_catalog(ARM_OBSTACLE, arm)
    lo, hi = sorted((a1, a2))
    s = State([q0, q1], [v0, v1])
    if membership(EnergyBarrier(arm, kin, lo), s).in_S_D:
        assert membership(EnergyBarrier(arm, kin, hi), s).in_S_D


def test_interior_points_captured_for_large_alpha_e(arm):
    kin = barrier_catalog(ARM_OBSTACLE, arm)
    s = State([0.0, 0.0], [3.0, -2.0])
    assert not membership(EnergyBarrier(arm, kin, 1.0), s).in_S_D
    assert membership(EnergyBarrier(arm, kin, 100.0), s).in_S_D


@pytest.mark.parametrize("mid,desc", [("two_link_arm", ARM_OBSTACLE), ("double_integrator", {"type": "position_box", "limit": 2.0})])
def test_hdot_D_matches_finite_difference_along_trajectory(mid, desc):
    model = make_model(mid)
    b = EnergyBarrier(model, barrier_catalog(desc, model), 1.5)
    rng = np.random.default_rng(4)
    for _ in range(20):
        s = State(rng.uniform(-1, 1, model.k), rng.uniform(-2, 2, model.k))
        u = rng.uniform(-10, 10, model.m)
        dt = 1e-5
        s1 = rk4_step(model, s, u, dt)
        h0, h1, h2 = energy_h_D(b, s), energy_h_D(b, s1), energy_h_D(b, rk4_step(model, s1, u, dt))
        fd = (-3 * h0 + 4 * h1 - h2) / (2 * dt)
        assert hdot_D(b, s, u) == pytest.approx(fd, rel=1e-5, abs=1e-5)


def test_hdot_D_batches_inputs(arm_energy):
    s = State([0.2, 0.3], [0.5, -1.0])
    U = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, -1.0]])
    batch = hdot_D(arm_energy, s, U)
    np.testing.assert_allclose(batch, [hdot_D(arm_energy, s, U[:, j]) for j in range(3)])


def test_hdot_D_independent_of_coriolis(arm):
    """Only D, G, B enter: qdd computed with the full model gives the same rate."""
    b = EnergyBarrier(arm, barrier_catalog(ARM_OBSTACLE, arm), 1.0)
    s = State([0.7, -0.4], [1.3, 2.1])
    u = np.array([3.0, -5.0])
    qdd = forward_dynamics(arm, s, u)
    D = arm.mass_matrix(s.q)
    Ddot = arm.mass_matrix_dot(s.q, s.qdot)
    full = -s.qdot @ D @ qdd - 0.5 * s.qdot @ Ddot @ s.qdot + b.alpha_e * b.kin.jacobian(s.q) @ s.qdot
    assert hdot_D(b, s, u) == pytest.approx(full, rel=1e-10)


def test_underactuated_h_hat_uses_reduced_inertia(pole_barrier):
    q, qd = np.array([0.1, math.pi + 0.2]), np.array([0.4, -0.7])
    D = pole_barrier.model.mass_matrix(q)
    J = pole_barrier.kin.jacobian(q)
    D_h = 1.0 / float(J @ np.linalg.solve(D, J))
    hd = float(J @ qd)
    expected = -0.5 * D_h * hd * hd + pole_barrier.alpha_e * pole_barrier.kin.value(q)
    assert underactuated_h_hat(pole_barrier, State(q, qd)) == pytest.approx(expected, rel=1e-12)
    # no motion across the boundary: only the scaled kinematic value remains
    assert underactuated_h_hat(pole_barrier, State(q, [0.4, 0.0])) == pytest.approx(5.0 * pole_barrier.kin.value(q))


def test_class_kappa():
    assert ClassKappa("linear", 2.0)(-1.5) == -3.0
    assert ClassKappa("cubic", 2.0)(-1.5) == pytest.approx(-6.75)
    with pytest.raises(BarrierParameterError):
        ClassKappa("quadratic")
    with pytest.raises(BarrierParameterError):
        ClassKappa("linear", 0.0)


def test_barrier_parameter_errors(arm):
    with pytest.raises(BarrierParameterError):
        barrier_catalog({"type": "sphere_obstacle", "center": [0, 0], "d": -1.0}, arm)
    with pytest.raises(BarrierParameterError):
        barrier_catalog({"type": "sphere_obstacle", "center": [0, 0, 0], "d": 1.0}, arm)
    with pytest.raises(BarrierParameterError):
        barrier_catalog({"type": "angle_box", "width": 0.0}, arm)
    with pytest.raises(BarrierParameterError):
        barrier_catalog({"type": "angle_band", "width": 0.3, "index": 5}, arm)
    with pytest.raises(BarrierParameterError):
        barrier_catalog({"type": "torus"}, arm)
    with pytest.raises(BarrierParameterError):
        EnergyBarrier(arm, barrier_catalog(ARM_OBSTACLE, arm), alpha_e=0.0)


def test_state_dimension_checked(arm_energy):
    with pytest.raises(DomainError):
        energy_h_D(arm_energy, State([0.0], [0.0]))
    with pytest.raises(DomainError):
        hdot_D(arm_energy, State([0.0, 0.0], [0.0, 0.0]), [1.0, 2.0, 3.0])


def test_underactuated_default_coordinates(cartpole):
    b = UnderactuatedBarrier(cartpole, barrier_catalog(POLE_BAND, cartpole))
    w, J = b.w_map(np.array([0.7, 3.0]))
    np.testing.assert_allclose(w, [0.7])
    np.testing.assert_allclose(J, [[1.0, 0.0]])
