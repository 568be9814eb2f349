import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kincbf.errors import DomainError
from kincbf.models import (
    State,
    StateBox,
    forward_dynamics,
    gravity_vector,
    make_model,
    mass_matrix,
    task_map,
)

angle = st.floats(-math.pi, math.pi)
rate = st.floats(-5.0, 5.0)
MODELS = ["double_integrator", "two_link_arm", "cartpole"]


def _fd_grad(f, q, step=1e-6):
    return np.array([(f(q + step * e) - f(q - step * e)) / (2 * step) for e in np.eye(q.size)])


def _mass_rate(model, q, qd, step=1e-6):
    return (model.mass_matrix(q + step * qd) - model.mass_matrix(q - step * qd)) / (2 * step)


def test_arm_mass_matrix_stretched_out():
    # point masses at 1 m and 2 m from the base, both links along x
    D = mass_matrix(make_model("two_link_arm"), [0.0, 0.0])
    np.testing.assert_allclose(D, [[5.0, 2.0], [2.0, 1.0]])


def test_arm_tip_position_and_jacobian():
    x, J = task_map(make_model("two_link_arm"), [0.0, 0.0])
    np.testing.assert_allclose(x, [2.0, 0.0])
    np.testing.assert_allclose(J, [[0.0, 0.0], [2.0, 1.0]])
    x, _ = task_map(make_model("two_link_arm"), [math.pi / 2, -math.pi / 2])
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-15)


def test_arm_gravity_horizontal():
    G = gravity_vector(make_model("two_link_arm"), [0.0, 0.0])
    np.testing.assert_allclose(G, [3 * 9.81, 9.81])


def test_cartpole_upright_terms():
    cp = make_model("cartpole")
    q = np.array([0.3, math.pi])
    np.testing.assert_allclose(cp.mass_matrix(q), [[1.2, -0.1], [-0.1, 0.05]])
    np.testing.assert_allclose(cp.gravity_vector(q), [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(cp.actuation_matrix(q), [[1.0], [0.0]])


def test_double_integrator_dynamics():
    di = make_model("double_integrator", mass=2.0)
    np.testing.assert_allclose(forward_dynamics(di, State([0.1], [3.0]), [4.0]), [2.0])


@pytest.mark.parametrize("mid", ["two_link_arm", "cartpole"])
@given(q0=angle, q1=angle)
def test_gravity_is_potential_gradient(mid, q0, q1):
    model = make_model(mid)
    q = np.array([q0, q1])
    np.testing.assert_allclose(model.gravity_vector(q), _fd_grad(model.potential_energy, q), atol=1e-6)


@pytest.mark.parametrize("mid", MODELS)
@given(data=st.data())
def test_skew_symmetry(mid, data):
    model = make_model(mid)
    q = np.array(data.draw(st.lists(angle, min_size=model.k, max_size=model.k)))
    qd = np.array(data.draw(st.lists(rate, min_size=model.k, max_size=model.k)))
    N = _mass_rate(model, q, qd) - 2 * model.coriolis_matrix(q, qd)
    assert np.abs(N + N.T).max() <= 1e-6


@pytest.mark.parametrize("mid", MODELS)
@given(data=st.data())
def test_mass_matrix_symmetric_positive_definite(mid, data):
    model = make_model(mid)
    q = np.array(data.draw(st.lists(angle, min_size=model.k, max_size=model.k)))
    D = model.mass_matrix(q)
    np.testing.assert_allclose(D, D.T)
    assert np.linalg.eigvalsh(D).min() > 0


@pytest.mark.parametrize("mid", ["two_link_arm", "cartpole"])
@given(data=st.data())
def test_power_balance(mid, data):
    """d/dt (kinetic + potential) equals the power delivered by the inputs."""
    model = make_model(mid)
    q = np.array(data.draw(st.lists(angle, min_size=2, max_size=2)))
    qd = np.array(data.draw(st.lists(rate, min_size=2, max_size=2)))
    u = np.array(data.draw(st.lists(st.floats(-20, 20), min_size=model.m, max_size=model.m)))
    qdd = forward_dynamics(model, State(q, qd), u)
    rate_KE = float(qd @ model.mass_matrix(q) @ qdd + 0.5 * qd @ _mass_rate(model, q, qd) @ qd)
    rate_PE = float(model.gravity_vector(q) @ qd)
    power = float(qd @ model.actuation_matrix(q) @ u)
    assert rate_KE + rate_PE == pytest.approx(power, abs=1e-5 * (1 + abs(power)))


def test_task_jacobian_matches_finite_differences():
    arm = make_model("two_link_arm")
    q = np.array([0.4, 1.1])
    _, J = arm.task_map(q)
    fd = np.stack([_fd_grad(lambda qq, i=i: arm.task_map(qq)[0][i], q) for i in range(2)])
    np.testing.assert_allclose(J, fd, atol=1e-8)
    H = arm.task_hessian(q)
    fdH = np.stack([np.stack([(arm.task_map(q + 1e-6 * e)[1][i] - arm.task_map(q - 1e-6 * e)[1][i]) / 2e-6
                              for e in np.eye(2)]) for i in range(2)])
    np.testing.assert_allclose(H, fdH, atol=1e-7)


def test_without_gravity():
    arm = make_model("two_link_arm").without_gravity()
    assert not arm.gravity_vector(np.array([0.3, 0.2])).any()
    assert arm.potential_energy(np.array([0.3, 0.2])) == 0.0


def test_domain_errors():
    arm = make_model("two_link_arm")
    with pytest.raises(DomainError):
        mass_matrix(arm, [0.0])
    with pytest.raises(DomainError):
        mass_matrix(arm, [0.0, float("nan")])
    with pytest.raises(DomainError):
        State([0.0, 1.0], [0.0])
    with pytest.raises(DomainError):
        State([0.0], [float("inf")])
    with pytest.raises(DomainError):
        make_model("quadrotor")
    with pytest.raises(DomainError):
        make_model("two_link_arm", m1=-1.0)
    with pytest.raises(DomainError):
        make_model("cartpole", wheels=4)
    with pytest.raises(DomainError):
        StateBox((1.0,), (0.0,), (0.0,), (1.0,))


def test_params_round_trip():
    cp = make_model("cartpole", m_p=0.3)
    assert make_model("cartpole", **cp.params) == cp
    assert cp.with_params(l=1.0).l == 1.0
