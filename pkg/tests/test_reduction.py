import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import POLE_BAND
from kincbf.barrier import barrier_catalog
from kincbf.errors import CouplingError, DiffeomorphismError
from kincbf.models import State, forward_dynamics, make_model
from kincbf.qp_oracle import operational_terms
from kincbf.reduction import schur_reduce

near_upright = st.floats(math.pi - 0.5, math.pi + 0.5).filter(lambda t: abs(t - math.pi) > 1e-3)
rate = st.floats(-3, 3)


def _setup():
    cp = make_model("cartpole")
    kin = barrier_catalog(POLE_BAND, cp)
    return cp, kin, lambda q: (np.array([q[0]]), np.array([[1.0, 0.0]]))


@given(x=st.floats(-2, 2), th=near_upright, v0=rate, v1=rate, u=st.floats(-30, 30))
def test_reduced_dynamics_match_full_dynamics(x, th, v0, v1, u):
    cp, kin, w = _setup()
    q, qd = np.array([x, th]), np.array([v0, v1])
    red = schur_reduce(cp, kin, w, q, qd)
    qdd = forward_dynamics(cp, State(q, qd), [u])
    full = float(kin.jacobian(q) @ qdd + qd @ kin.hessian(q) @ qd)
    assert red.hddot(qd, np.array([u])) == pytest.approx(full, rel=1e-8, abs=1e-8)


@given(x=st.floats(-2, 2), th=near_upright, v0=rate, v1=rate)
def test_reduced_terms_match_inverse_inertia_route(x, th, v0, v1):
    cp, kin, w = _setup()
    q, qd = np.array([x, th]), np.array([v0, v1])
    red = schur_reduce(cp, kin, w, q, qd)
    ot = operational_terms(cp, kin, q, qd)
    assert red.D_h == pytest.approx(ot.D_h, rel=1e-10)
    np.testing.assert_allclose(red.B_h, ot.B_h, rtol=1e-10)
    assert red.D_h_dot == pytest.approx(ot.D_h_dot, rel=1e-6, abs=1e-8)
    assert float(red.C_h @ qd + red.G_h) == pytest.approx(ot.drift, rel=1e-6, abs=1e-8)


def test_reduced_inertia_independent_of_complement_coordinate():
    cp, kin, w = _setup()
    q, qd = np.array([0.4, 3.4]), np.array([0.3, -1.1])

    def w_curved(qq):
        return np.array([qq[0] + 0.5 * math.sin(qq[1])]), np.array([[1.0, 0.5 * math.cos(qq[1])]])

    a = schur_reduce(cp, kin, w, q, qd)
    b = schur_reduce(cp, kin, w_curved, q, qd)
    assert a.D_h == pytest.approx(b.D_h, rel=1e-12)
    assert a.hddot(qd, np.array([2.0])) == pytest.approx(b.hddot(qd, np.array([2.0])), rel=1e-6)


def test_reduced_inertia_rate_matches_finite_difference():
    cp, kin, w = _setup()
    q, qd = np.array([0.1, 3.5]), np.array([0.4, 0.9])
    step = 1e-6
    fd = (schur_reduce(cp, kin, w, q + step * qd, qd).D_h - schur_reduce(cp, kin, w, q - step * qd, qd).D_h) / (2 * step)
    assert schur_reduce(cp, kin, w, q, qd).D_h_dot == pytest.approx(fd, rel=1e-6)


def test_singular_coordinate_change():
    cp = make_model("cartpole")
    box = barrier_catalog({**POLE_BAND, "type": "angle_box"}, cp)
    with pytest.raises(DiffeomorphismError):
        schur_reduce(cp, box, _setup()[2], np.array([0.0, math.pi]), np.array([0.0, 1.0]))


def test_decoupled_at_horizontal_pole():
    cp, kin, w = _setup()
    with pytest.raises(CouplingError):
        schur_reduce(cp, kin, w, np.array([0.0, math.pi / 2]), np.array([0.0, 1.0]))
    red = schur_reduce(cp, kin, w, np.array([0.0, math.pi / 2]), np.array([0.0, 1.0]), check_coupling=False)
    assert abs(red.B_h[0]) < 1e-12
