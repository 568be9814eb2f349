import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import POLE_BAND
from kincbf.barrier import barrier_catalog
from kincbf.errors import BoundError, InfeasibleQPError
from kincbf.models import StateBox, make_model
from kincbf.qp_oracle import (
    CoverageWarning,
    HalfspaceQP,
    UnderactuatedBounds,
    bound_estimator,
    grid_search_qp,
    perturbation_optimal,
    solve_single_constraint_qp,
)

coef = st.floats(-5, 5)


def test_projection_worked_example():
    p = HalfspaceQP([0.0, 0.0], [1.0, 1.0], 2.0)
    np.testing.assert_allclose(solve_single_constraint_qp(p), [1.0, 1.0])
    assert p.feasible([1.0, 1.0])
    assert not p.feasible([0.0, 0.0])


@given(u0=coef, u1=coef, a0=coef, a1=coef, b=coef)
def test_projection_is_feasible_and_optimal(u0, u1, a0, a1, b):
    if a0 * a0 + a1 * a1 < 1e-3:
        return
    p = HalfspaceQP([u0, u1], [a0, a1], b)
    u = solve_single_constraint_qp(p)
    assert p.feasible(u, tol=1e-12)
    assert perturbation_optimal(p, u, np.random.default_rng(0), n=300)


def test_grid_search_agrees_with_projection():
    rng = np.random.default_rng(7)
    for _ in range(20):
        ang = rng.uniform(0, 2 * math.pi)
        p = HalfspaceQP(rng.uniform(-1, 1, 2), [math.cos(ang), math.sin(ang)], rng.uniform(0, 1))
        exact = solve_single_constraint_qp(p)
        grid = grid_search_qp(p, radius=3.0, resolution=0.01)
        # some grid point lies within one cell diagonal of the projection
        d = math.sqrt(p.objective(exact))
        assert p.objective(exact) - 1e-12 <= p.objective(grid) <= (d + 0.01 * math.sqrt(2)) ** 2


def test_suboptimal_point_detected():
    p = HalfspaceQP([0.0, 0.0], [1.0, 0.0], 1.0)
    assert not perturbation_optimal(p, np.array([1.5, 0.0]), np.random.default_rng(1), radius=0.6)


def test_infeasible_problems():
    with pytest.raises(InfeasibleQPError):
        solve_single_constraint_qp(HalfspaceQP([0.0], [0.0], 1.0))
    np.testing.assert_array_equal(solve_single_constraint_qp(HalfspaceQP([3.0], [0.0], -1.0)), [3.0])
    with pytest.raises(InfeasibleQPError):
        grid_search_qp(HalfspaceQP([0.0], [1.0], 10.0), radius=1.0, resolution=0.1)
    with pytest.raises(ValueError):
        HalfspaceQP([0.0, 1.0], [1.0], 0.0)
    with pytest.raises(ValueError):
        grid_search_qp(HalfspaceQP(np.zeros(4), np.ones(4), 0.0), 1.0, 0.1)


def test_arm_inertia_bound():
    arm = make_model("two_link_arm")
    box = arm.valid_box()
    # the largest eigenvalue of D is reached with the arm stretched out: 3 + sqrt(8)
    lam = bound_estimator(arm, box, "lambda_max_D", 1.0)
    assert 0.999 * (3 + math.sqrt(8)) <= lam <= 3 + math.sqrt(8) + 1e-12
    assert bound_estimator(arm, box, "half_lambda_max_D", 2.0) == pytest.approx(lam)
    norm_G = bound_estimator(arm, box, "norm_G", 1.0)
    assert 0.999 * math.hypot(3 * 9.81, 9.81) <= norm_G <= math.hypot(3 * 9.81, 9.81) + 1e-9


def test_bound_covers_fresh_samples():
    arm = make_model("two_link_arm")
    c = bound_estimator(arm, arm.valid_box(), "half_lambda_max_D", 1.25)
    rng = np.random.default_rng(3)
    for q in rng.uniform(-math.pi, math.pi, (2000, 2)):
        assert 0.5 * np.linalg.eigvalsh(arm.mass_matrix(q))[-1] <= c


def test_bound_cache_file(tmp_path):
    from kincbf import qp_oracle

    di = make_model("double_integrator", mass=3.0)
    path = tmp_path / "bounds.txt"
    box = StateBox((-1.0,), (1.0,), (-1.0,), (1.0,))
    first = bound_estimator(di, box, "lambda_max_D", 1.5, cache_path=str(path))
    assert first == pytest.approx(4.5)
    assert path.read_text().count("\n") == 1
    qp_oracle._MEMO.clear()
    assert bound_estimator(di, box, "lambda_max_D", 1.5, cache_path=str(path)) == first
    assert path.read_text().count("\n") == 1


def test_bound_argument_errors():
    arm = make_model("two_link_arm")
    box = arm.valid_box()
    with pytest.raises(BoundError):
        bound_estimator(arm, box, "lambda_max_D", 0.9)
    with pytest.raises(BoundError):
        bound_estimator(arm, box, "lambda_max_D", n_log2=10)
    with pytest.raises(BoundError):
        bound_estimator(arm, box, "D_h_bounds")
    with pytest.raises(BoundError):
        bound_estimator(arm, make_model("double_integrator").valid_box(), "norm_G")
    with pytest.raises(ValueError):
        bound_estimator(arm, box, "spectral_gap")


def test_reduced_bounds_on_band():
    cp = make_model("cartpole")
    kin = barrier_catalog(POLE_BAND, cp)
    box = StateBox((-5.0, math.pi - math.pi / 6), (5.0, math.pi + math.pi / 6), (-5.0, -5.0), (5.0, 5.0))
    res = bound_estimator(cp, box, "D_h_bounds", 1.25, kin=kin)
    assert isinstance(res, UnderactuatedBounds)
    assert res.coverage == 1.0
    assert 0 < res.D_h_min <= res.D_h_max <= res.c_u
    assert res.c_l > 0


def _half_singular(q):
    # a complement coordinate that coincides with the barrier coordinate for x < 0
    if q[0] >= 0:
        return np.array([q[0]]), np.array([[1.0, 0.0]])
    return np.array([q[1]]), np.array([[0.0, 1.0]])


def test_reduced_bounds_warn_on_partial_coverage():
    cp = make_model("cartpole")
    kin = barrier_catalog(POLE_BAND, cp)
    box = StateBox((-1.0, 3.0), (1.0, 3.5), (-1.0, -1.0), (1.0, 1.0))
    with pytest.warns(CoverageWarning):
        res = bound_estimator(cp, box, "D_h_bounds", 1.25, kin=kin, w_map=_half_singular)
    assert res.coverage == pytest.approx(0.5, abs=0.02)


def test_reduced_bounds_undefined_everywhere():
    cp = make_model("cartpole")
    kin = barrier_catalog(POLE_BAND, cp)
    box = StateBox((-1.0, 3.0), (-0.5, 3.5), (-1.0, -1.0), (1.0, 1.0))
    with pytest.raises(BoundError):
        bound_estimator(cp, box, "D_h_bounds", 1.25, kin=kin, w_map=_half_singular)
