"""Self-checks run by ``kincbf verify``.

Each check draws random instances, compares a library routine against an
independent computation and reports the number of failures and the worst
residual.  Suites: ``models``, ``filters``, ``bounds`` (``all`` runs every
one).
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .barrier import ClassKappa, EnergyBarrier, UnderactuatedBarrier, barrier_catalog
from .errors import KincbfError
from .filters import (
    explicit_cbf_qp,
    robust_torque_filter,
    robust_underactuated_filter,
    setpoint_task,
    circle_task,
    torque_filter,
    tracking_qdot_des,
    underactuated_filter,
    velocity_command_filter,
    velocity_filter,
)
from .models import State, StateBox, forward_dynamics, make_model
from .qp_oracle import (
    HalfspaceQP,
    bound_estimator,
    energy_halfspace,
    operational_terms,
    solve_single_constraint_qp,
    underactuated_halfspace,
    velocity_command_halfspace,
    velocity_halfspace,
)
from .reduction import schur_reduce

SUITES = ("models", "filters", "bounds")
ORACLE_TOL = 1e-10
ACTIVE_TOL = 1e-9


@dataclass
class Check:
    name: str
    count: int
    failures: int
    worst: float
    tol: float
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.count > 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: n={self.count} failures={self.failures} "
                f"worst={self.worst:.3e} tol={self.tol:g} ({self.seconds:.2f}s)")


class _Tally:
    def __init__(self, name, tol):
        self.name, self.tol = name, tol
        self.count = self.failures = 0
        self.worst = 0.0
        self.t0 = time.perf_counter()

    def add(self, err, ok=None):
        self.count += 1
        err = float(err) if np.isfinite(err) else math.inf
        self.worst = max(self.worst, err)
        if not (err <= self.tol if ok is None else ok):
            self.failures += 1

    def done(self) -> Check:
        return Check(self.name, self.count, self.failures, self.worst, self.tol,
                     time.perf_counter() - self.t0)


# ---------------------------------------------------------------------------
# fixtures shared by the suites
# ---------------------------------------------------------------------------

def arm_fixture(alpha_e=1.0):
    model = make_model("two_link_arm")
    kin = barrier_catalog({"type": "sphere_obstacle", "center": [1.2, 0.6], "d": 0.35}, model)
    return model, kin, EnergyBarrier(model, kin, alpha_e)


def cartpole_fixture(alpha_e=1.0, barrier="angle_band"):
    model = make_model("cartpole")
    kin = barrier_catalog({"type": barrier, "width": math.pi / 6}, model)
    return model, kin, UnderactuatedBarrier(model, kin, alpha_e)


def cartpole_box(model) -> StateBox:
    lo, hi = list(model.valid_box().q_lo), list(model.valid_box().q_hi)
    lo[1], hi[1] = math.pi - math.pi / 6, math.pi + math.pi / 6
    return StateBox(tuple(lo), tuple(hi), model.valid_box().qd_lo, model.valid_box().qd_hi)


def _uniform_state(rng, box: StateBox) -> State:
    return State(rng.uniform(box.q_lo, box.q_hi), rng.uniform(box.qd_lo, box.qd_hi))


def _uniform_states(rng, box: StateBox, n: int) -> list[State]:
    z = rng.uniform(box.lo, box.hi, size=(n, 2 * box.k))
    return [State(row[: box.k], row[box.k:]) for row in z]


def _random_kappa(rng) -> ClassKappa:
    return ClassKappa("linear" if rng.random() < 0.7 else "cubic", float(rng.uniform(0.2, 5.0)))


def _err(u, ref) -> float:
    u, ref = np.atleast_1d(u), np.atleast_1d(ref)
    return float(np.max(np.abs(u - ref)) / max(1.0, float(np.max(np.abs(ref)))))


def _mass_rate_fd(model, q, qd, step=1e-4):
    D = model.mass_matrix
    return (-D(q + 2 * step * qd) + 8 * D(q + step * qd) - 8 * D(q - step * qd)
            + D(q - 2 * step * qd)) / (12 * step)


def _grad_fd(f, q, step=1e-5):
    g = np.zeros(q.size)
    for i in range(q.size):
        e = np.zeros(q.size)
        e[i] = step
        g[i] = (-f(q + 2 * e) + 8 * f(q + e) - 8 * f(q - e) + f(q - 2 * e)) / (12 * step)
    return g


MODEL_IDS = ("double_integrator", "two_link_arm", "cartpole")


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

def check_skew_symmetry(rng, n=1000) -> Check:
    """``Ddot - 2C`` is skew symmetric (``Ddot`` by finite differences)."""
    t = _Tally("models.skew_symmetry", 1e-6)
    for mid in MODEL_IDS:
        model = make_model(mid)
        box = model.valid_box()
        for _ in range(n):
            s = _uniform_state(rng, box)
            N = _mass_rate_fd(model, s.q, s.qdot) - 2.0 * model.coriolis_matrix(s.q, s.qdot)
            t.add(np.max(np.abs(N + N.T)))
    return t.done()


def check_power_balance(rng, n=1000) -> Check:
    """Total energy changes at the rate of the input power ``qd^T B u``."""
    t = _Tally("models.power_balance", 1e-6)
    for mid in MODEL_IDS:
        model = make_model(mid)
        box = model.valid_box()
        for _ in range(n):
            s = _uniform_state(rng, box)
            u = rng.uniform(-5, 5, model.m)
            qdd = forward_dynamics(model, s, u)
            Ddot = _mass_rate_fd(model, s.q, s.qdot)
            rate = (s.qdot @ model.mass_matrix(s.q) @ qdd + 0.5 * s.qdot @ Ddot @ s.qdot
                    + _grad_fd(model.potential_energy, s.q) @ s.qdot)
            power = s.qdot @ model.actuation_matrix(s.q) @ u
            t.add(abs(rate - power) / max(1.0, abs(power)))
    return t.done()


def check_safe_set_inclusion(rng, n=10000) -> Check:
    """Every sampled state with nonnegative energy barrier has ``h >= 0``."""
    t = _Tally("models.safe_set_inclusion", 0.0)
    di = make_model("double_integrator")
    di_kin = barrier_catalog({"type": "position_box", "limit": 2.0}, di)
    arm, arm_kin, _ = arm_fixture()
    cp, cp_kin, _ = cartpole_fixture()
    cases = [(di, di_kin, False), (arm, arm_kin, False), (cp, cp_kin, True)]
    for model, kin, reduced in cases:
        box = model.valid_box()
        for _ in range(n):
            s = _uniform_state(rng, box)
            alpha_e = float(rng.uniform(0.5, 20.0))
            h = kin.value(s.q)
            D = model.mass_matrix(s.q)
            if reduced:
                J = kin.jacobian(s.q)
                hd = float(J @ s.qdot)
                kinetic = 0.5 * hd * hd / float(J @ np.linalg.solve(D, J))
            else:
                kinetic = 0.5 * s.qdot @ D @ s.qdot
            h_D = -kinetic + alpha_e * h
            bad = h_D >= 0 and h < 0
            t.add(1.0 if bad else 0.0, ok=not bad)
    return t.done()


# ---------------------------------------------------------------------------
# filters
# ---------------------------------------------------------------------------

def check_oracle_explicit(rng, n=10000) -> Check:
    t = _Tally("filters.oracle_explicit_qp", ORACLE_TOL)
    for _ in range(n):
        m = int(rng.integers(1, 4))
        Lg = rng.normal(size=m)
        Lf, h = float(rng.normal()), float(rng.normal())
        a = _random_kappa(rng)
        u_des = rng.normal(scale=3.0, size=m)
        out = explicit_cbf_qp(Lf, Lg, h, a, u_des)
        ref = solve_single_constraint_qp(HalfspaceQP(u_des, Lg, -a(h) - Lf))
        t.add(_err(out.command, ref))
    return t.done()


def check_oracle_velocity(rng, n=10000) -> Check:
    t = _Tally("filters.oracle_velocity", ORACLE_TOL)
    model, kin, _ = arm_fixture()
    box = model.valid_box()
    for _ in range(n):
        q = rng.uniform(box.q_lo, box.q_hi)
        a = _random_kappa(rng)
        qd_des = rng.uniform(-3, 3, model.k)
        out = velocity_filter(q, 0.0, kin, a, qd_des)
        t.add(_err(out.command, solve_single_constraint_qp(velocity_halfspace(kin, q, a, qd_des))))
    return t.done()


def _energy_states(rng, model, n):
    return _uniform_states(rng, model.valid_box(), n)


def check_oracle_torque(rng, n=10000) -> Check:
    t = _Tally("filters.oracle_torque", ORACLE_TOL)
    model, kin, _ = arm_fixture()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for s in _energy_states(rng, model, n):
            b = EnergyBarrier(model, kin, float(rng.uniform(0.5, 20.0)))
            a = _random_kappa(rng)
            u_des = rng.uniform(-30, 30, model.m)
            out = torque_filter(b, s, a, u_des)
            qp, _ = energy_halfspace(b, s, a, u_des)
            t.add(_err(out.command, solve_single_constraint_qp(qp)))
    return t.done()


def check_oracle_velocity_command(rng, n=10000) -> Check:
    t = _Tally("filters.oracle_velocity_command", ORACLE_TOL)
    model, kin, _ = arm_fixture()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, s in enumerate(_energy_states(rng, model, n)):
            b = EnergyBarrier(model, kin, float(rng.uniform(0.5, 20.0)))
            a = _random_kappa(rng)
            K = np.diag(rng.uniform(1.0, 30.0, model.k))
            qd_des = rng.uniform(-3, 3, model.k)
            precomp = bool(i % 2)
            out = velocity_command_filter(b, s, a, K, qd_des, precompensate_gravity=precomp)
            ff = np.linalg.solve(model.actuation_matrix(s.q), model.gravity_vector(s.q)) if precomp else None
            qp, _ = velocity_command_halfspace(b, s, a, K, qd_des, ff)
            t.add(_err(out.command, solve_single_constraint_qp(qp)))
    return t.done()


def check_oracle_underactuated(rng, n=10000) -> Check:
    t = _Tally("filters.oracle_underactuated", ORACLE_TOL)
    model, kin, _ = cartpole_fixture()
    box = cartpole_box(model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for s in _uniform_states(rng, box, n):
            b = UnderactuatedBarrier(model, kin, float(rng.uniform(0.5, 20.0)))
            a = _random_kappa(rng)
            u_des = rng.uniform(-50, 50, model.m)
            out = underactuated_filter(b, s, a, u_des)
            qp, _ = underactuated_halfspace(b, s, a, u_des)
            t.add(_err(out.command, solve_single_constraint_qp(qp)))
    return t.done()


def check_constraint_activity(rng, n=2000) -> Check:
    """Filtered inputs satisfy the constraint, with equality when intervening."""
    t = _Tally("filters.constraint_activity", ACTIVE_TOL)
    arm, arm_kin, _ = arm_fixture()
    cp, cp_kin, _ = cartpole_fixture()
    box = cartpole_box(cp)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i in range(n):
            a = _random_kappa(rng)
            alpha_e = float(rng.uniform(0.5, 20.0))
            if i % 3 == 0:
                s = _uniform_state(rng, arm.valid_box())
                out = torque_filter(EnergyBarrier(arm, arm_kin, alpha_e), s, a, rng.uniform(-30, 30, 2))
            elif i % 3 == 1:
                s = _uniform_state(rng, arm.valid_box())
                out = velocity_command_filter(EnergyBarrier(arm, arm_kin, alpha_e), s, a,
                                              10.0 * np.eye(2), rng.uniform(-3, 3, 2))
            else:
                s = _uniform_state(rng, box)
                out = underactuated_filter(UnderactuatedBarrier(cp, cp_kin, alpha_e), s, a,
                                           rng.uniform(-50, 50, 1))
            res = out.constraint_residual
            scale = max(1.0, abs(out.Lf), abs(a(out.barrier_value)))
            if out.intervened:
                t.add(abs(res) / scale)
            else:
                t.add(max(0.0, -res) / scale)
    return t.done()


def check_robust_implication(rng, n=10000) -> Check:
    """Whenever a robust filter's tightened constraint holds, the exact one does."""
    t = _Tally("filters.robust_implication", ACTIVE_TOL)
    arm, arm_kin, _ = arm_fixture()
    box = arm.valid_box()
    c_keep = bound_estimator(arm, box, "lambda_max_D", 5.0)
    c_drop = max(c_keep, bound_estimator(arm, box, "norm_G", 1.25))
    cp, cp_kin, _ = cartpole_fixture()
    cbox = cartpole_box(cp)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ub = UnderactuatedBarrier(cp, cp_kin, 1.0)
        bnd = bound_estimator(cp, cbox, "D_h_bounds", 1.25, kin=cp_kin, w_map=ub.w_map)
        for i in range(n):
            a = _random_kappa(rng)
            alpha_e = float(rng.uniform(0.5, 20.0))
            if i % 3 == 2:
                s = _uniform_state(rng, cbox)
                out = robust_underactuated_filter(UnderactuatedBarrier(cp, cp_kin, alpha_e), s, a,
                                                  rng.uniform(-50, 50, 1), bnd.c_l, bnd.c_u)
            else:
                mode = "keep_gravity" if i % 3 == 0 else "drop_gravity"
                c_u = c_keep if mode == "keep_gravity" else c_drop
                s = _uniform_state(rng, box)
                out = robust_torque_filter(EnergyBarrier(arm, arm_kin, alpha_e), s, a,
                                           rng.uniform(-30, 30, 2), c_u, mode)
            if out.constraint_residual >= 0:
                t.add(max(0.0, -out.exact_residual))
    return t.done()


def check_tracking_envelope(rng, n=20, dt=1e-3, horizon=3.0) -> Check:
    """Kinematic closed loop ``qd = qd_des(q, t)`` contracts the task error at rate lambda."""
    t = _Tally("filters.tracking_envelope", 1e-3)
    arm = make_model("two_link_arm")
    for i in range(n):
        # elbow well bent so every target stays reachable away from q2 = 0
        q = np.array([rng.uniform(-1.0, 1.0), rng.uniform(1.0, 2.2)])
        lam = float(rng.uniform(0.5, 3.0))
        y0, _ = arm.task_map(q)
        if i % 2:
            task = setpoint_task(y0 + rng.uniform(-0.15, 0.15, 2), lam)
        else:
            task = circle_task(y0 + rng.uniform(-0.1, 0.1, 2), 0.1, float(rng.uniform(0.2, 1.0)),
                               float(rng.uniform(0, 2 * np.pi)), lam)
        e0 = np.linalg.norm(arm.task_map(q)[0] - task.x_d(0.0))
        f = lambda qq, tt: tracking_qdot_des(arm, qq, tt, task)  # noqa: E731
        tt = 0.0
        worst = 0.0
        for _ in range(int(round(horizon / dt))):
            k1 = f(q, tt)
            k2 = f(q + 0.5 * dt * k1, tt + 0.5 * dt)
            k3 = f(q + 0.5 * dt * k2, tt + 0.5 * dt)
            k4 = f(q + dt * k3, tt + dt)
            q = q + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            tt += dt
            e = np.linalg.norm(arm.task_map(q)[0] - task.x_d(tt))
            worst = max(worst, e / (e0 * math.exp(-lam * tt)) - 1.0)
        t.add(max(0.0, worst))
    return t.done()


# ---------------------------------------------------------------------------
# bounds and reduction
# ---------------------------------------------------------------------------

def check_bound_coverage(rng, n=10000) -> Check:
    """Sampled inertia / gravity bounds dominate fresh uniform samples."""
    t = _Tally("bounds.coverage", 0.0)
    for mid in ("two_link_arm", "cartpole"):
        model = make_model(mid)
        box = model.valid_box()
        lam = bound_estimator(model, box, "lambda_max_D", 1.25)
        g = bound_estimator(model, box, "norm_G", 1.25)
        for _ in range(n):
            q = rng.uniform(box.q_lo, box.q_hi)
            over = max(np.linalg.eigvalsh(model.mass_matrix(q)).max() - lam,
                       np.linalg.norm(model.gravity_vector(q)) - g)
            t.add(max(0.0, over))
    return t.done()


def check_reduced_bounds(rng, n=10000) -> Check:
    """Reduced-model constants bound D_h, its rate, C_h and G_h on the box."""
    t = _Tally("bounds.reduced_constants", 0.0)
    model, kin, b = cartpole_fixture()
    box = cartpole_box(model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bnd = bound_estimator(model, box, "D_h_bounds", 1.25, kin=kin, w_map=b.w_map)
    for _ in range(n):
        s = _uniform_state(rng, box)
        if abs(s.q[1] - np.pi) < 0.05:
            # grad h -> 0 there, so D_h blows up and the finite-difference rate is noise
            continue
        try:
            red = schur_reduce(model, kin, b.w_map, s.q, s.qdot)
        except KincbfError:
            continue
        speed = float(np.linalg.norm(s.qdot))
        over = max(red.D_h - bnd.c_u, red.D_h_dot - bnd.c_l, abs(red.G_h) - bnd.c_u,
                   float(np.linalg.norm(red.C_h)) - bnd.c_u * speed)
        t.add(max(0.0, over))
    return t.done()


def check_schur_hddot(rng, n=1000) -> Check:
    """Reduced ``hdd`` equals ``J_h qdd + Jdot_h qd`` from the full dynamics."""
    t = _Tally("bounds.schur_hddot", 1e-8)
    cases = [cartpole_fixture(barrier="angle_band"), cartpole_fixture(barrier="angle_box")]
    arm, arm_kin, _ = arm_fixture()
    cases.append((arm, arm_kin, UnderactuatedBarrier(arm, arm_kin)))
    per = n // len(cases) + 1
    for model, kin, b in cases:
        box = cartpole_box(model) if model.name == "cartpole" else model.valid_box()
        done = 0
        while done < per:
            s = _uniform_state(rng, box)
            try:
                red = schur_reduce(model, kin, b.w_map, s.q, s.qdot)
            except KincbfError:
                continue
            u = rng.uniform(-20, 20, model.m)
            qdd = forward_dynamics(model, s, u)
            full = kin.jacobian(s.q) @ qdd + s.qdot @ kin.hessian(s.q) @ s.qdot
            t.add(abs(red.hddot(s.qdot, u) - full) / max(1.0, abs(full)))
            done += 1
    return t.done()


def check_operational_identity(rng, n=1000) -> Check:
    """Schur-reduced D_h, B_h and Ddot_h agree with the inverse-inertia route."""
    t = _Tally("bounds.operational_identity", 1e-6)
    # smooth barrier: the finite differences in the oracle must not straddle a kink
    model, kin, b = cartpole_fixture(barrier="angle_box")
    box = cartpole_box(model)
    for _ in range(n):
        s = _uniform_state(rng, box)
        if abs(s.q[1] - np.pi) < 0.05:
            # grad h -> 0 there, so D_h blows up and the finite-difference rate is noise
            continue
        try:
            red = schur_reduce(model, kin, b.w_map, s.q, s.qdot)
        except KincbfError:
            continue
        ot = operational_terms(model, kin, s.q, s.qdot)
        t.add(max(_err(red.D_h, ot.D_h), _err(red.B_h, ot.B_h), _err(red.D_h_dot, ot.D_h_dot)))
    return t.done()


CHECKS = {
    "models": (check_skew_symmetry, check_power_balance, check_safe_set_inclusion),
    "filters": (
        check_oracle_explicit, check_oracle_velocity, check_oracle_torque,
        check_oracle_velocity_command, check_oracle_underactuated,
        check_constraint_activity, check_robust_implication, check_tracking_envelope,
    ),
    "bounds": (check_bound_coverage, check_reduced_bounds, check_schur_hddot, check_operational_identity),
}


def run_suite(name: str, seed: int = 0, scale: float = 1.0) -> list[Check]:
    """Run one suite (or ``all``); ``scale`` shrinks the sample counts."""
    if name == "all":
        names = SUITES
    elif name in SUITES:
        names = (name,)
    else:
        raise ValueError(f"unknown suite '{name}', choose from {SUITES + ('all',)}")
    rng = np.random.default_rng(seed)
    out = []
    for suite in names:
        for fn in CHECKS[suite]:
            default = fn.__defaults__[0]
            out.append(fn(rng, max(1, int(default * scale))))
    return out
