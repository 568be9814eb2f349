"""Closed-form CBF safety filters.

Every filter in this module solves a QP with a single affine constraint::

    min ||v - v_des||^2   s.t.   Lf + Lg v + alpha(h) >= 0

whose minimizer is the projection of ``v_des`` onto a halfspace.  The filters
differ only in how ``Lf``, ``Lg`` and the barrier value are assembled.
"""
from __future__ import annotations

import warnings
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .barrier import ClassKappa, EnergyBarrier, KinematicBarrier, UnderactuatedBarrier
from .errors import (
    BoundError,
    DegenerateGradientError,
    InfeasibleCBFError,
    InternalContractError,
    SingularityError,
)
from .models import RobotModel, State
from .reduction import SchurReduction, schur_reduce

__all__ = [
    "FilterOutput",
    "TrackingTask",
    "SchurReduction",
    "OutsideSafeSetWarning",
    "EPS_V",
    "EPS_PINV",
    "explicit_cbf_qp",
    "tracking_qdot_des",
    "setpoint_task",
    "line_task",
    "circle_task",
    "velocity_filter",
    "torque_filter",
    "robust_torque_filter",
    "velocity_command_filter",
    "low_level_pd",
    "schur_reduce",
    "underactuated_filter",
    "robust_underactuated_filter",
    "inject_fault",
]

EPS_V = 1e-8
EPS_PINV = 1e-10

_FAULTS: set[str] = set()
KNOWN_FAULTS = ("psi_sign",)


@contextmanager
def inject_fault(name: str):
    """Temporarily corrupt the filters (used by the verification smoke test)."""
    if name not in KNOWN_FAULTS:
        raise ValueError(f"unknown fault '{name}', choose from {KNOWN_FAULTS}")
    _FAULTS.add(name)
    try:
        yield
    finally:
        _FAULTS.discard(name)


class OutsideSafeSetWarning(UserWarning):
    """Filter evaluated at a state outside the set it certifies."""


@dataclass(frozen=True)
class FilterOutput:
    command: np.ndarray
    psi: float
    intervened: bool
    constraint_residual: float
    Lf: float = 0.0
    Lg: np.ndarray | None = None
    barrier_value: float = 0.0
    exact_residual: float | None = None

    def __post_init__(self):
        if self.exact_residual is None:
            object.__setattr__(self, "exact_residual", self.constraint_residual)


def explicit_cbf_qp(
    Lf_h: float,
    Lg_h,
    h_val: float,
    a: ClassKappa,
    u_des,
    *,
    degenerate_error: type[Exception] = InfeasibleCBFError,
) -> FilterOutput:
    """Minimal modification of ``u_des`` enforcing ``Lf + Lg u >= -alpha(h)``.

    ``psi = Lf + Lg u_des + alpha(h)``; the input passes through untouched
    when ``psi >= 0`` and is otherwise shifted along ``Lg^T`` by
    ``-psi / ||Lg||^2``.
    """
    Lg = np.atleast_1d(np.asarray(Lg_h, dtype=float))
    u_des = np.atleast_1d(np.asarray(u_des, dtype=float))
    Lf = float(Lf_h)
    alpha_h = float(a(h_val))
    psi = Lf + float(Lg @ u_des) + alpha_h
    if "psi_sign" in _FAULTS:
        psi = -psi
    nrm2 = float(Lg @ Lg)

    if psi >= 0.0:
        cmd = u_des.copy()
        intervened = False
    else:
        if nrm2 < EPS_V * EPS_V:
            raise degenerate_error(
                f"||Lg|| = {np.sqrt(nrm2):.3e} while psi = {psi:.3e} < 0"
            )
        cmd = u_des - Lg * (psi / nrm2)
        intervened = True
    residual = Lf + float(Lg @ cmd) + alpha_h
    return FilterOutput(cmd, psi, intervened, residual, Lf, Lg, float(h_val))


# ---------------------------------------------------------------------------
# kinematic layer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrackingTask:
    x_d: Callable[[float], np.ndarray]
    xdot_d: Callable[[float], np.ndarray]
    lam: float = 1.0
    descriptor: dict | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("tracking gain lambda must be positive")


def setpoint_task(point, lam=1.0) -> TrackingTask:
    p = np.atleast_1d(np.asarray(point, dtype=float))
    return TrackingTask(
        lambda t: p, lambda t: np.zeros_like(p), lam,
        {"kind": "setpoint", "point": p.tolist(), "lambda": lam},
    )


def line_task(start, velocity, lam=1.0) -> TrackingTask:
    p0 = np.atleast_1d(np.asarray(start, dtype=float))
    v = np.atleast_1d(np.asarray(velocity, dtype=float))
    return TrackingTask(
        lambda t: p0 + v * t, lambda t: v, lam,
        {"kind": "line", "start": p0.tolist(), "velocity": v.tolist(), "lambda": lam},
    )


def circle_task(center, radius, omega, phase=0.0, lam=1.0) -> TrackingTask:
    c = np.asarray(center, dtype=float)
    if c.shape != (2,):
        raise ValueError("circle tasks live in a 2-D task space")

    def x_d(t):
        th = omega * t + phase
        return c + radius * np.array([np.cos(th), np.sin(th)])

    def xdot_d(t):
        th = omega * t + phase
        return radius * omega * np.array([-np.sin(th), np.cos(th)])

    return TrackingTask(
        x_d, xdot_d, lam,
        {"kind": "circle", "center": c.tolist(), "radius": radius, "omega": omega,
         "phase": phase, "lambda": lam},
    )


def tracking_qdot_des(model: RobotModel, q, t: float, task: TrackingTask) -> np.ndarray:
    """``J_y^+ (xdot_d - lam (y(q) - x_d))`` with the exact right pseudoinverse."""
    x, J = model.task_map(np.asarray(q, dtype=float))
    v = task.xdot_d(t) - task.lam * (x - task.x_d(t))
    gram = J @ J.T
    if not abs(np.linalg.det(gram)) >= EPS_PINV:
        raise SingularityError(f"task Jacobian singular at q={np.asarray(q)}")
    return J.T @ np.linalg.solve(gram, v)


def velocity_filter(q, t, kin: KinematicBarrier, a: ClassKappa, qdot_des) -> FilterOutput:
    """Velocity-level filter ``J_h qd >= -alpha(h)`` (kinematic safety only)."""
    del t  # the constraint is time invariant; kept for a uniform call signature
    J_h = kin.jacobian(q)
    return explicit_cbf_qp(
        0.0, J_h, kin.value(q), a, qdot_des, degenerate_error=DegenerateGradientError
    )


# ---------------------------------------------------------------------------
# energy-based filters for fully actuated systems
# ---------------------------------------------------------------------------

def _h_D(b: EnergyBarrier, q, qd, D=None):
    if D is None:
        D = b.model.mass_matrix(q)
    return -0.5 * qd @ D @ qd + b.alpha_e * b.kin.value(q)


def _exact_residual(b: EnergyBarrier, a: ClassKappa, q, qd, u, h_D):
    B = b.model.actuation_matrix(q)
    G = b.model.gravity_vector(q)
    hdot = -qd @ (B @ u) + G @ qd + b.alpha_e * b.kin.jacobian(q) @ qd
    return float(hdot + a(h_D))


def _warn_outside(value, what):
    if value < 0.0:
        warnings.warn(f"state outside {what}", OutsideSafeSetWarning, stacklevel=3)


def torque_filter(b: EnergyBarrier, s: State, a: ClassKappa, u_des) -> FilterOutput:
    """Torque filter keeping ``h_D`` nonnegative.

    Needs only ``D`` (for ``h_D``), ``G`` and ``B``: Coriolis terms drop out
    of ``hdot_D`` by skew symmetry.
    """
    q, qd = s.q, s.qdot
    B = b.model.actuation_matrix(q)
    G = b.model.gravity_vector(q)
    h_D = _h_D(b, q, qd)
    _warn_outside(h_D, "S_D")
    Lf = float((b.alpha_e * b.kin.jacobian(q) + G) @ qd)
    Lg = -(qd @ B)
    return explicit_cbf_qp(Lf, Lg, h_D, a, u_des, degenerate_error=InternalContractError)


def robust_torque_filter(
    b: EnergyBarrier,
    s: State,
    a: ClassKappa,
    u_des,
    c_u: float,
    mode: str = "keep_gravity",
) -> FilterOutput:
    """Inertia-free variant: ``h_D`` is replaced by ``-c_u ||qd||^2 + alpha_e h``.

    ``keep_gravity`` needs ``c_u >= lambda_max(D)/2``; ``drop_gravity`` also
    replaces ``G^T qd`` by ``-c_u ||qd||`` and additionally needs
    ``||G|| <= c_u``.
    """
    if not (np.isfinite(c_u) and c_u > 0):
        raise BoundError(f"c_u must be positive, got {c_u}")
    q, qd = s.q, s.qdot
    B = b.model.actuation_matrix(q)
    J_h = b.kin.jacobian(q)
    speed = float(np.linalg.norm(qd))
    if mode == "keep_gravity":
        G = b.model.gravity_vector(q)
        Lf = float((b.alpha_e * J_h + G) @ qd)
    elif mode == "drop_gravity":
        Lf = float(b.alpha_e * J_h @ qd) - c_u * speed
    else:
        raise ValueError(f"unknown mode '{mode}'")
    surrogate = -c_u * speed * speed + b.alpha_e * b.kin.value(q)
    _warn_outside(surrogate, "tightened S_D")
    out = explicit_cbf_qp(Lf, -(qd @ B), surrogate, a, u_des, degenerate_error=InternalContractError)
    h_D = _h_D(b, q, qd)
    exact = _exact_residual(b, a, q, qd, out.command, h_D)
    return _with_exact(out, exact)


def _with_exact(out: FilterOutput, exact: float) -> FilterOutput:
    return FilterOutput(
        out.command, out.psi, out.intervened, out.constraint_residual,
        out.Lf, out.Lg, out.barrier_value, exact,
    )


def low_level_pd(qdot, qdot_cmd, K_vel, feedforward=None) -> np.ndarray:
    """Embedded velocity loop ``u = -K_vel (qd - qd_cmd)`` (+ optional feedforward)."""
    K = np.atleast_2d(np.asarray(K_vel, dtype=float))
    u = -K @ (np.asarray(qdot, dtype=float) - np.asarray(qdot_cmd, dtype=float))
    if feedforward is not None:
        u = u + feedforward
    return u


def _check_gain(K_vel) -> np.ndarray:
    K = np.atleast_2d(np.asarray(K_vel, dtype=float))
    diag = np.diagonal(K)
    if K.shape[0] == K.shape[1] and np.count_nonzero(K) == np.count_nonzero(diag):
        if diag.min() <= 0:
            raise ValueError("K_vel must be positive definite")
        return K
    if K.shape[0] != K.shape[1] or np.abs(K - K.T).max() > 1e-12 * np.abs(K).max():
        raise ValueError("K_vel must be a symmetric matrix")
    if np.linalg.eigvalsh(K).min() <= 0:
        raise ValueError("K_vel must be positive definite")
    return K


def velocity_command_filter(
    b: EnergyBarrier,
    s: State,
    a: ClassKappa,
    K_vel,
    qdot_des,
    *,
    precompensate_gravity: bool = False,
) -> FilterOutput:
    """Filter a velocity command that an embedded PD loop turns into torque.

    The returned ``command`` is ``qd*_d``; the applied torque is
    ``low_level_pd(qd, qd*_d, K_vel)``.  With ``precompensate_gravity`` the
    loop adds ``B^-1 G(q)`` and the gravity term leaves the constraint.
    """
    K = _check_gain(K_vel)
    q, qd = s.q, s.qdot
    B = b.model.actuation_matrix(q)
    G = b.model.gravity_vector(q)
    h_D = _h_D(b, q, qd)
    _warn_outside(h_D, "S_D")
    BK = B @ K
    Lf = float(b.alpha_e * b.kin.jacobian(q) @ qd + qd @ BK @ qd)
    if not precompensate_gravity:
        Lf += float(G @ qd)
    out = explicit_cbf_qp(Lf, -(qd @ BK), h_D, a, qdot_des, degenerate_error=InternalContractError)
    ff = np.linalg.solve(B, G) if precompensate_gravity else None
    u = low_level_pd(qd, out.command, K, ff)
    return _with_exact(out, _exact_residual(b, a, q, qd, u, h_D))


# ---------------------------------------------------------------------------
# underactuated systems
# ---------------------------------------------------------------------------

def _exact_under(b, a, red: SchurReduction, qd, u, h_hat):
    hd = red.hdot
    drift = -0.5 * red.D_h_dot * hd * hd + hd * (red.C_h @ qd + red.G_h) + b.alpha_e * hd
    return float(drift - hd * (red.B_h @ u) + a(h_hat))


def underactuated_filter(b: UnderactuatedBarrier, s: State, a: ClassKappa, u_des) -> FilterOutput:
    """Filter on the reduced barrier dynamics ``D_h hdd + C_h qd + G_h = B_h u``.

    Constraint::

        -1/2 Ddot_h hdot^2 + hdot (C_h qd + G_h) + alpha_e hdot - hdot B_h u
            >= -alpha(h_hat_D)
    """
    q, qd = s.q, s.qdot
    u_des = np.atleast_1d(np.asarray(u_des, dtype=float))
    h = b.kin.value(q)
    hd = float(b.kin.jacobian(q) @ qd)
    if hd == 0.0:
        # every hdot-scaled term vanishes; the constraint reads alpha(alpha_e h) >= 0
        _warn_outside(h, "S")
        return explicit_cbf_qp(0.0, np.zeros(b.model.m), b.alpha_e * h, a, u_des,
                               degenerate_error=InternalContractError)
    red = schur_reduce(b.model, b.kin, b.w_map, q, qd)
    h_hat = -0.5 * hd * red.D_h * hd + b.alpha_e * h
    _warn_outside(h_hat, "S_D (underactuated)")
    Lf = -0.5 * red.D_h_dot * hd * hd + hd * float(red.C_h @ qd + red.G_h) + b.alpha_e * hd
    return explicit_cbf_qp(Lf, -hd * red.B_h, h_hat, a, u_des, degenerate_error=InternalContractError)


def robust_underactuated_filter(
    b: UnderactuatedBarrier,
    s: State,
    a: ClassKappa,
    u_des,
    c_l: float,
    c_u: float,
) -> FilterOutput:
    """Reduced-model variant of :func:`underactuated_filter`.

    Constraint::

        -1/2 c_l hdot^2 - c_u |hdot| (||qd||^2 + 1) + alpha_e hdot - hdot B_h u
            >= -alpha(-c_u hdot^2 + alpha_e h)

    It implies the exact constraint when, on the operating box,
    ``Ddot_h <= c_l``, ``D_h <= c_u``, ``||C_h|| <= c_u ||qd||`` and
    ``|G_h| <= c_u`` (see ``qp_oracle.bound_estimator``).
    """
    if not (np.isfinite(c_u) and c_u > 0):
        raise BoundError(f"c_u must be positive, got {c_u}")
    if not (np.isfinite(c_l) and c_l >= 0):
        raise BoundError(f"c_l must be nonnegative, got {c_l}")
    q, qd = s.q, s.qdot
    u_des = np.atleast_1d(np.asarray(u_des, dtype=float))
    h = b.kin.value(q)
    hd = float(b.kin.jacobian(q) @ qd)
    surrogate = -c_u * hd * hd + b.alpha_e * h
    _warn_outside(surrogate, "tightened S_D (underactuated)")
    if hd == 0.0:
        out = explicit_cbf_qp(0.0, np.zeros(b.model.m), surrogate, a, u_des,
                              degenerate_error=InternalContractError)
        return _with_exact(out, float(a(b.alpha_e * h)))
    red = schur_reduce(b.model, b.kin, b.w_map, q, qd)
    speed2 = float(qd @ qd)
    Lf = -0.5 * c_l * hd * hd - c_u * abs(hd) * (speed2 + 1.0) + b.alpha_e * hd
    out = explicit_cbf_qp(Lf, -hd * red.B_h, surrogate, a, u_des, degenerate_error=InternalContractError)
    h_hat = -0.5 * hd * red.D_h * hd + b.alpha_e * h
    return _with_exact(out, _exact_under(b, a, red, qd, out.command, h_hat))
