"""Barrier-coordinate dynamics via the change of coordinates q -> (w(q), h(q)).

Rewriting the equations of motion in the coordinates ``eta = (w, h)`` and
eliminating ``wdd`` leaves a scalar equation for the barrier::

    D_h hdd + C_h qd + G_h = B_h u

where ``D_h`` is the Schur complement of the transformed inertia.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CouplingError, DiffeomorphismError, InternalContractError

EPS_DET = 1e-9
EPS_COUPLING = 1e-6
JDOT_STEP = 1e-6

__all__ = ["SchurReduction", "schur_reduce", "EPS_DET", "EPS_COUPLING"]


@dataclass(frozen=True)
class SchurReduction:
    D_h: float
    C_h: np.ndarray  # (k,), multiplies qdot
    G_h: float
    B_h: np.ndarray  # (m,)
    J_e: np.ndarray  # (k, k), rows [J_w; J_h]
    w_jacobian: np.ndarray  # (k-1, k)
    D_h_dot: float
    hdot: float

    def hddot(self, qdot, u) -> float:
        return float((self.B_h @ u - self.C_h @ qdot - self.G_h) / self.D_h)


def _jacobian_rate(w_map, q, qdot, step=JDOT_STEP):
    # central difference of J_w along qdot; coordinate selections have a constant Jacobian
    if hasattr(w_map, "indices"):
        return np.zeros((len(w_map.indices), q.shape[0]))
    _, Jp = w_map(q + step * qdot)
    _, Jm = w_map(q - step * qdot)
    return (Jp - Jm) / (2.0 * step)


def schur_reduce(model, kin, w_map, q, qdot, *, check_coupling=True) -> SchurReduction:
    """Scalar barrier dynamics at ``(q, qdot)``.

    Raises :class:`DiffeomorphismError` when ``|det J_e| < EPS_DET`` and
    :class:`CouplingError` when ``||B_h|| < EPS_COUPLING`` (the barrier is
    not inertially coupled with the input there).
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    k = model.k

    J_h = kin.jacobian(q)
    if k > 1:
        _, J_w = w_map(q)
        J_w = np.atleast_2d(J_w)
        Jdot_w = np.atleast_2d(_jacobian_rate(w_map, q, qdot))
    else:
        J_w = np.zeros((0, 1))
        Jdot_w = np.zeros((0, 1))
    J_e = np.vstack([J_w, J_h[None, :]])
    det = np.linalg.det(J_e)
    if not abs(det) >= EPS_DET:
        raise DiffeomorphismError(f"|det J_e| = {abs(det):.3e} below {EPS_DET:g}")
    Jdot_h = kin.hessian(q) @ qdot
    Jdot_e = np.vstack([Jdot_w, Jdot_h[None, :]])

    D = model.mass_matrix(q)
    C = model.coriolis_matrix(q, qdot)
    G = model.gravity_vector(q)
    B = model.actuation_matrix(q)

    Jinv = np.linalg.inv(J_e)
    D_e = Jinv.T @ D @ Jinv
    # Coriolis term of the transformed dynamics written against qdot
    C_eq = Jinv.T @ (C - D @ Jinv @ Jdot_e)
    G_e = Jinv.T @ G
    B_e = Jinv.T @ B

    i = k - 1
    if k > 1:
        X = np.linalg.solve(D_e[:i, :i], D_e[:i, i]).T  # D21 D11^-1 (D_e symmetric)
        D_h = D_e[i, i] - X @ D_e[:i, i]
        C_h = C_eq[i] - X @ C_eq[:i]
        G_h = G_e[i] - X @ G_e[:i]
        B_h = B_e[i] - X @ B_e[:i]
    else:
        D_h, C_h, G_h, B_h = D_e[0, 0], C_eq[0], G_e[0], B_e[0]

    D_h = float(D_h)
    if not D_h > 0:
        raise InternalContractError(f"reduced inertia D_h = {D_h} is not positive")
    B_h = np.atleast_1d(np.asarray(B_h, dtype=float))
    if check_coupling and not np.linalg.norm(B_h) >= EPS_COUPLING:
        raise CouplingError(f"||B_h|| = {np.linalg.norm(B_h):.3e}: barrier not coupled with input")

    # D_h = 1 / (J_h D^-1 J_h^T) for any admissible w, which gives its rate directly
    Dinv_Jh = np.linalg.solve(D, J_h)
    Ddot = model.mass_matrix_dot(q, qdot)
    rate = 2.0 * Jdot_h @ Dinv_Jh - Dinv_Jh @ Ddot @ Dinv_Jh
    D_h_dot = -D_h * D_h * rate

    return SchurReduction(
        D_h=D_h,
        C_h=np.asarray(C_h, dtype=float),
        G_h=float(G_h),
        B_h=B_h,
        J_e=J_e,
        w_jacobian=J_w,
        D_h_dot=float(D_h_dot),
        hdot=float(J_h @ qdot),
    )
