"""Analytic rigid-body models: D(q) qdd + C(q, qd) qd + G(q) = B u.

Three built-in systems are provided (double integrator, planar two-link arm,
cart-pole).  All Coriolis matrices are in Christoffel form, so that
``Ddot = C + C^T`` holds exactly and ``Ddot - 2C`` is skew symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Callable

import math

import numpy as np

from .errors import DomainError

__all__ = [
    "State",
    "StateBox",
    "RobotModel",
    "DoubleIntegrator",
    "TwoLinkArm",
    "CartPole",
    "MODEL_REGISTRY",
    "make_model",
    "mass_matrix",
    "coriolis_matrix",
    "gravity_vector",
    "actuation_matrix",
    "forward_dynamics",
    "task_map",
]


def _vec(x, n: int, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape[0] != n:
        raise DomainError(f"{what} must have length {n}, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise DomainError(f"{what} is not finite: {arr}")
    return arr


@dataclass(frozen=True)
class State:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        qd = np.asarray(self.qdot, dtype=float).reshape(-1)
        if q.shape != qd.shape:
            raise DomainError(f"q and qdot differ in length: {q.shape} vs {qd.shape}")
        if not (np.isfinite(q).all() and np.isfinite(qd).all()):
            raise DomainError("state is not finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qd)

    @property
    def k(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class StateBox:
    """Axis-aligned box in (q, qdot) space."""

    q_lo: tuple
    q_hi: tuple
    qd_lo: tuple
    qd_hi: tuple

    def __post_init__(self):
        for name in ("q_lo", "q_hi", "qd_lo", "qd_hi"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        lo = np.array(self.q_lo + self.qd_lo)
        hi = np.array(self.q_hi + self.qd_hi)
        if lo.shape != hi.shape or np.any(hi < lo):
            raise DomainError("state box has inconsistent bounds")

    @property
    def k(self) -> int:
        return len(self.q_lo)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.q_lo + self.qd_lo)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.q_hi + self.qd_hi)

    def key(self) -> str:
        return ",".join(f"{v:.17g}" for v in self.q_lo + self.q_hi + self.qd_lo + self.qd_hi)


class RobotModel:
    """Base class.  Subclasses are frozen dataclasses holding physical constants."""

    name: str = "robot"
    k: int = 0
    m: int = 0
    n_task: int = 0

    # -- dynamics -------------------------------------------------------
    def mass_matrix(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def coriolis_matrix(self, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gravity_vector(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def actuation_matrix(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def potential_energy(self, q: np.ndarray) -> float:
        raise NotImplementedError

    def mass_matrix_dot(self, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
        # valid because C is built from Christoffel symbols
        C = self.coriolis_matrix(q, qdot)
        return C + C.T

    def kinetic_energy(self, q: np.ndarray, qdot: np.ndarray) -> float:
        return 0.5 * float(qdot @ self.mass_matrix(q) @ qdot)

    # -- kinematics -----------------------------------------------------
    def task_map(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def task_hessian(self, q: np.ndarray) -> np.ndarray:
        """Second derivatives of the task map, shape (n, k, k)."""
        raise NotImplementedError

    def valid_box(self) -> StateBox:
        k = self.k
        return StateBox((-np.pi,) * k, (np.pi,) * k, (-5.0,) * k, (5.0,) * k)

    # -- bookkeeping ----------------------------------------------------
    @property
    def params(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_params(self, **kw) -> "RobotModel":
        return replace(self, **kw)

    def without_gravity(self) -> "RobotModel":
        return replace(self, gravity=False)


@dataclass(frozen=True)
class DoubleIntegrator(RobotModel):
    """Point mass on a line: mass * xdd = u."""

    mass: float = 1.0
    gravity: bool = True  # nothing to disable; kept for a uniform interface

    name = "double_integrator"
    k = 1
    m = 1
    n_task = 1

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError("mass must be positive")

    def mass_matrix(self, q):
        return np.array([[self.mass]])

    def coriolis_matrix(self, q, qdot):
        return np.zeros((1, 1))

    def gravity_vector(self, q):
        return np.zeros(1)

    def actuation_matrix(self, q):
        return np.eye(1)

    def potential_energy(self, q):
        return 0.0

    def task_map(self, q):
        return np.array([q[0]]), np.eye(1)

    def task_hessian(self, q):
        return np.zeros((1, 1, 1))

    def valid_box(self):
        return StateBox((-5.0,), (5.0,), (-5.0,), (5.0,))


@dataclass(frozen=True)
class TwoLinkArm(RobotModel):
    """Planar 2R arm in a vertical plane, point masses at the link tips.

    ``q1`` is measured from the horizontal, ``q2`` relative to link 1; the
    task map is the tip position ``(x, y)`` with ``y`` pointing up.
    """

    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    g: float = 9.81
    gravity: bool = True

    name = "two_link_arm"
    k = 2
    m = 2
    n_task = 2

    def __post_init__(self):
        if min(self.m1, self.m2, self.l1, self.l2) <= 0:
            raise DomainError("masses and lengths must be positive")

    @property
    def _g(self) -> float:
        return self.g if self.gravity else 0.0

    def mass_matrix(self, q):
        m1, m2, l1, l2 = self.m1, self.m2, self.l1, self.l2
        c2 = math.cos(q[1])
        d11 = m1 * l1**2 + m2 * (l1**2 + 2 * l1 * l2 * c2 + l2**2)
        d12 = m2 * (l1 * l2 * c2 + l2**2)
        d22 = m2 * l2**2
        return np.array([[d11, d12], [d12, d22]])

    def coriolis_matrix(self, q, qdot):
        hh = -self.m2 * self.l1 * self.l2 * math.sin(q[1])
        return np.array(
            [[hh * qdot[1], hh * (qdot[0] + qdot[1])], [-hh * qdot[0], 0.0]]
        )

    def gravity_vector(self, q):
        g, m1, m2, l1, l2 = self._g, self.m1, self.m2, self.l1, self.l2
        c1 = math.cos(q[0])
        c12 = math.cos(q[0] + q[1])
        return np.array([(m1 + m2) * g * l1 * c1 + m2 * g * l2 * c12, m2 * g * l2 * c12])

    def actuation_matrix(self, q):
        return np.eye(2)

    def potential_energy(self, q):
        g = self._g
        y1 = self.l1 * math.sin(q[0])
        y2 = y1 + self.l2 * math.sin(q[0] + q[1])
        return float(self.m1 * g * y1 + self.m2 * g * y2)

    def task_map(self, q):
        l1, l2 = self.l1, self.l2
        s1, c1 = math.sin(q[0]), math.cos(q[0])
        s12, c12 = math.sin(q[0] + q[1]), math.cos(q[0] + q[1])
        x = np.array([l1 * c1 + l2 * c12, l1 * s1 + l2 * s12])
        J = np.array([[-l1 * s1 - l2 * s12, -l2 * s12], [l1 * c1 + l2 * c12, l2 * c12]])
        return x, J

    def task_hessian(self, q):
        l1, l2 = self.l1, self.l2
        s1, c1 = math.sin(q[0]), math.cos(q[0])
        s12, c12 = math.sin(q[0] + q[1]), math.cos(q[0] + q[1])
        Hx = np.array([[-l1 * c1 - l2 * c12, -l2 * c12], [-l2 * c12, -l2 * c12]])
        Hy = np.array([[-l1 * s1 - l2 * s12, -l2 * s12], [-l2 * s12, -l2 * s12]])
        return np.stack([Hx, Hy])


@dataclass(frozen=True)
class CartPole(RobotModel):
    """Cart on a rail with a point-mass pole; q = (x, theta).

    ``theta = 0`` hangs down and ``theta = pi`` is upright.  The force acts on
    the cart only (B = [1, 0]^T).  The task variable is the cart position.
    """

    m_c: float = 1.0
    m_p: float = 0.2
    l: float = 0.5
    g: float = 9.81
    gravity: bool = True

    name = "cartpole"
    k = 2
    m = 1
    n_task = 1

    def __post_init__(self):
        if min(self.m_c, self.m_p, self.l) <= 0:
            raise DomainError("masses and length must be positive")

    @property
    def _g(self) -> float:
        return self.g if self.gravity else 0.0

    def mass_matrix(self, q):
        mt = self.m_c + self.m_p
        off = self.m_p * self.l * math.cos(q[1])
        return np.array([[mt, off], [off, self.m_p * self.l**2]])

    def coriolis_matrix(self, q, qdot):
        return np.array([[0.0, -self.m_p * self.l * math.sin(q[1]) * qdot[1]], [0.0, 0.0]])

    def gravity_vector(self, q):
        return np.array([0.0, self.m_p * self._g * self.l * math.sin(q[1])])

    def actuation_matrix(self, q):
        return np.array([[1.0], [0.0]])

    def potential_energy(self, q):
        return float(-self.m_p * self._g * self.l * math.cos(q[1]))

    def task_map(self, q):
        return np.array([q[0]]), np.array([[1.0, 0.0]])

    def task_hessian(self, q):
        return np.zeros((1, 2, 2))

    def valid_box(self):
        return StateBox((-5.0, 0.0), (5.0, 2 * np.pi), (-5.0, -5.0), (5.0, 5.0))


MODEL_REGISTRY: dict[str, Callable[..., RobotModel]] = {
    "double_integrator": DoubleIntegrator,
    "two_link_arm": TwoLinkArm,
    "cartpole": CartPole,
}


def make_model(model_id: str, **params) -> RobotModel:
    try:
        cls = MODEL_REGISTRY[model_id]
    except KeyError:
        raise DomainError(f"unknown model '{model_id}'") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {model_id}: {exc}") from None


# ---------------------------------------------------------------------------
# functional surface with domain checks
# ---------------------------------------------------------------------------

def mass_matrix(model: RobotModel, q) -> np.ndarray:
    return model.mass_matrix(_vec(q, model.k, "q"))


def coriolis_matrix(model: RobotModel, q, qdot) -> np.ndarray:
    return model.coriolis_matrix(_vec(q, model.k, "q"), _vec(qdot, model.k, "qdot"))


def gravity_vector(model: RobotModel, q) -> np.ndarray:
    return model.gravity_vector(_vec(q, model.k, "q"))


def actuation_matrix(model: RobotModel, q=None) -> np.ndarray:
    return model.actuation_matrix(None if q is None else np.asarray(q, dtype=float))


def forward_dynamics(model: RobotModel, s: State, u) -> np.ndarray:
    """Solve D(q) qdd = B u - C(q, qd) qd - G(q) for the accelerations."""
    q = _vec(s.q, model.k, "q")
    qd = _vec(s.qdot, model.k, "qdot")
    u = _vec(u, model.m, "u")
    D = model.mass_matrix(q)
    rhs = model.actuation_matrix(q) @ u - model.coriolis_matrix(q, qd) @ qd - model.gravity_vector(q)
    return np.linalg.solve(D, rhs)


def task_map(model: RobotModel, q) -> tuple[np.ndarray, np.ndarray]:
    return model.task_map(_vec(q, model.k, "q"))
