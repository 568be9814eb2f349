"""Kinematic safety constraints and their energy-based extensions.

A :class:`KinematicBarrier` is a configuration-only function ``h(q)`` whose
0-superlevel set is the safe set.  :class:`EnergyBarrier` trades kinetic
energy against that margin::

    h_D(q, qd) = -1/2 qd^T D(q) qd + alpha_e h(q)

and :class:`UnderactuatedBarrier` does the same along the barrier coordinate
only, using the reduced inertia ``D_h`` of the Schur-complement reduction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import BarrierParameterError, DomainError
from .models import RobotModel, State
from .reduction import schur_reduce

__all__ = [
    "ClassKappa",
    "KinematicBarrier",
    "EnergyBarrier",
    "UnderactuatedBarrier",
    "Membership",
    "barrier_catalog",
    "coordinate_map",
    "alpha_eval",
    "energy_h_D",
    "hdot_D",
    "membership",
    "underactuated_h_hat",
]


@dataclass(frozen=True)
class ClassKappa:
    """Extended class-K function: ``gamma*s`` (linear) or ``gamma*s**3`` (cubic)."""

    kind: str = "linear"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "cubic"):
            raise BarrierParameterError(f"unknown class-K kind '{self.kind}'")
        if not self.gamma > 0:
            raise BarrierParameterError("class-K gain must be positive")

    def __call__(self, s):
        if self.kind == "linear":
            return self.gamma * s
        return self.gamma * s**3


def alpha_eval(a: ClassKappa, s: float) -> float:
    return a(s)


@dataclass(frozen=True)
class KinematicBarrier:
    """``h(q)`` with analytic gradient and Hessian.

    Built through :func:`barrier_catalog`; ``descriptor`` records the catalog
    entry so scenarios can be serialized back.
    """

    descriptor: dict
    _h: Callable = field(repr=False, compare=False)
    _jac: Callable = field(repr=False, compare=False)
    _hess: Callable = field(repr=False, compare=False)

    def value(self, q) -> float:
        return float(self._h(np.asarray(q, dtype=float)))

    def jacobian(self, q) -> np.ndarray:
        """Gradient as a length-k array (the 1 x k row J_h)."""
        return np.asarray(self._jac(np.asarray(q, dtype=float)), dtype=float)

    def hessian(self, q) -> np.ndarray:
        return np.asarray(self._hess(np.asarray(q, dtype=float)), dtype=float)

    @property
    def kind(self) -> str:
        return self.descriptor["type"]


def _positive(name, value):
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise BarrierParameterError(f"{name} must be positive, got {value}")
    return value


def barrier_catalog(descriptor: dict, model: RobotModel | None = None) -> KinematicBarrier:
    """Build a barrier from a descriptor dict.

    Supported ``type`` values:

    ``sphere_obstacle``  (``center``, ``d``)
        ``h = ||y(q) - center||^2 - d^2`` on the model's task map.
    ``angle_box``  (``width``, optional ``center`` = pi, ``index`` = k-1)
        ``h = width^2 - (q_i - center)^2``.
    ``angle_band``  (same parameters)
        ``h = width - |q_i - center|``; same safe set as ``angle_box`` but
        with a gradient that never vanishes.
    ``position_box``  (``limit``, optional ``index`` = 0)
        ``h = limit^2 - q_i^2``.
    """
    desc = dict(descriptor)
    kind = desc.get("type")
    k = model.k if model is not None else None

    if kind == "sphere_obstacle":
        if model is None:
            raise BarrierParameterError("sphere_obstacle needs a model for its task map")
        d = _positive("d", desc.get("d", float("nan")))
        center = np.asarray(desc["center"], dtype=float)
        if center.shape != (model.n_task,):
            raise BarrierParameterError(
                f"center must have length {model.n_task}, got {center.shape}"
            )
        desc.update(d=d, center=center.tolist())

        def h(q):
            x, _ = model.task_map(q)
            r = x - center
            return r @ r - d * d

        def jac(q):
            x, J = model.task_map(q)
            return 2.0 * (x - center) @ J

        def hess(q):
            x, J = model.task_map(q)
            H = model.task_hessian(q)
            return 2.0 * J.T @ J + 2.0 * np.tensordot(x - center, H, axes=1)

        return KinematicBarrier(desc, h, jac, hess)

    if kind in ("angle_box", "angle_band", "position_box"):
        if kind == "position_box":
            width = _positive("limit", desc.get("limit", float("nan")))
            center = 0.0
            index = int(desc.get("index", 0))
            desc.update(limit=width, index=index)
        else:
            width = _positive("width", desc.get("width", float("nan")))
            center = float(desc.get("center", np.pi))
            index = int(desc.get("index", (k - 1) if k else 0))
            desc.update(width=width, center=center, index=index)
        if k is not None and not 0 <= index < k:
            raise BarrierParameterError(f"index {index} out of range for k={k}")

        if kind == "angle_band":

            def h(q):
                return width - abs(q[index] - center)

            def jac(q):
                g = np.zeros(q.shape[0])
                # one-sided derivative at the kink; the kink sits at max h, far from the boundary
                g[index] = -1.0 if q[index] >= center else 1.0
                return g

            def hess(q):
                return np.zeros((q.shape[0], q.shape[0]))

        else:

            def h(q):
                return width * width - (q[index] - center) ** 2

            def jac(q):
                g = np.zeros(q.shape[0])
                g[index] = -2.0 * (q[index] - center)
                return g

            def hess(q):
                H = np.zeros((q.shape[0], q.shape[0]))
                H[index, index] = -2.0
                return H

        return KinematicBarrier(desc, h, jac, hess)

    raise BarrierParameterError(f"unknown barrier type '{kind}'")


def coordinate_map(indices) -> Callable:
    """``w(q) = q[indices]`` with its (constant) Jacobian."""
    idx = list(indices)

    def w(q):
        q = np.asarray(q, dtype=float)
        J = np.zeros((len(idx), q.shape[0]))
        J[np.arange(len(idx)), idx] = 1.0
        return q[idx], J

    w.indices = tuple(idx)
    return w


@dataclass(frozen=True)
class EnergyBarrier:
    model: RobotModel
    kin: KinematicBarrier
    alpha_e: float = 1.0

    def __post_init__(self):
        if not self.alpha_e > 0:
            raise BarrierParameterError("alpha_e must be positive")


@dataclass(frozen=True)
class UnderactuatedBarrier:
    model: RobotModel
    kin: KinematicBarrier
    alpha_e: float = 1.0
    w_map: Callable | None = None

    def __post_init__(self):
        if not self.alpha_e > 0:
            raise BarrierParameterError("alpha_e must be positive")
        if self.w_map is None:
            idx = self.kin.descriptor.get("index")
            k = self.model.k
            rest = [i for i in range(k) if i != idx] if idx is not None else list(range(k - 1))
            object.__setattr__(self, "w_map", coordinate_map(rest))


class Membership(NamedTuple):
    in_S: bool
    in_S_D: bool


def _state(s, k) -> State:
    if not isinstance(s, State):
        raise DomainError("expected a State")
    if s.k != k:
        raise DomainError(f"state has k={s.k}, model has k={k}")
    return s


def energy_h_D(b: EnergyBarrier, s: State) -> float:
    s = _state(s, b.model.k)
    D = b.model.mass_matrix(s.q)
    return float(-0.5 * s.qdot @ D @ s.qdot + b.alpha_e * b.kin.value(s.q))


def hdot_D(b: EnergyBarrier, s: State, u) -> float:
    """Time derivative of h_D along the dynamics under input ``u``.

    The Coriolis terms cancel by skew symmetry of Ddot - 2C, leaving
    ``-qd^T B u + G^T qd + alpha_e J_h qd``.  A 2-D ``u`` holds one input
    per column and gives one value per column.
    """
    s = _state(s, b.model.k)
    u = np.asarray(u, dtype=float)
    batch = u.ndim == 2
    if not batch:
        u = u.reshape(-1)
    if u.shape[0] != b.model.m:
        raise DomainError(f"u must have length {b.model.m}")
    q, qd = s.q, s.qdot
    B = b.model.actuation_matrix(q)
    G = b.model.gravity_vector(q)
    out = -qd @ (B @ u) + float(G @ qd + b.alpha_e * b.kin.jacobian(q) @ qd)
    return out if batch else float(out)


def membership(b: EnergyBarrier | UnderactuatedBarrier, s: State) -> Membership:
    in_S = b.kin.value(s.q) >= 0.0
    if isinstance(b, UnderactuatedBarrier):
        hd = underactuated_h_hat(b, s)
    else:
        hd = energy_h_D(b, s)
    return Membership(bool(in_S), bool(hd >= 0.0))


def underactuated_h_hat(b: UnderactuatedBarrier, s: State) -> float:
    """``-1/2 hdot D_h hdot + alpha_e h`` with D_h from the Schur reduction."""
    s = _state(s, b.model.k)
    h = b.kin.value(s.q)
    hdot = float(b.kin.jacobian(s.q) @ s.qdot)
    if hdot == 0.0:
        return b.alpha_e * h
    red = schur_reduce(b.model, b.kin, b.w_map, s.q, s.qdot)
    return -0.5 * hdot * red.D_h * hdot + b.alpha_e * h
