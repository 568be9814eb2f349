"""Reference solvers and bound estimators used to cross-check the filters.

Nothing here is on the control path.  The routines deliberately take a
different computational route from :mod:`kincbf.filters`: constraints are
rebuilt by probing the barrier derivative with unit inputs, the reduced
barrier dynamics come from operational-space identities instead of a Schur
partition, and the QP is solved as a Euclidean projection (or by brute force
on a grid).
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .barrier import ClassKappa, EnergyBarrier, UnderactuatedBarrier, hdot_D
from .errors import BoundError, InfeasibleQPError, KincbfError
from .models import RobotModel, State, StateBox
from .reduction import EPS_COUPLING, schur_reduce

__all__ = [
    "HalfspaceQP",
    "solve_single_constraint_qp",
    "perturbation_optimal",
    "grid_search_qp",
    "OperationalTerms",
    "operational_terms",
    "energy_halfspace",
    "velocity_command_halfspace",
    "velocity_halfspace",
    "underactuated_halfspace",
    "UnderactuatedBounds",
    "CoverageWarning",
    "bound_estimator",
]


@dataclass(frozen=True)
class HalfspaceQP:
    """``min ||u - u_des||^2`` subject to ``a^T u >= b``."""

    u_des: np.ndarray
    a: np.ndarray
    b: float

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u_des, dtype=float))
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if u.ndim != 1 or u.shape != a.shape or u.size < 1:
            raise ValueError("u_des and a must be vectors of equal length >= 1")
        object.__setattr__(self, "u_des", u)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def m(self) -> int:
        return self.u_des.size

    def objective(self, u) -> float:
        d = np.asarray(u, dtype=float) - self.u_des
        return float(d @ d)

    def feasible(self, u, tol=0.0) -> bool:
        return float(self.a @ u) >= self.b - tol


def solve_single_constraint_qp(p: HalfspaceQP) -> np.ndarray:
    """Euclidean projection of ``u_des`` onto ``{u : a^T u >= b}``.

    Stationarity ``u - u_des = mu a`` with complementary slackness gives
    ``mu = max(0, (b - a^T u_des) / ||a||^2)``.
    """
    slack = p.b - float(p.a @ p.u_des)
    if slack <= 0.0:
        return p.u_des.copy()
    nrm2 = float(p.a @ p.a)
    if nrm2 == 0.0:
        raise InfeasibleQPError(f"a = 0 but b = {p.b:.3e} > 0")
    return p.u_des + p.a * (slack / nrm2)


def perturbation_optimal(p: HalfspaceQP, u, rng, n=1000, radius=1e-3) -> bool:
    """Sampled optimality check: no feasible neighbor of ``u`` does better."""
    u = np.asarray(u, dtype=float)
    base = p.objective(u)
    steps = rng.normal(size=(n, p.m))
    steps *= (radius * rng.uniform(size=(n, 1)) ** (1.0 / p.m)) / np.linalg.norm(steps, axis=1, keepdims=True)
    cand = u + steps
    feas = cand @ p.a >= p.b
    d = cand[feas] - p.u_des
    obj = np.einsum("ij,ij->i", d, d)
    return bool(np.all(obj >= base - 1e-12 * max(1.0, base)))


def grid_search_qp(p: HalfspaceQP, radius: float, resolution: float) -> np.ndarray:
    """Best feasible point of a uniform grid around ``u_des`` (``m <= 3``)."""
    if p.m > 3:
        raise ValueError("grid search only supports m <= 3")
    if not (radius > 0 and resolution > 0):
        raise ValueError("radius and resolution must be positive")
    n = int(math.floor(radius / resolution))
    ticks = resolution * np.arange(-n, n + 1)
    axes = np.meshgrid(*([ticks] * p.m), indexing="ij")
    pts = np.stack([ax.ravel() for ax in axes], axis=1) + p.u_des
    feas = pts @ p.a >= p.b
    if not feas.any():
        raise InfeasibleQPError(
            f"no feasible grid point within radius {radius} at resolution {resolution}"
        )
    cand = pts[feas]
    d = cand - p.u_des
    return cand[np.argmin(np.einsum("ij,ij->i", d, d))]


# ---------------------------------------------------------------------------
# independent constraint construction
# ---------------------------------------------------------------------------

def _affine_probe(fn, m):
    """Offset and slope of an affine map R^m -> R from m + 1 evaluations.

    ``fn`` receives the probe inputs as the columns of an ``m x (m+1)``
    matrix (zero, then the unit vectors).
    """
    vals = np.asarray(fn(np.hstack([np.zeros((m, 1)), np.eye(m)])), dtype=float)
    return float(vals[0]), vals[1:] - vals[0]


def energy_halfspace(b: EnergyBarrier, s: State, a: ClassKappa, u_des) -> tuple[HalfspaceQP, float]:
    """Torque-level energy constraint as a halfspace; also returns ``h_D``."""
    D = b.model.mass_matrix(s.q)
    h_D = -0.5 * s.qdot @ D @ s.qdot + b.alpha_e * b.kin.value(s.q)
    f0, slope = _affine_probe(lambda u: hdot_D(b, s, u), b.model.m)
    return HalfspaceQP(u_des, slope, -a(h_D) - f0), h_D


def velocity_command_halfspace(
    b: EnergyBarrier, s: State, a: ClassKappa, K_vel, qdot_des, feedforward=None
) -> tuple[HalfspaceQP, float]:
    """Energy constraint on the velocity command fed to ``u = -K (qd - v) [+ ff]``."""
    K = np.atleast_2d(np.asarray(K_vel, dtype=float))
    ff = np.zeros(b.model.m) if feedforward is None else np.asarray(feedforward, dtype=float)
    D = b.model.mass_matrix(s.q)
    h_D = -0.5 * s.qdot @ D @ s.qdot + b.alpha_e * b.kin.value(s.q)
    f0, slope = _affine_probe(lambda V: hdot_D(b, s, ff[:, None] - K @ (s.qdot[:, None] - V)), b.model.k)
    return HalfspaceQP(qdot_des, slope, -a(h_D) - f0), h_D


def velocity_halfspace(kin, q, a: ClassKappa, qdot_des) -> HalfspaceQP:
    q = np.asarray(q, dtype=float)
    f0, slope = _affine_probe(lambda V: kin.jacobian(q) @ V, q.size)
    return HalfspaceQP(qdot_des, slope, -a(kin.value(q)) - f0)


@dataclass(frozen=True)
class OperationalTerms:
    """Scalar barrier dynamics ``D_h hdd = B_h u - drift`` (``drift = C_h qd + G_h``)."""

    D_h: float
    B_h: np.ndarray
    drift: float
    G_h: float
    D_h_dot: float
    hdot: float


def _mass_rate(model: RobotModel, q, qd, step=1e-3):
    # fourth-order central difference of D along qd
    D = model.mass_matrix
    return (-D(q + 2 * step * qd) + 8 * D(q + step * qd) - 8 * D(q - step * qd) + D(q - 2 * step * qd)) / (12 * step)


def _jac_rate(kin, q, qd, step=1e-3):
    J = kin.jacobian
    return (-J(q + 2 * step * qd) + 8 * J(q + step * qd) - 8 * J(q - step * qd) + J(q - 2 * step * qd)) / (12 * step)


def operational_terms(model: RobotModel, kin, q, qd) -> OperationalTerms:
    """Barrier dynamics through the inverse-inertia projection.

    ``hdd = J_h D^-1 (B u - C qd - G) + Jdot_h qd`` and
    ``D_h = 1 / (J_h D^-1 J_h^T)``.  Rates of ``D`` and ``J_h`` are taken by
    finite differences so that no model-supplied derivative is reused.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    J = kin.jacobian(q)
    D = model.mass_matrix(q)
    x = np.linalg.solve(D, J)  # D^-1 J_h^T
    inv_Dh = float(J @ x)
    D_h = 1.0 / inv_Dh
    B = model.actuation_matrix(q)
    C = model.coriolis_matrix(q, qd)
    G = model.gravity_vector(q)
    Jdot = _jac_rate(kin, q, qd)
    B_h = D_h * (x @ B)
    G_h = D_h * float(x @ G)
    drift = D_h * (float(x @ (C @ qd + G)) - float(Jdot @ qd))
    Ddot = _mass_rate(model, q, qd)
    inv_rate = 2.0 * float(Jdot @ x) - float(x @ Ddot @ x)
    return OperationalTerms(D_h, B_h, drift, G_h, -D_h * D_h * inv_rate, float(J @ qd))


def underactuated_halfspace(
    b: UnderactuatedBarrier, s: State, a: ClassKappa, u_des
) -> tuple[HalfspaceQP, float]:
    h = b.kin.value(s.q)
    ot = operational_terms(b.model, b.kin, s.q, s.qdot)
    hd = ot.hdot
    h_hat = -0.5 * ot.D_h * hd * hd + b.alpha_e * h
    # d/dt h_hat = -1/2 Ddot_h hd^2 - hd D_h hdd + alpha_e hd, with D_h hdd = B_h u - drift
    f0 = -0.5 * ot.D_h_dot * hd * hd + hd * ot.drift + b.alpha_e * hd
    return HalfspaceQP(u_des, -hd * ot.B_h, -a(h_hat) - f0), h_hat


# ---------------------------------------------------------------------------
# sampled bounds for the robust filters
# ---------------------------------------------------------------------------

class CoverageWarning(UserWarning):
    """Part of the sampled box lies outside the region where the bound exists."""


@dataclass(frozen=True)
class UnderactuatedBounds:
    c_l: float
    c_u: float
    D_h_min: float
    D_h_max: float
    coverage: float


QUANTITIES = ("half_lambda_max_D", "lambda_max_D", "norm_G", "D_h_bounds")


def _cache_key(model, box, quantity, factor, n_log2, seed, kin):
    params = ",".join(f"{k}={v!r}" for k, v in sorted(model.params.items()))
    kdesc = "" if kin is None else repr(sorted(kin.descriptor.items()))
    return f"{model.name}({params})|{box.key()}|{quantity}|{factor!r}|{n_log2}|{seed}|{kdesc}"


_MEMO: dict = {}


def _cache_read(path, key):
    if key in _MEMO:
        return _MEMO[key]
    if path is None or not os.path.exists(path):
        return None
    with open(path) as fh:
        for line in fh:
            k, _, v = line.rstrip("\n").rpartition("\t")
            if k == key:
                _MEMO[key] = [float(t) for t in v.split(",")]
                return _MEMO[key]
    return None


def _cache_write(path, key, values):
    _MEMO[key] = [float(v) for v in values]
    if path is None:
        return
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "a") as fh:
        fh.write(f"{key}\t{','.join(repr(float(v)) for v in values)}\n")


def _sobol(lo, hi, n_log2, seed):
    sampler = qmc.Sobol(d=lo.size, scramble=True, seed=seed)
    return qmc.scale(sampler.random_base2(n_log2), lo, hi)


def bound_estimator(
    model: RobotModel,
    box: StateBox,
    quantity: str,
    safety_factor: float = 1.25,
    *,
    kin=None,
    w_map=None,
    n_log2: int = 14,
    seed: int = 0,
    cache_path: str | None = None,
):
    """Sampled supremum of a model quantity over ``box`` times ``safety_factor``.

    ``half_lambda_max_D``, ``lambda_max_D`` and ``norm_G`` depend on ``q``
    only and return a float.  ``D_h_bounds`` samples the full state box and
    returns :class:`UnderactuatedBounds` for a barrier ``kin``: ``c_l`` bounds
    ``Ddot_h`` from above and ``c_u`` bounds ``D_h``, ``||C_h|| / ||qd||`` and
    ``|G_h|``.
    """
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity '{quantity}', choose from {QUANTITIES}")
    if not safety_factor >= 1.0:
        raise BoundError("safety_factor must be >= 1")
    if box.k != model.k:
        raise BoundError(f"box has k={box.k}, model has k={model.k}")
    if n_log2 < 14:
        raise BoundError("use at least 2^14 samples")
    if quantity == "D_h_bounds" and kin is None:
        raise BoundError("D_h_bounds needs a kinematic barrier")

    key = _cache_key(model, box, quantity, safety_factor, n_log2, seed, kin)
    cached = _cache_read(cache_path, key)
    if cached is not None:
        return UnderactuatedBounds(*cached) if quantity == "D_h_bounds" else cached[0]

    if quantity == "D_h_bounds":
        result = _reduced_bounds(model, box, kin, w_map, safety_factor, n_log2, seed)
        _cache_write(cache_path, key, [result.c_l, result.c_u, result.D_h_min, result.D_h_max, result.coverage])
        return result

    q_lo, q_hi = np.array(box.q_lo), np.array(box.q_hi)
    if np.any(q_hi <= q_lo):
        raise BoundError("degenerate configuration box")
    qs = _sobol(q_lo, q_hi, n_log2, seed)
    if quantity == "norm_G":
        vals = [np.linalg.norm(model.gravity_vector(q)) for q in qs]
    else:
        scale = 0.5 if quantity == "half_lambda_max_D" else 1.0
        vals = [scale * np.linalg.eigvalsh(model.mass_matrix(q))[-1] for q in qs]
    result = safety_factor * float(max(vals))
    _cache_write(cache_path, key, [result])
    return result


def _reduced_bounds(model, box, kin, w_map, factor, n_log2, seed):
    lo, hi = box.lo, box.hi
    if np.any(hi <= lo):
        raise BoundError("degenerate state box")
    if w_map is None:
        w_map = UnderactuatedBarrier(model, kin).w_map
    k = model.k
    pts = _sobol(lo, hi, n_log2, seed)
    D_h, D_h_dot, c_ratio, g_abs = [], [], [], []
    for p in pts:
        q, qd = p[:k], p[k:]
        try:
            red = schur_reduce(model, kin, w_map, q, qd, check_coupling=False)
        except KincbfError:
            continue
        if np.linalg.norm(red.B_h) < EPS_COUPLING:
            continue
        D_h.append(red.D_h)
        D_h_dot.append(red.D_h_dot)
        speed = np.linalg.norm(qd)
        if speed > 0:
            c_ratio.append(np.linalg.norm(red.C_h) / speed)
        g_abs.append(abs(red.G_h))
    coverage = len(D_h) / len(pts)
    if not D_h:
        raise BoundError("reduction undefined everywhere in the box")
    if coverage < 1.0:
        warnings.warn(
            f"barrier dynamics defined on {100 * coverage:.1f}% of the sampled box only",
            CoverageWarning,
            stacklevel=3,
        )
    c_l = factor * max(0.0, max(D_h_dot))
    c_u = factor * max(max(D_h), max(c_ratio, default=0.0), max(g_abs))
    return UnderactuatedBounds(float(c_l), float(c_u), float(min(D_h)), float(max(D_h)), float(coverage))
