"""Fixed-step closed-loop simulation.

A :class:`Scenario` names a model, a barrier, a filter, a tracking task and
an initial state.  :func:`run` integrates it with RK4 under zero-order hold
and returns a :class:`Trace` plus :class:`Metrics`.  Two interchangeable
backends exist: the compiled rollout kernel (default when built) and the
pure-Python loop over the library functions.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .barrier import ClassKappa, EnergyBarrier, UnderactuatedBarrier, barrier_catalog
from .errors import ComparisonError, DivergenceError, DomainError, KincbfError
from .filters import (
    OutsideSafeSetWarning,
    TrackingTask,
    circle_task,
    line_task,
    low_level_pd,
    robust_torque_filter,
    robust_underactuated_filter,
    setpoint_task,
    torque_filter,
    tracking_qdot_des,
    underactuated_filter,
    velocity_command_filter,
    velocity_filter,
)
from .models import RobotModel, State, StateBox, forward_dynamics, make_model
from .qp_oracle import bound_estimator

try:
    from . import _ckernel
except ImportError:  # extension not built; the Python loop is used instead
    _ckernel = None

FILTER_IDS = (
    "none",
    "velocity",
    "torque",
    "robust_torque",
    "velocity_command",
    "underactuated",
    "robust_underactuated",
)
VELOCITY_LEVEL = ("velocity", "velocity_command")
UNDERACTUATED = ("underactuated", "robust_underactuated")
VIOLATION_TOL = 1e-3
DEFAULT_BACKEND = "compiled" if _ckernel is not None else "python"


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if _ckernel is not None else ("python",)


# ---------------------------------------------------------------------------
# scenario description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one closed-loop run.

    Units: angles in rad, lengths in m, masses in kg, time in s.
    ``initial`` holds either explicit ``q``/``qdot`` lists or
    ``{"sample": True, "margin": ..., "velocity_scale": ...}``, in which case
    the start state is drawn from the certified safe set using ``seed``.
    """

    name: str
    model: str
    barrier: dict
    filter: dict
    task: dict
    initial: dict
    model_params: dict = field(default_factory=dict)
    controller: dict = field(default_factory=dict)
    dt: float = 1e-3
    horizon: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError("dt must be positive")
        if not self.horizon >= self.dt:
            raise DomainError("horizon must be at least one step")
        fid = self.filter.get("id")
        if fid not in FILTER_IDS:
            raise DomainError(f"unknown filter '{fid}', choose from {FILTER_IDS}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **kw) -> "Scenario":
        return replace(self, **kw)


@dataclass
class Built:
    """Scenario resolved into library objects."""

    model: RobotModel
    kin: object
    alpha: ClassKappa
    alpha_e: float
    filter_id: str
    fparams: dict
    task: TrackingTask
    kd: float
    kp: float
    state_gains: np.ndarray
    q_goal: np.ndarray | None
    K_vel: np.ndarray
    precomp: bool
    c_u: float
    c_l: float
    mode: str
    energy: EnergyBarrier | None
    under: UnderactuatedBarrier | None


def build_task(desc: dict) -> TrackingTask:
    kind = desc.get("kind")
    lam = float(desc.get("lambda", 1.0))
    if kind == "setpoint":
        return setpoint_task(desc["point"], lam)
    if kind == "line":
        return line_task(desc["start"], desc["velocity"], lam)
    if kind == "circle":
        return circle_task(desc["center"], float(desc["radius"]), float(desc["omega"]),
                           float(desc.get("phase", 0.0)), lam)
    raise DomainError(f"unknown task kind '{kind}'")


def operating_box(model: RobotModel, kin) -> StateBox:
    """State box used for automatic robust constants."""
    box = model.valid_box()
    desc = kin.descriptor
    if desc["type"] in ("angle_box", "angle_band"):
        i = desc["index"]
        lo, hi = list(box.q_lo), list(box.q_hi)
        lo[i], hi[i] = desc["center"] - desc["width"], desc["center"] + desc["width"]
        box = StateBox(tuple(lo), tuple(hi), box.qd_lo, box.qd_hi)
    return box


def build(sc: Scenario, bounds_cache: str | None = None) -> Built:
    model = make_model(sc.model, **sc.model_params)
    kin = barrier_catalog(sc.barrier, model)
    f = dict(sc.filter)
    fid = f["id"]
    ak = f.get("alpha", {}) or {}
    alpha = ClassKappa(ak.get("kind", "linear"), float(ak.get("gamma", 1.0)))
    alpha_e = float(f.get("alpha_e", 1.0))
    k_vel = f.get("K_vel", 10.0)
    K = np.diag(np.broadcast_to(np.asarray(k_vel, dtype=float), (model.k,))).copy()
    energy = EnergyBarrier(model, kin, alpha_e) if model.m == model.k else None
    under = UnderactuatedBarrier(model, kin, alpha_e) if model.m < model.k else None
    if fid in UNDERACTUATED and under is None:
        raise DomainError(f"filter '{fid}' needs an underactuated model")
    if fid in ("velocity", "torque", "robust_torque", "velocity_command") and energy is None:
        raise DomainError(f"filter '{fid}' needs a fully actuated model")

    c_u = c_l = 0.0
    mode = f.get("mode", "keep_gravity")
    if fid == "robust_torque":
        c_u = f.get("c_u", "auto")
        if c_u == "auto":
            # c_u = factor * sampled lambda_max(D)
            c_u = bound_estimator(model, model.valid_box(), "lambda_max_D",
                                  float(f.get("bound_factor", 5.0)), cache_path=bounds_cache)
            if mode == "drop_gravity":
                c_u = max(c_u, bound_estimator(model, model.valid_box(), "norm_G", 1.25,
                                               cache_path=bounds_cache))
        c_u = float(c_u)
    elif fid == "robust_underactuated":
        c_u, c_l = f.get("c_u", "auto"), f.get("c_l", "auto")
        if c_u == "auto" or c_l == "auto":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                bnd = bound_estimator(model, operating_box(model, kin), "D_h_bounds",
                                      float(f.get("bound_factor", 1.25)), kin=kin,
                                      w_map=under.w_map, cache_path=bounds_cache)
            c_u = bnd.c_u if c_u == "auto" else c_u
            c_l = bnd.c_l if c_l == "auto" else c_l
        c_u, c_l = float(c_u), float(c_l)

    ctrl = dict(sc.controller or {})
    kind = ctrl.get("kind", "task")
    if kind not in ("task", "joint_pd"):
        raise DomainError(f"unknown controller kind '{kind}'")
    q_goal = None
    if kind == "joint_pd":
        if model.m < model.k:
            raise DomainError("joint_pd needs a fully actuated model")
        q_goal = np.asarray(ctrl["q_goal"], dtype=float)
        if q_goal.shape != (model.k,):
            raise DomainError(f"q_goal must have length {model.k}")
    return Built(
        model=model, kin=kin, alpha=alpha, alpha_e=alpha_e, filter_id=fid, fparams=f,
        task=build_task(sc.task), kd=float(ctrl.get("kd", 10.0)), kp=float(ctrl.get("kp", 10.0)),
        state_gains=np.asarray(ctrl.get("state_gains", [0.0] * (2 * model.k)), dtype=float),
        q_goal=q_goal,
        K_vel=K, precomp=bool(f.get("precompensate_gravity", fid == "velocity")),
        c_u=c_u, c_l=c_l, mode=mode, energy=energy, under=under,
    )


# ---------------------------------------------------------------------------
# traces and metrics
# ---------------------------------------------------------------------------

@dataclass
class Trace:
    """Per-step log.  ``data`` has one row per record, columns in ``columns``.

    Extra diagnostic columns (``residual``, ``exact_residual``) are kept in
    memory but not written to the CSV.
    """

    columns: list
    data: np.ndarray
    k: int
    n_cmd: int
    m: int
    scenario_hash: str
    version: str = __version__
    certified: str = "hD"
    error: str | None = None
    error_step: int | None = None
    backend: str = "python"

    def col(self, name) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    @property
    def t(self):
        return self.col("t")

    @property
    def q(self):
        i = self.columns.index("q_0")
        return self.data[:, i:i + self.k]

    @property
    def qdot(self):
        i = self.columns.index("qd_0")
        return self.data[:, i:i + self.k]

    @property
    def command(self):
        i = self.columns.index("cmd_0")
        return self.data[:, i:i + self.n_cmd]

    @property
    def u(self):
        i = self.columns.index("u_0")
        return self.data[:, i:i + self.m]

    @property
    def h(self):
        return self.col("h")

    @property
    def hD(self):
        return self.col("hD")

    @property
    def psi(self):
        return self.col("psi")

    @property
    def intervened(self):
        return self.col("intervened").astype(bool)

    @property
    def residual(self):
        return self.col("residual")

    @property
    def exact_residual(self):
        return self.col("exact_residual")

    @property
    def certified_values(self):
        return self.col(self.certified)

    def write_csv(self, path):
        n_csv = self.columns.index("intervened") + 1
        header = ",".join(self.columns[:n_csv])
        tmp = f"{path}.tmp"
        with open(tmp, "w", newline="\n") as fh:
            fh.write(f"# scenario_hash={self.scenario_hash} version={self.version}\n")
            fh.write(header + "\n")
            for row in self.data[:, :n_csv]:
                fh.write(",".join(_fmt(v) for v in row[:-1]) + f",{int(row[-1])}\n")
        os.replace(tmp, path)


def _fmt(v) -> str:
    return "%.17g" % v


def read_trace_csv(path) -> tuple[list, np.ndarray]:
    with open(path) as fh:
        fh.readline()
        cols = fh.readline().strip().split(",")
    return cols, np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)


@dataclass(frozen=True)
class Metrics:
    min_h: float
    min_h_D: float
    violation_steps: int
    intervention_fraction: float
    tracking_rms: float
    max_command_norm: float
    steps: int
    error: str | None = None

    def to_text(self) -> str:
        return "\n".join(f"{k}={_metric_fmt(v)}" for k, v in asdict(self).items()) + "\n"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def _metric_fmt(v):
    if isinstance(v, float):
        return _fmt(v)
    return "" if v is None else str(v)


def compute_metrics(tr: Trace, task: TrackingTask, model: RobotModel, tol=VIOLATION_TOL) -> Metrics:
    n = tr.data.shape[0]
    cert = tr.certified_values
    err = [np.linalg.norm(model.task_map(q)[0] - task.x_d(t)) for t, q in zip(tr.t, tr.q)]
    return Metrics(
        min_h=float(tr.h.min()),
        min_h_D=float(tr.hD.min()),
        violation_steps=int(np.count_nonzero(cert < -tol)),
        intervention_fraction=float(tr.intervened.mean()),
        tracking_rms=float(np.sqrt(np.mean(np.square(err)))),
        max_command_norm=float(np.linalg.norm(tr.command, axis=1).max()),
        steps=n,
        error=tr.error,
    )


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

def rk4_step(model: RobotModel, s: State, u, dt: float) -> State:
    """Classical RK4 step with ``u`` held constant over the step."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    q, qd = _rk4(model, s.q, s.qdot, np.asarray(u, dtype=float), dt)
    return State(q, qd)


def _accel(model, q, qd, u):
    D = model.mass_matrix(q)
    rhs = model.actuation_matrix(q) @ u - model.coriolis_matrix(q, qd) @ qd - model.gravity_vector(q)
    return np.linalg.solve(D, rhs)


def _rk4(model, q, qd, u, dt):
    k1q, k1v = qd, _accel(model, q, qd, u)
    q2, v2 = q + 0.5 * dt * k1q, qd + 0.5 * dt * k1v
    k2q, k2v = v2, _accel(model, q2, v2, u)
    q3, v3 = q + 0.5 * dt * k2q, qd + 0.5 * dt * k2v
    k3q, k3v = v3, _accel(model, q3, v3, u)
    q4, v4 = q + dt * k3q, qd + dt * k3v
    k4q, k4v = v4, _accel(model, q4, v4, u)
    qn = q + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
    vn = qd + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    if not (np.all(np.isfinite(qn)) and np.all(np.isfinite(vn))):
        raise DivergenceError("integrator produced a non-finite state")
    return qn, vn


# ---------------------------------------------------------------------------
# control law
# ---------------------------------------------------------------------------

def certified_value(bt: Built, q, qd) -> float:
    """``h_D`` for fully actuated models, ``h_hat_D`` otherwise.

    The reduced inertia is evaluated as ``1 / (J_h D^-1 J_h^T)`` so the value
    stays finite where the barrier coordinate change degenerates.
    """
    h = bt.kin.value(q)
    D = bt.model.mass_matrix(q)
    if bt.under is None:
        return float(-0.5 * qd @ D @ qd + bt.alpha_e * h)
    J = bt.kin.jacobian(q)
    hd = float(J @ qd)
    if hd == 0.0:
        return bt.alpha_e * h
    return -0.5 * hd * hd / float(J @ np.linalg.solve(D, J)) + bt.alpha_e * h


def tightened_value(bt: Built, q, qd) -> float:
    """Surrogate barrier the robust filters keep nonnegative.

    Equals the certified value for the exact filters.
    """
    if bt.filter_id == "robust_torque":
        return float(-bt.c_u * (qd @ qd) + bt.alpha_e * bt.kin.value(q))
    if bt.filter_id == "robust_underactuated":
        hd = float(bt.kin.jacobian(q) @ qd)
        return -bt.c_u * hd * hd + bt.alpha_e * bt.kin.value(q)
    return certified_value(bt, q, qd)


UPRIGHT = math.pi


def desired_command(bt: Built, q, qd, t):
    """Nominal (unfiltered) command.

    Fully actuated models track the task through the velocity reference
    (returned as is for velocity-level filters, else turned into a
    gravity-compensated torque).  With a ``joint_pd`` controller the
    reference is ``-kp (q - q_goal)`` and the torque is the gravity-compensated
    PD law ``G - kp (q - q_goal) - kd qd``.  The cart-pole uses full state feedback
    ``u = -K (z - z_ref)`` with ``z = (x, theta, xd, thetad)`` and
    ``z_ref = (x_d, pi, xd_d, 0)``.
    """
    model = bt.model
    if model.m < model.k:
        x_d, xd_d = bt.task.x_d(t)[0], bt.task.xdot_d(t)[0]
        err = np.array([q[0] - x_d, q[1] - UPRIGHT, qd[0] - xd_d, qd[1]])
        return np.array([-(bt.state_gains @ err)])
    G = model.gravity_vector(q)
    if bt.q_goal is not None:
        if bt.filter_id in VELOCITY_LEVEL:
            return -bt.kp * (q - bt.q_goal)
        return np.linalg.solve(model.actuation_matrix(q), G - bt.kp * (q - bt.q_goal) - bt.kd * qd)
    qd_des = tracking_qdot_des(model, q, t, bt.task)
    if bt.filter_id in VELOCITY_LEVEL:
        return qd_des
    return np.linalg.solve(model.actuation_matrix(q), G + bt.kd * (qd_des - qd))


def control_step(bt: Built, q, qd, t):
    """Returns (command, applied input, psi, intervened, residual, exact residual)."""
    model = bt.model
    fid = bt.filter_id
    cmd_des = desired_command(bt, q, qd, t)
    s = State(q, qd)
    if fid == "none":
        out = None
        cmd = cmd_des
    elif fid == "velocity":
        out = velocity_filter(q, t, bt.kin, bt.alpha, cmd_des)
    elif fid == "torque":
        out = torque_filter(bt.energy, s, bt.alpha, cmd_des)
    elif fid == "robust_torque":
        out = robust_torque_filter(bt.energy, s, bt.alpha, cmd_des, bt.c_u, bt.mode)
    elif fid == "velocity_command":
        out = velocity_command_filter(bt.energy, s, bt.alpha, bt.K_vel, cmd_des,
                                      precompensate_gravity=bt.precomp)
    elif fid == "underactuated":
        out = underactuated_filter(bt.under, s, bt.alpha, cmd_des)
    else:
        out = robust_underactuated_filter(bt.under, s, bt.alpha, cmd_des, bt.c_l, bt.c_u)
    if out is not None:
        cmd = out.command
    if fid in VELOCITY_LEVEL:
        ff = np.linalg.solve(model.actuation_matrix(q), model.gravity_vector(q)) if bt.precomp else None
        u = low_level_pd(qd, cmd, bt.K_vel, ff)
    else:
        u = cmd
    if out is None:
        return cmd, u, math.nan, False, math.nan, math.nan
    return cmd, u, out.psi, out.intervened, out.constraint_residual, out.exact_residual


# ---------------------------------------------------------------------------
# initial states
# ---------------------------------------------------------------------------

def sample_initial_states(bt: Built, n: int, rng, margin=0.05, velocity_scale=1.0,
                          box: StateBox | None = None, max_tries=100000) -> list[State]:
    """Draw ``(q, qd)`` with ``h(q) > 0`` and certified value ``>= margin``.

    For the robust filters the tightened value must clear the margin too.

    A configuration is drawn first (at rest the certified value equals
    ``alpha_e h``), then a uniform velocity perturbation is accepted only if
    the margin still holds; after 20 rejected perturbations the state is kept
    at rest.
    """
    box = box or operating_box(bt.model, bt.kin)
    lo, hi = np.array(box.q_lo), np.array(box.q_hi)
    out = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > max_tries:
            raise DomainError("could not sample enough initial states inside the safe set")
        q = rng.uniform(lo, hi)
        if not (bt.kin.value(q) > 0 and bt.alpha_e * bt.kin.value(q) >= margin):
            continue
        qd = np.zeros(bt.model.k)
        if velocity_scale > 0:
            for _ in range(20):
                cand = rng.uniform(-velocity_scale, velocity_scale, bt.model.k)
                if min(certified_value(bt, q, cand), tightened_value(bt, q, cand)) >= margin:
                    qd = cand
                    break
        out.append(State(q, qd))
    return out


def sampling_box(bt: Built, init: dict) -> StateBox:
    """Operating box, optionally narrowed by ``q_lo``/``q_hi`` in ``init``."""
    box = operating_box(bt.model, bt.kin)
    lo = np.maximum(box.q_lo, init.get("q_lo", box.q_lo))
    hi = np.minimum(box.q_hi, init.get("q_hi", box.q_hi))
    if np.any(lo >= hi):
        raise DomainError("empty initial sampling box")
    return StateBox(tuple(lo), tuple(hi), box.qd_lo, box.qd_hi)


def initial_state(sc: Scenario, bt: Built) -> State:
    init = sc.initial
    if init.get("sample"):
        rng = np.random.default_rng(sc.seed)
        return sample_initial_states(bt, 1, rng, float(init.get("margin", 0.05)),
                                     float(init.get("velocity_scale", 1.0)), box=sampling_box(bt, init))[0]
    return State(np.asarray(init["q"], dtype=float), np.asarray(init.get("qdot", [0.0] * bt.model.k), dtype=float))


# ---------------------------------------------------------------------------
# rollout
# ---------------------------------------------------------------------------

def trace_columns(k, n_cmd, m) -> list:
    return (["t"] + [f"q_{i}" for i in range(k)] + [f"qd_{i}" for i in range(k)]
            + [f"cmd_{i}" for i in range(n_cmd)] + [f"u_{i}" for i in range(m)]
            + ["h", "hD", "psi", "intervened", "residual", "exact_residual"])


def certified_column(filter_id: str) -> str:
    return "h" if filter_id in ("none", "velocity") else "hD"


def _rollout_python(bt: Built, s0: State, dt: float, n_steps: int, out: np.ndarray):
    k = bt.model.k
    q, qd = s0.q.copy(), s0.qdot.copy()
    for i in range(n_steps + 1):
        t = i * dt
        try:
            cmd, u, psi, iv, res, exact = control_step(bt, q, qd, t)
        except KincbfError as exc:
            return f"{type(exc).__name__}: {exc}", i
        row = out[i]
        row[0] = t
        row[1:1 + k] = q
        row[1 + k:1 + 2 * k] = qd
        j = 1 + 2 * k
        row[j:j + cmd.size] = cmd
        j += cmd.size
        row[j:j + u.size] = u
        j += u.size
        row[j:j + 6] = (bt.kin.value(q), certified_value(bt, q, qd), psi, float(iv), res, exact)
        if i == n_steps:
            break
        try:
            q, qd = _rk4(bt.model, q, qd, u, dt)
        except DivergenceError as exc:
            return f"{type(exc).__name__}: {exc}", i + 1
    return None, None


def run(sc: Scenario, *, backend: str | None = None, s0: State | None = None,
        bounds_cache: str | None = None) -> tuple[Trace, Metrics]:
    """Simulate ``sc``; errors end the run early and are recorded in the trace."""
    backend = backend or DEFAULT_BACKEND
    if backend not in available_backends():
        raise DomainError(f"backend '{backend}' is not available")
    bt = build(sc, bounds_cache)
    s0 = s0 if s0 is not None else initial_state(sc, bt)
    k, m = bt.model.k, bt.model.m
    n_cmd = k if bt.filter_id in VELOCITY_LEVEL else m
    cols = trace_columns(k, n_cmd, m)
    n = sc.n_steps
    data = np.zeros((n + 1, len(cols)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutsideSafeSetWarning)
        if backend == "compiled":
            from .kernel_args import encode

            packed = encode(bt)
            status, err_step = _ckernel.rollout(*packed, s0.q, s0.qdot, sc.dt, n, data)
            error = None if status == 0 else _ckernel.describe(status)
        else:
            error, err_step = _rollout_python(bt, s0, sc.dt, n, data)
    if error is not None:
        data = data[:err_step]
    tr = Trace(cols, data, k, n_cmd, m, sc.hash(), certified=certified_column(bt.filter_id),
               error=error, error_step=err_step if error else None, backend=backend)
    if data.shape[0] == 0:
        return tr, Metrics(math.nan, math.nan, 0, 0.0, math.nan, math.nan, 0, error)
    return tr, compute_metrics(tr, bt.task, bt.model)


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

@dataclass
class ComparisonTable:
    rows: list

    KEYS = ("label", "filter", "alpha", "alpha_e", "min_h", "min_h_D", "violation_steps",
            "intervention_fraction", "tracking_rms", "error")

    def to_text(self) -> str:
        cells = [list(self.KEYS)] + [[_cell(r[k]) for k in self.KEYS] for r in self.rows]
        widths = [max(len(c[i]) for c in cells) for i in range(len(self.KEYS))]
        lines = ["  ".join(c[i].ljust(widths[i]) for i in range(len(widths))).rstrip() for c in cells]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = [",".join(self.KEYS)]
        lines += [",".join(_cell(r[k]) for k in self.KEYS) for r in self.rows]
        return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def compare(scenarios: list, labels=None, *, backend=None, results=None) -> ComparisonTable:
    """Run (or reuse ``results`` of) scenarios sharing a model and barrier."""
    if len(scenarios) < 2:
        raise ComparisonError("compare needs at least two scenarios")
    ref = scenarios[0]
    for sc in scenarios[1:]:
        if (sc.model, sc.model_params, sc.barrier) != (ref.model, ref.model_params, ref.barrier):
            raise ComparisonError(f"scenario '{sc.name}' uses a different model or barrier")
    labels = labels or [sc.name for sc in scenarios]
    rows = []
    for i, (sc, label) in enumerate(zip(scenarios, labels)):
        met = results[i][1] if results is not None else run(sc, backend=backend)[1]
        rows.append(comparison_row(sc, label, met))
    return ComparisonTable(rows)


def comparison_row(sc: Scenario, label: str, met: Metrics) -> dict:
    ak = sc.filter.get("alpha", {}) or {}
    return {
        "label": label,
        "filter": sc.filter["id"],
        "alpha": float(ak.get("gamma", 1.0)),
        "alpha_e": float(sc.filter.get("alpha_e", 1.0)),
        "min_h": met.min_h,
        "min_h_D": met.min_h_D,
        "violation_steps": met.violation_steps,
        "intervention_fraction": met.intervention_fraction,
        "tracking_rms": met.tracking_rms,
        "error": met.error,
    }
