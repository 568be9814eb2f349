"""Flatten a built scenario into the plain arrays the compiled kernel reads."""
from __future__ import annotations

import numpy as np

from .models import CartPole, DoubleIntegrator, TwoLinkArm

MODEL_CODES = {DoubleIntegrator: 0, TwoLinkArm: 1, CartPole: 2}
BARRIER_CODES = {"sphere_obstacle": 0, "angle_box": 1, "position_box": 1, "angle_band": 2}
FILTER_CODES = {
    "none": 0,
    "velocity": 1,
    "torque": 2,
    "robust_torque": 3,
    "velocity_command": 4,
    "underactuated": 5,
    "robust_underactuated": 6,
}
TASK_CODES = {"setpoint": 0, "line": 1, "circle": 2}


def _pad(values, n=8):
    out = np.zeros(n)
    out[: len(values)] = values
    return out


def encode(bt) -> tuple:
    model = bt.model
    mcode = MODEL_CODES[type(model)]
    if mcode == 0:
        mp = [model.mass]
    elif mcode == 1:
        mp = [model.m1, model.m2, model.l1, model.l2, model._g]
    else:
        mp = [model.m_c, model.m_p, model.l, model._g]

    desc = bt.kin.descriptor
    bcode = BARRIER_CODES[desc["type"]]
    if bcode == 0:
        c = list(desc["center"])
        bp = [len(c)] + c + [0.0] * (2 - len(c)) + [desc["d"]]
    elif desc["type"] == "position_box":
        bp = [desc["limit"], 0.0, desc["index"]]
    else:
        bp = [desc["width"], desc["center"], desc["index"]]

    # index of the coordinate replaced by h in the underactuated coordinate change
    hidx = desc.get("index", model.k - 1)
    K = np.diag(bt.K_vel)
    fp = [
        0.0 if bt.alpha.kind == "linear" else 1.0,
        bt.alpha.gamma,
        bt.alpha_e,
        K[0],
        K[-1],
        1.0 if bt.precomp else 0.0,
        bt.c_u,
        bt.c_l,
        1.0 if bt.mode == "drop_gravity" else 0.0,
        hidx,
    ]

    td = bt.task.descriptor
    tcode = TASK_CODES[td["kind"]]
    if tcode == 0:
        p = list(td["point"])
        tp = [td["lambda"], len(p)] + p
    elif tcode == 1:
        p, v = list(td["start"]), list(td["velocity"])
        tp = [td["lambda"], len(p)] + p + [0.0] * (2 - len(p)) + v
    else:
        tp = [td["lambda"], 2] + list(td["center"]) + [td["radius"], td["omega"], td["phase"]]

    # cp = [kd, kp, state gains (4), joint_pd flag, q_goal]
    return (
        mcode, _pad(mp),
        bcode, _pad(bp),
        FILTER_CODES[bt.filter_id], _pad(fp, 12),
        tcode, _pad(tp, 12),
        _pad([bt.kd, bt.kp, *_pad(bt.state_gains[:4], 4),
              0.0 if bt.q_goal is None else 1.0,
              *([] if bt.q_goal is None else bt.q_goal)], 12),
    )
