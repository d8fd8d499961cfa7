"""Candidate press models differing only in their friction description.

* ``M1``: no friction.
* ``M2``: Coulomb friction with a fitted magnitude.
* ``M3``: memory friction with fitted arctan weights.

Friction is trained on residual forces: the stiffnesses are first
identified without friction, each measured cell is then inverted for the
effective force that explains it, and the difference to the applied force
is the friction residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..estimation import identify_parameters, model_outputs
from .friction import coulomb_friction, fit_coulomb, rate_signs, train_memory_friction

MODEL_IDS = ("M1", "M2", "M3")


@dataclass
class CoulombFriction:
    q_c: float

    def series(self, forces, times=None):
        return coulomb_friction(self.q_c, rate_signs(forces, times))

    def to_dict(self):
        return {"q_c": float(self.q_c)}


@dataclass
class Candidate:
    model_id: str
    friction: Optional[object]

    def inputs(self, setpoints):
        setpoints = np.asarray(setpoints, dtype=float)
        fric = np.zeros_like(setpoints) if self.friction is None else self.friction.series(setpoints)
        return np.column_stack([setpoints, fric])

    def tensor(self, tensor):
        """``tensor`` with the friction column filled in for this candidate."""
        sched = tensor.schedule
        sp = sched.setpoints if sched.setpoints is not None else sched.inputs[:, 0]
        return tensor.with_schedule(sched.with_inputs(self.inputs(sp)))

    def to_dict(self):
        return {"model": self.model_id,
                "friction": None if self.friction is None else self.friction.to_dict()}


def effective_forces(model, p, tensor, iterations=3):
    """Per-cell weighted least-squares force explaining the readings at ``p``.

    A few scalar Gauss-Newton steps; exact after the first for a linear
    structure.
    """
    layout = tensor.layout
    w = layout.omega / layout.sigma**2
    sp = tensor.schedule.setpoints if tensor.schedule.setpoints is not None \
        else tensor.schedule.inputs[:, 0]
    q = np.broadcast_to(sp, tensor.z.shape[:2]).astype(float).copy()
    for _ in range(iterations):
        for i in range(tensor.n_m):
            inputs = np.column_stack([q[i], np.zeros(tensor.n_q)])
            h0, _ = model_outputs(model, p, inputs)
            step = np.maximum(1.0, 1e-6 * np.abs(q[i]))
            h1, _ = model_outputs(model, p, inputs + np.column_stack([step, 0 * step]))
            g = (h1 - h0) / step[:, None]
            q[i] += np.sum(w * g * (tensor.z[i] - h0), axis=1) / np.sum(w * g * g, axis=1)
    return q


def train_candidates(model, tensor, p0, train_series=(0, 1, 2, 3), bounds=None,
                     variant="literal"):
    """Fit the frictionless stiffnesses and both friction models.

    Returns ``(candidates, p_frictionless)`` with candidates keyed by id.
    """
    train = tensor.select(series=list(train_series))
    base = Candidate("M1", None)
    p1 = identify_parameters(model, train.layout, base.tensor(train), p0, bounds=bounds).p
    sp = train.schedule.setpoints if train.schedule.setpoints is not None \
        else train.schedule.inputs[:, 0]
    q_eff = effective_forces(model, p1, base.tensor(train))
    residual = [sp - row for row in q_eff]
    forces = [sp] * len(residual)
    q_c = fit_coulomb(forces, residual)
    memory = train_memory_friction(forces, residual, variant=variant)
    return {"M1": base, "M2": Candidate("M2", CoulombFriction(q_c)),
            "M3": Candidate("M3", memory)}, p1
