"""Friction models acting on the pressure-bar guide.

All models map the sequence of applied forces to a friction force that is
subtracted from the process force. Only the sign of the load rate enters,
so the models are rate independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DegenerateTraining, UninitializedState, UntrainedModel

VARIANTS = ("literal", "corrected")


def rate_signs(forces, times=None):
    """Sign of the load rate at each step; the first step has rate 0."""
    forces = np.asarray(forces, dtype=float)
    dq = np.diff(forces, prepend=forces[:1])
    if times is not None:
        dt = np.diff(np.asarray(times, dtype=float), prepend=np.nan)
        if np.any(dt[1:] <= 0):
            raise ValueError("time stamps must be strictly increasing")
        dq = np.concatenate([[0.0], dq[1:] / dt[1:]])
    return np.sign(dq)


def coulomb_friction(q_c, rate_sign):
    """Constant-magnitude friction ``q_c * sign(rate)``; zero when at rest."""
    if q_c < 0:
        raise ValueError("friction magnitude must be non-negative")
    return q_c * np.sign(rate_sign)


@dataclass(frozen=True)
class MemoryState:
    """Extremal forces of the current branch and the most recent force."""

    q_min: float
    q_max: float
    q_last: float

    @classmethod
    def start(cls, q0):
        return cls(float(q0), float(q0), float(q0))


def memory_update(state, q_now, rate_sign, variant="literal"):
    """Advance the memory by one load step.

    Loading keeps the smallest force seen so far and records the current
    force as maximum. Unloading records the current force as minimum; the
    ``"literal"`` variant then also lowers the maximum to the current force,
    while ``"corrected"`` keeps the turning-point maximum.
    """
    if state is None:
        raise UninitializedState("memory state must be initialized with MemoryState.start")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    q_now = float(q_now)
    if rate_sign > 0:
        q_min, q_max = min(q_now, state.q_min), q_now
    elif rate_sign < 0:
        q_min = q_now
        q_max = min(q_now, state.q_max) if variant == "literal" else max(q_now, state.q_max)
    else:
        q_min, q_max = state.q_min, state.q_max
    return MemoryState(q_min, q_max, q_now)


def memory_features(forces, variant="literal", times=None):
    """Rows ``(q_now, q_prev, q_min, q_max)`` along a force history."""
    forces = np.asarray(forces, dtype=float)
    signs = rate_signs(forces, times)
    state = MemoryState.start(forces[0])
    rows = np.empty((forces.size, 4))
    for j, (q, s) in enumerate(zip(forces, signs)):
        prev = state.q_last
        state = memory_update(state, q, s, variant)
        rows[j] = (q, prev, state.q_min, state.q_max)
    return rows


def default_units(force_scale=1000.0, scalings=(0.5, 8.0)):
    """One arctan unit per (feature, scaling) pair, no offsets."""
    return tuple((f, s / force_scale, 0.0) for f in range(4) for s in scalings)


@dataclass
class MemoryArctan:
    """Friction ``sum_u w_u atan(s_u x_f(u) + b_u) + w_0`` over memory features.

    Each unit is a triple ``(feature, scaling, offset)``, with features
    ordered ``q_now, q_prev, q_min, q_max``.
    """

    units: tuple = default_units()
    weights: Optional[np.ndarray] = None
    bias: float = 0.0
    variant: str = "literal"

    def design(self, features):
        features = np.atleast_2d(features)
        return np.column_stack([np.arctan(s * features[:, f] + b) for f, s, b in self.units])

    def __call__(self, features):
        if self.weights is None:
            raise UntrainedModel("memory friction model has no weights")
        return self.design(features) @ self.weights + self.bias

    def series(self, forces, times=None):
        return self(memory_features(forces, self.variant, times))

    def to_dict(self):
        return {"units": [list(u) for u in self.units],
                "weights": None if self.weights is None else [float(w) for w in self.weights],
                "bias": float(self.bias), "variant": self.variant}


def memory_friction(model, state, q_now, q_prev):
    """Friction of ``model`` once ``state`` has been updated with ``q_now``."""
    if state is None:
        raise UninitializedState("memory state is not initialized")
    return float(model(np.array([[q_now, q_prev, state.q_min, state.q_max]]))[0])


def train_memory_friction(force_series, residual_series, units=None, variant="literal"):
    """Least-squares fit of the arctan weights to friction residuals.

    ``force_series`` and ``residual_series`` are lists of equally long
    histories, one per training series. The minimum-norm solution is taken
    when features are collinear (``q_max`` equals ``q_now`` on most branches).
    """
    units = default_units() if units is None else tuple(units)
    model = MemoryArctan(units, variant=variant)
    if len(force_series) == 0 or len(force_series) != len(residual_series):
        raise DegenerateTraining("need one residual history per force history")
    X = np.vstack([model.design(memory_features(f, variant)) for f in force_series])
    r = np.concatenate([np.asarray(v, dtype=float).ravel() for v in residual_series])
    if X.shape[0] != r.size:
        raise DegenerateTraining("force and residual histories differ in length")
    if not np.all(np.isfinite(r)):
        raise DegenerateTraining("residuals must be finite")
    if np.ptp(r) == 0.0:
        model.weights = np.zeros(len(units))
        model.bias = float(r[0])
        return model
    A = np.column_stack([X, np.ones(X.shape[0])])
    if np.linalg.matrix_rank(A) < 2:
        raise DegenerateTraining("force histories carry no variation to fit")
    coef, *_ = np.linalg.lstsq(A, r, rcond=None)
    model.weights = coef[:-1]
    model.bias = float(coef[-1])
    return model


def fit_coulomb(force_series, residual_series, times=None):
    """Least-squares ``q_c`` for residuals ``q_c * sign(rate)``."""
    s = np.concatenate([rate_signs(f, times) for f in force_series])
    r = np.concatenate([np.asarray(v, dtype=float).ravel() for v in residual_series])
    denom = float(s @ s)
    if denom == 0.0:
        raise DegenerateTraining("force histories never move")
    return max(float(s @ r) / denom, 0.0)


def generator_friction(amplitude=80.0, force_scale=1000.0, variant="literal"):
    """Memory friction used to synthesize hysteretic data.

    ``amplitude * [atan(s q_now) - 2 atan(s q_min)]`` with ``s`` one of the
    default unit scalings, so the default basis can represent it exactly.
    """
    units = default_units(force_scale)
    w = np.zeros(len(units))
    s = 8.0 / force_scale
    w[units.index((0, s, 0.0))] = amplitude
    w[units.index((2, s, 0.0))] = -2.0 * amplitude
    return MemoryArctan(units, w, 0.0, variant)
