"""Sensor selection by A-, D- and E-optimal design criteria."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import (IllConditionedDesignWarning, NoFeasibleDesign, NonFiniteC, RankDeficient,
                     SingularH)
from .estimation import Estimate, calibrate

MAX_ENUMERATION = 24
WARN_RATIO = 1e-6


class Criterion(str, Enum):
    A = "A"
    D = "D"
    E = "E"


def criterion_value(C, kind):
    """Trace (A), determinant (D) or largest eigenvalue (E) of a covariance."""
    kind = Criterion(kind)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if not np.all(np.isfinite(C)):
        raise NonFiniteC("covariance has non-finite entries")
    if kind is Criterion.A:
        return float(max(np.trace(C), 0.0))
    vals = np.linalg.eigvalsh(0.5 * (C + C.T))
    if kind is Criterion.E:
        return float(max(vals[-1], 0.0))
    if vals[0] <= 0:
        return 0.0
    return float(np.exp(np.sum(np.log(vals))))


@dataclass(frozen=True)
class CardinalityConstraint:
    min_sensors: Optional[int] = None
    max_sensors: Optional[int] = None
    forced_on: tuple = ()
    forced_off: tuple = ()

    def bounds(self, n_p, n_s):
        lo = n_p if self.min_sensors is None else int(self.min_sensors)
        hi = n_s if self.max_sensors is None else int(self.max_sensors)
        if lo < n_p:
            raise ValueError(f"min_sensors must be at least n_p = {n_p}")
        if hi > n_s or lo > hi:
            raise ValueError(f"invalid cardinality range [{lo}, {hi}] for {n_s} sensors")
        if set(self.forced_on) & set(self.forced_off):
            raise ValueError("forced_on and forced_off overlap")
        return lo, hi

    def admits(self, omega, n_p):
        lo, hi = self.bounds(n_p, len(omega))
        count = int(np.sum(omega))
        return (lo <= count <= hi and all(omega[k] for k in self.forced_on)
                and not any(omega[k] for k in self.forced_off))


@dataclass
class DesignEvaluation:
    omega: np.ndarray
    feasible: bool
    psi_A: Optional[float] = None
    psi_D: Optional[float] = None
    psi_E: Optional[float] = None
    estimate: Optional[Estimate] = None
    reason: str = ""
    diagnostics: list = field(default_factory=list)

    def psi(self, kind):
        return getattr(self, f"psi_{Criterion(kind).value}")

    def key(self, kind):
        # total order used for selection: criterion, sensor count, then omega
        return (self.psi(kind), int(self.omega.sum()), tuple(int(w) for w in self.omega))

    def to_dict(self):
        out = {"omega": "".join(str(int(w)) for w in self.omega), "feasible": self.feasible,
               "psi_A": self.psi_A, "psi_D": self.psi_D, "psi_E": self.psi_E,
               "reason": self.reason}
        if self.estimate is not None:
            out["p"] = [float(v) for v in self.estimate.p]
        return out


def _infeasible(omega, reason):
    return DesignEvaluation(np.asarray(omega, dtype=int), False, reason=reason)


def evaluate_design(model, layout, tensor, omega, p0, *, strict=False, bounds=None,
                    second_order=True):
    """Re-identify under ``omega`` and evaluate all three criteria.

    Designs with fewer than ``n_p`` active sensors, or whose weighted
    Jacobian is rank deficient, come back infeasible; with ``strict=True``
    the rank failure is raised as :class:`RankDeficient` instead.
    """
    omega = np.asarray(omega, dtype=int)
    if omega.shape != (layout.n_s,) or not np.all((omega == 0) | (omega == 1)):
        raise ValueError(f"omega must be a binary vector of length {layout.n_s}")
    if omega.sum() < model.n_p:
        if strict:
            raise RankDeficient(f"{int(omega.sum())} sensors cannot identify {model.n_p} parameters")
        return _infeasible(omega, "fewer active sensors than parameters")
    lay = layout.with_omega(omega)
    try:
        est = calibrate(model, lay, tensor.with_layout(lay), p0, bounds=bounds,
                        second_order=second_order)
    except (RankDeficient, SingularH) as exc:
        if strict:
            raise
        return _infeasible(omega, f"{type(exc).__name__}: {exc}")
    wJ = est.J[np.tile(omega, est.J.shape[0] // layout.n_s) > 0]
    sv = np.linalg.svd(wJ, compute_uv=False)
    if sv[-1] < WARN_RATIO * sv[0]:
        warnings.warn(f"design {omega.tolist()} is nearly singular "
                      f"(s_min/s_max = {sv[-1] / sv[0]:.2e})", IllConditionedDesignWarning,
                      stacklevel=2)
    return DesignEvaluation(omega, True, criterion_value(est.C, "A"), criterion_value(est.C, "D"),
                            criterion_value(est.C, "E"), est)


def _reference_start(model, layout, tensor, p0, bounds):
    # identification under the full design supplies the warm start for every subset
    full = layout.with_omega(np.ones(layout.n_s, dtype=int))
    try:
        return calibrate(model, full, tensor.with_layout(full), p0, bounds=bounds,
                         second_order=False).p
    except (RankDeficient, SingularH):
        return np.asarray(p0, dtype=float)


def exhaustive_select(model, layout, tensor, constraint, kind, p0, *, bounds=None):
    """Best design among all admissible binary vectors.

    Ties go to fewer sensors, then to the lexicographically smallest omega.
    """
    kind = Criterion(kind)
    n_s = layout.n_s
    if n_s > MAX_ENUMERATION:
        raise ValueError(f"enumeration is limited to {MAX_ENUMERATION} sensors")
    constraint.bounds(model.n_p, n_s)
    start = _reference_start(model, layout, tensor, p0, bounds)
    evaluated = []
    for bits in itertools.product((0, 1), repeat=n_s):
        omega = np.array(bits, dtype=int)
        if not constraint.admits(omega, model.n_p):
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedDesignWarning)
            evaluated.append(evaluate_design(model, layout, tensor, omega, start, bounds=bounds))
    feasible = [e for e in evaluated if e.feasible]
    if not feasible:
        raise NoFeasibleDesign("no admissible design has full rank")
    best = min(feasible, key=lambda e: e.key(kind))
    best.diagnostics = [e.to_dict() for e in evaluated]
    return best


def greedy_select(model, layout, tensor, constraint, kind, p0, *, bounds=None):
    """Backward elimination from the largest admissible design.

    Each step drops the sensor whose removal gives the smallest criterion,
    until the sensor count is within ``max_sensors``. The criterion after
    every step is recorded in ``diagnostics``.
    """
    kind = Criterion(kind)
    n_s = layout.n_s
    lo, hi = constraint.bounds(model.n_p, n_s)
    omega = np.ones(n_s, dtype=int)
    omega[list(constraint.forced_off)] = 0
    start = _reference_start(model, layout, tensor, p0, bounds)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedDesignWarning)
        current = evaluate_design(model, layout, tensor, omega, start, bounds=bounds)
    if not current.feasible:
        raise NoFeasibleDesign(f"starting design is infeasible: {current.reason}")
    history = [current.to_dict()]
    while current.omega.sum() > hi:
        candidates = []
        for k in np.flatnonzero(current.omega):
            if k in constraint.forced_on or current.omega.sum() - 1 < lo:
                continue
            trial = current.omega.copy()
            trial[k] = 0
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", IllConditionedDesignWarning)
                ev = evaluate_design(model, layout, tensor, trial, start, bounds=bounds)
            if ev.feasible:
                candidates.append(ev)
        if not candidates:
            raise NoFeasibleDesign("no sensor can be removed without losing feasibility")
        current = min(candidates, key=lambda e: e.key(kind))
        history.append(current.to_dict())
    if current.omega.sum() < lo:
        raise NoFeasibleDesign("cardinality bounds cannot be met")
    current.diagnostics = history
    return current
