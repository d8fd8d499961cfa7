"""Calibration/validation partitions of a loading-unloading schedule."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import EmptySplit

KINDS = ("alternating-within-phase", "loading-vs-unloading", "alternating-across-all",
         "random-monte-carlo")


@dataclass(frozen=True)
class SplitScheme:
    """How to divide the inputs into calibration and validation sets.

    ``phase`` selects the phase for ``alternating-within-phase``. When
    ``excluded_inputs`` is None, inputs with a zero setpoint are excluded.
    """

    kind: str
    phase: Optional[str] = None
    seed: Optional[int] = None
    ratio: float = 0.5
    excluded_inputs: Optional[tuple] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown split kind {self.kind!r}")
        if self.kind == "alternating-within-phase" and self.phase not in ("loading", "unloading"):
            raise ValueError("alternating-within-phase needs phase='loading' or 'unloading'")
        if self.kind == "random-monte-carlo":
            if self.seed is None:
                raise ValueError("random splits need an explicit seed")
            if not 0.0 < self.ratio < 1.0:
                raise ValueError("ratio must lie in (0, 1)")

    @property
    def label(self):
        if self.name:
            return self.name
        if self.kind == "alternating-within-phase":
            return f"{self.phase}-within"
        if self.kind == "random-monte-carlo":
            return f"random-{self.seed}"
        return {"loading-vs-unloading": "loading-vs-unloading",
                "alternating-across-all": "across-all"}[self.kind]


@dataclass(frozen=True)
class Split:
    cal_inputs: np.ndarray
    val_inputs: np.ndarray
    series_count: int

    def _pairs(self, inputs):
        return [(i, int(j)) for i in range(self.series_count) for j in inputs]

    @property
    def cal_pairs(self):
        return self._pairs(self.cal_inputs)

    @property
    def val_pairs(self):
        return self._pairs(self.val_inputs)


def standard_schemes():
    """The four calibration/validation scenarios of the standard test protocol."""
    return [
        SplitScheme("alternating-within-phase", phase="loading"),
        SplitScheme("alternating-within-phase", phase="unloading"),
        SplitScheme("loading-vs-unloading"),
        SplitScheme("alternating-across-all"),
    ]


def _excluded(schedule, scheme):
    if scheme.excluded_inputs is not None:
        return set(int(i) for i in scheme.excluded_inputs)
    if schedule.setpoints is not None:
        return set(np.flatnonzero(schedule.setpoints == 0).tolist())
    return set()


def _phase_indices(schedule):
    if schedule.phases is None:
        raise ValueError("this split needs phase tags on the schedule")
    loading = [j for j, ph in enumerate(schedule.phases) if ph == "loading"]
    unloading = [j for j, ph in enumerate(schedule.phases) if ph == "unloading"]
    return loading, unloading


def split(schedule, scheme, series_count):
    """Partition the inputs; every series contributes to both sets.

    The turning point (last loading input) belongs to both phases for the
    within-phase alternation, and to the unloading side for
    ``loading-vs-unloading``.
    """
    excl = _excluded(schedule, scheme)
    keep = [j for j in range(schedule.n_q) if j not in excl]
    if scheme.kind == "alternating-within-phase":
        loading, unloading = _phase_indices(schedule)
        if scheme.phase == "loading":
            members = loading
        else:
            members = ([loading[-1]] if loading else []) + unloading
        members = [j for j in members if j not in excl]
        cal, val = members[0::2], members[1::2]
    elif scheme.kind == "loading-vs-unloading":
        loading, unloading = _phase_indices(schedule)
        turn = loading[-1:] if loading else []
        cal = [j for j in loading[:-1] if j not in excl]
        val = [j for j in turn + unloading if j not in excl]
    elif scheme.kind == "alternating-across-all":
        cal, val = keep[1::2], keep[0::2]
    else:
        rng = np.random.default_rng(scheme.seed)
        order = rng.permutation(len(keep))
        n_cal = int(round(scheme.ratio * len(keep)))
        n_cal = min(max(n_cal, 1), len(keep) - 1) if len(keep) >= 2 else 0
        cal = sorted(keep[i] for i in order[:n_cal])
        val = sorted(keep[i] for i in order[n_cal:])
    if not cal or not val:
        raise EmptySplit(f"scheme {scheme.label!r} produced an empty set")
    return Split(np.array(cal, dtype=int), np.array(val, dtype=int), int(series_count))
