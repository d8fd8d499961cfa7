"""Measurement-error samples, sigma estimates and the normality screen."""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NegativeInput, OddSeriesCount
from .shapiro import shapiro_wilk


def build_error_sample(tensor, sensor):
    """Successive-pair differences ``z[2m+1, j, k] - z[2m, j, k]`` for one sensor.

    The result has length ``(n_M / 2) * n_q`` and runs over pairs first,
    then inputs: entry ``m * n_q + j`` belongs to pair ``m`` and input ``j``.
    """
    z = tensor.z if hasattr(tensor, "z") else np.asarray(tensor, dtype=float)
    n_m = z.shape[0]
    if n_m % 2:
        raise OddSeriesCount(f"paired differences need an even series count, got {n_m}")
    zk = z[:, :, sensor]
    return (zk[1::2] - zk[0::2]).ravel()


def sigma_from_differences(diff):
    """Single-measurement standard deviation implied by paired differences.

    A difference of two independent errors has variance ``2 sigma^2``.
    """
    diff = np.asarray(diff, dtype=float)
    return float(np.std(diff, ddof=1) / math.sqrt(2.0))


def combine_sigma(sigma_repetition, sigma_internal):
    """Root sum of squares of the repetition and internal standard deviations."""
    if sigma_repetition < 0 or sigma_internal < 0:
        raise NegativeInput("standard deviations must be non-negative")
    return math.hypot(sigma_repetition, sigma_internal)


@dataclass(frozen=True)
class NormalityResult:
    sensor: int
    w: float
    p_value: float
    sigma_hat: float
    passed: bool


def normality_screen(tensor, level=0.05, sensors=None, inputs=None):
    """Shapiro-Wilk on paired differences for each requested sensor.

    ``inputs`` optionally restricts the inputs used, e.g. to drop zero-load
    endpoints whose differences vanish by construction.
    """
    sub = tensor if inputs is None else tensor.select(inputs=inputs)
    if sensors is None:
        sensors = [k for k in range(sub.n_s) if sub.layout.omega[k]]
    out = []
    for k in sensors:
        diff = build_error_sample(sub, k)
        w, p = shapiro_wilk(diff)
        out.append(NormalityResult(int(k), w, p, sigma_from_differences(diff), p >= level))
    return out
