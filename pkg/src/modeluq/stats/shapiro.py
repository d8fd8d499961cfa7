"""Shapiro-Wilk W test with Royston's normalizing transformation (AS R94)."""

import math
from functools import lru_cache
from statistics import NormalDist

import numpy as np

from ..errors import ConstantSample, DomainError, SampleTooSmall

_N = NormalDist()

# exact Shapiro-Wilk coefficients for the largest order statistics, n <= 11
_EXACT = {
    3: (0.7071,),
    4: (0.6872, 0.1677),
    5: (0.6646, 0.2413),
    6: (0.6431, 0.2806, 0.0875),
    7: (0.6233, 0.3031, 0.1401),
    8: (0.6052, 0.3164, 0.1743, 0.0561),
    9: (0.5888, 0.3244, 0.1976, 0.0947),
    10: (0.5739, 0.3291, 0.2141, 0.1224, 0.0399),
    11: (0.5601, 0.3315, 0.2260, 0.1429, 0.0695),
}


def _poly(coef, x):
    out = 0.0
    for c in reversed(coef):
        out = out * x + c
    return out


def royston_weights(n):
    """Royston's approximation of the W-test coefficients, ascending order."""
    m = np.array([_N.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)])
    mm = float(m @ m)
    u = 1.0 / math.sqrt(n)
    a = np.empty(n)
    an = m[-1] / math.sqrt(mm) + _poly((0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056), u)
    if n > 5:
        an1 = m[-2] / math.sqrt(mm) + _poly((0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633), u)
        phi = (mm - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an**2 - 2 * an1**2)
        a[:] = m / math.sqrt(phi)
        a[-1], a[-2] = an, an1
        a[0], a[1] = -an, -an1
    else:
        phi = (mm - 2 * m[-1] ** 2) / (1 - 2 * an**2)
        a[:] = m / math.sqrt(phi)
        a[-1], a[0] = an, -an
    return a


@lru_cache(maxsize=None)
def _weights(n):
    if n in _EXACT:
        top = np.array(_EXACT[n])
        a = np.zeros(n)
        a[n - top.size:] = top[::-1]
        a[:top.size] = -top
        return a
    if n == 3:
        return np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    return royston_weights(n)


def shapiro_wilk_weights(n):
    """Coefficients ``a_1..a_n`` (ascending) used for a sample of size ``n``."""
    return _weights(n).copy()


def _p_value(w, n):
    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return min(max(p, 0.0), 1.0)
    y = math.log1p(-w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = -2.273 + 0.459 * n
        if y >= gamma:
            return 1e-99
        y = -math.log(gamma - y)
        mean = _poly((0.544, -0.39978, 0.025054, -6.714e-4), n)
        sd = math.exp(_poly((1.3822, -0.77857, 0.062767, -0.0020322), n))
    else:
        ln = math.log(n)
        mean = _poly((-1.5861, -0.31082, -0.083751, 0.0038915), ln)
        sd = math.exp(_poly((-0.4803, -0.082676, 0.0030302), ln))
    if y == -math.inf:
        return 1.0
    return 1.0 - _N.cdf((y - mean) / sd)


def shapiro_wilk(sample):
    """Return ``(W, p_value)`` for the null hypothesis of normality."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if n < 3:
        raise SampleTooSmall(f"Shapiro-Wilk needs at least 3 values, got {n}")
    if n > 5000:
        raise DomainError(f"Shapiro-Wilk approximation is valid up to n = 5000, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    centered = x - x.mean()
    ss = float(centered @ centered)
    if x[-1] - x[0] <= 1e-14 * max(abs(x[0]), abs(x[-1]), 1e-300) or ss == 0.0:
        raise ConstantSample("sample is constant")
    a = _weights(n)
    w = float((a @ x) ** 2 / ss)
    w = min(w, 1.0)
    return w, _p_value(w, n)
