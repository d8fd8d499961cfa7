"""Regularized incomplete gamma and the chi-squared distribution."""

import math

from ..errors import DomainError

_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 1000


def _gamma_series(a, x):
    # lower regularized gamma P(a, x) by its power series, good for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    # upper regularized gamma Q(a, x) by modified Lentz continued fraction
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a, x):
    """Regularized lower incomplete gamma ``P(a, x)``."""
    if a <= 0 or x < 0:
        raise DomainError("gammainc_lower needs a > 0 and x >= 0")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gammainc_upper(a, x):
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    if a <= 0 or x < 0:
        raise DomainError("gammainc_upper needs a > 0 and x >= 0")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def _check_dof(dof):
    if dof < 1 or int(dof) != dof:
        raise DomainError(f"degrees of freedom must be a positive integer, got {dof}")


def chi2_cdf(x, dof):
    _check_dof(dof)
    if x <= 0:
        return 0.0
    return gammainc_lower(dof / 2.0, x / 2.0)


def chi2_sf(x, dof):
    """Survival function ``1 - CDF``, accurate in the far tail."""
    _check_dof(dof)
    if x <= 0:
        return 1.0
    return gammainc_upper(dof / 2.0, x / 2.0)


def chi2_pdf(x, dof):
    _check_dof(dof)
    if x <= 0:
        return math.inf if dof == 1 else (0.5 if dof == 2 else 0.0)
    k = dof / 2.0
    return math.exp((k - 1.0) * math.log(x) - x / 2.0 - k * math.log(2.0) - math.lgamma(k))


def chi2_quantile(dof, alpha):
    """``gamma^2`` with ``P(chi2_dof > gamma^2) = alpha``, i.e. the (1 - alpha) quantile."""
    _check_dof(dof)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    # Wilson-Hilferty start
    z = _normal_upper_quantile(alpha)
    t = 2.0 / (9.0 * dof)
    x = max(dof * (1.0 - t + z * math.sqrt(t)) ** 3, 1e-12)
    lo, hi = 0.0, max(2.0 * x, dof + 10.0)
    while chi2_sf(hi, dof) > alpha:
        hi *= 2.0
    for _ in range(200):
        g = chi2_sf(x, dof) - alpha
        if g > 0:
            lo = x
        else:
            hi = x
        if abs(g) <= 1e-15 * alpha or hi - lo <= 1e-15 * hi:
            break
        pdf = chi2_pdf(x, dof)
        x_new = x + g / pdf if pdf > 0 and math.isfinite(pdf) else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        x = x_new
    return x


def _normal_upper_quantile(alpha):
    from statistics import NormalDist
    return NormalDist().inv_cdf(1.0 - alpha)
