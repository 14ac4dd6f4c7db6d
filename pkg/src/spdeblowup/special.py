"""Regularized incomplete gamma functions P(s, x) and Q(s, x).

Series for x < s + 1, modified Lentz continued fraction otherwise. Whichever
of P, Q is computed directly, the other is its complement.
"""
import math
import sys

EPS = 1e-16
TINY = sys.float_info.min / EPS
MAX_ITER = 100_000


def _check(s: float, x: float):
    if not (s > 0 and math.isfinite(s)):
        raise ValueError(f"shape s must be positive and finite, got {s}")
    if not x >= 0:
        raise ValueError(f"argument x must be nonnegative, got {x}")


def _prefactor(s: float, x: float) -> float:
    return math.exp(-x + s * math.log(x) - math.lgamma(s))


def _series_P(s: float, x: float) -> float:
    term = 1.0 / s
    total = term
    ap = s
    for _ in range(MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * EPS:
            return total * _prefactor(s, x)
    raise ArithmeticError(f"P({s}, {x}) series failed to converge")


def _cf_Q(s: float, x: float) -> float:
    b = x + 1.0 - s
    c = 1.0 / TINY
    d = 1.0 / b
    h = d
    for i in range(1, MAX_ITER):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < TINY:
            d = TINY
        c = b + an / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            return h * _prefactor(s, x)
    raise ArithmeticError(f"Q({s}, {x}) continued fraction failed to converge")


def reg_gamma_lower(s: float, x: float) -> float:
    """P(s, x) = gamma(s, x) / Gamma(s), the CDF of a Gamma(s, 1) variable at x."""
    s, x = float(s), float(x)
    _check(s, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < s + 1.0:
        return min(1.0, _series_P(s, x))
    return max(0.0, 1.0 - _cf_Q(s, x))


def reg_gamma_upper(s: float, x: float) -> float:
    """Q(s, x) = 1 - P(s, x)."""
    s, x = float(s), float(x)
    _check(s, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < s + 1.0:
        return max(0.0, 1.0 - _series_P(s, x))
    return min(1.0, _cf_Q(s, x))
