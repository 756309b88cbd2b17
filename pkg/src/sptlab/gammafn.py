"""Regularized incomplete gamma functions.

Series expansion below the switch point x = a + 1, Lentz-style continued
fraction above it; both iterate to absolute tolerance 1e-12.
"""
from __future__ import annotations

import math

ABS_TOL = 1e-12
MAX_ITER = 10_000
# Smallest safe divisor for the modified Lentz recurrence.
_FPMIN = 1e-300


def _gamma_p_series(a: float, x: float) -> float:
    """P(a, x) by the ascending series, valid for x < a + 1."""
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < ABS_TOL * max(1.0, abs(total)):
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise ArithmeticError(f"incomplete gamma series failed to converge for a={a}, x={x}")


def _gamma_q_contfrac(a: float, x: float) -> float:
    """Q(a, x) by the continued fraction, valid for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < ABS_TOL:
            return h * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise ArithmeticError(f"incomplete gamma continued fraction failed to converge for a={a}, x={x}")


def gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError(f"gamma_p requires a > 0, got {a}")
    if x < 0:
        raise ValueError(f"gamma_p requires x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_p_series(a, x)
    return 1.0 - _gamma_q_contfrac(a, x)


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if a <= 0:
        raise ValueError(f"gamma_q requires a > 0, got {a}")
    if x < 0:
        raise ValueError(f"gamma_q requires x >= 0, got {x}")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)
