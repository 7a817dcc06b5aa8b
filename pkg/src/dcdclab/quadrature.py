"""Adaptive Simpson quadrature, used only to cross-check the exact algebra."""

from __future__ import annotations

from typing import Callable


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     atol: float = 1e-9, max_depth: int = 50) -> float:
    if a == b:
        return 0.0
    fa, fb, m = f(a), f(b), 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    return _refine(f, a, b, fa, fm, fb, whole, atol, max_depth)


def _refine(f, a, b, fa, fm, fb, whole, atol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) * (fa + 4.0 * flm + fm) / 6.0
    right = (b - m) * (fm + 4.0 * frm + fb) / 6.0
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * atol:
        return left + right + delta / 15.0
    return (_refine(f, a, m, fa, flm, fm, left, 0.5 * atol, depth - 1)
            + _refine(f, m, b, fm, frm, fb, right, 0.5 * atol, depth - 1))
