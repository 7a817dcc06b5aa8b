"""Dense univariate polynomials as coefficient lists, lowest power first.

The same representation serves polynomials in the pencil variable and in
time.  The zero polynomial is the empty list; every other polynomial is
kept with a nonzero last coefficient.  Arithmetic is generic over the
coefficient type, so ``fractions.Fraction`` inputs stay exact.
"""

from __future__ import annotations

from typing import Sequence

Poly = list


def trim(c: Sequence, rtol: float = 0.0) -> Poly:
    """Canonical form: drop negligible coefficients, then trailing zeros.

    With ``rtol > 0`` any coefficient whose magnitude is at most
    ``rtol`` times the largest one is replaced by an exact zero.
    """
    c = list(c)
    if rtol > 0 and c:
        big = max(abs(x) for x in c)
        c = [0 * x if abs(x) <= rtol * big else x for x in c]
    while c and c[-1] == 0:
        c.pop()
    return c


def degree(c: Sequence) -> int:
    """Degree of a canonical polynomial; -1 for the zero polynomial."""
    return len(trim(c)) - 1


def is_zero(c: Sequence) -> bool:
    return not trim(c)


def add(p: Sequence, q: Sequence) -> Poly:
    n = max(len(p), len(q))
    out = [0] * n
    for i, x in enumerate(p):
        out[i] = out[i] + x
    for i, x in enumerate(q):
        out[i] = out[i] + x
    return trim(out)


def scale(p: Sequence, s) -> Poly:
    return trim([s * x for x in p])


def sub(p: Sequence, q: Sequence) -> Poly:
    return add(p, scale(q, -1))


def mul(p: Sequence, q: Sequence) -> Poly:
    if not p or not q:
        return []
    out = [0] * (len(p) + len(q) - 1)
    for i, x in enumerate(p):
        if x == 0:
            continue
        for j, y in enumerate(q):
            out[i + j] = out[i + j] + x * y
    return trim(out)


def power(p: Sequence, m: int) -> Poly:
    out: Poly = [1]
    for _ in range(m):
        out = mul(out, p)
    return out


def deriv(p: Sequence, order: int = 1) -> Poly:
    """Exact ``order``-th derivative."""
    c = list(p)
    for _ in range(order):
        c = [i * c[i] for i in range(1, len(c))]
    return trim(c)


def evaluate(p: Sequence, x):
    """Horner evaluation; works for scalars and numpy arrays."""
    acc = 0 * x
    for coef in reversed(list(p)):
        acc = acc * x + coef
    return acc


def allclose(p: Sequence, q: Sequence, rtol: float = 1e-10) -> bool:
    """Coefficient-wise comparison relative to the largest coefficient."""
    diff = sub(p, q)
    if not diff:
        return True
    big = max([abs(x) for x in list(p) + list(q)] + [0.0])
    return max(abs(x) for x in diff) <= rtol * max(big, 1e-300)
