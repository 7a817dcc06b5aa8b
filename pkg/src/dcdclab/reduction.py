"""Index reduction for integro-differential operators with exp-poly kernels.

An operator acts as

    (op v)(t) = sum_i A_i v^(i)(t) + int_0^t K(t - s) v(s) ds,

with ``K(u) = sum M u**m exp(mu*u)``.  This class of kernels is closed
under differentiation, so every quantity the reduction needs (``K(0)``,
``K'``) is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import poly
from .errors import FormatError, NotSingularLeading, SingularP
from .pencil import (
    INFINITE_DIM, RANK_TOL, PencilReport, PolyMatrixPencil, analyze, content_lines,
    format_matrix, poly_det, rank_of, read_header, read_matrix, row_compress,
)

NONSINGULAR_LEADING = "NONSINGULAR_LEADING"
STEP_LIMIT = "STEP_LIMIT"


@dataclass(frozen=True)
class KernelTerm:
    matrix: np.ndarray
    power: int
    rate: float


class ExpPolyKernel:
    """Sum of ``M * u**m * exp(mu*u)`` terms, merged on identical (m, mu)."""

    def __init__(self, terms=(), size: int | None = None):
        merged: dict[tuple[int, float], np.ndarray] = {}
        for t in terms:
            mat, m, mu = (t.matrix, t.power, t.rate) if isinstance(t, KernelTerm) else t
            mat = np.array(mat, dtype=float)
            if int(m) != m or m < 0:
                raise ValueError("kernel powers must be nonnegative integers")
            key = (int(m), float(mu))
            merged[key] = merged[key] + mat if key in merged else mat.copy()
        self.terms = tuple(
            KernelTerm(mat, m, mu) for (m, mu), mat in sorted(merged.items()) if np.any(mat)
        )
        for t in self.terms:
            t.matrix.setflags(write=False)
        sizes = {t.matrix.shape for t in self.terms}
        if len(sizes) > 1:
            raise ValueError("kernel terms of different sizes")
        self.size = size if size is not None else (self.terms[0].matrix.shape[0] if self.terms else None)

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        if not isinstance(other, ExpPolyKernel) or len(self.terms) != len(other.terms):
            return False
        return all(a.power == b.power and a.rate == b.rate and np.array_equal(a.matrix, b.matrix)
                   for a, b in zip(self.terms, other.terms))

    def __repr__(self):
        body = ", ".join(f"({t.matrix.tolist()}, {t.power}, {t.rate})" for t in self.terms)
        return f"ExpPolyKernel([{body}])"

    def at_zero(self, n: int) -> np.ndarray:
        out = np.zeros((n, n))
        for t in self.terms:
            if t.power == 0:
                out += t.matrix
        return out

    def __call__(self, u: float) -> np.ndarray:
        n = self.size or 0
        out = np.zeros((n, n))
        for t in self.terms:
            out += t.matrix * (u ** t.power) * math.exp(t.rate * u)
        return out

    def derivative(self) -> "ExpPolyKernel":
        new = []
        for t in self.terms:
            if t.power > 0:
                new.append((t.matrix * t.power, t.power - 1, t.rate))
            if t.rate != 0:
                new.append((t.matrix * t.rate, t.power, t.rate))
        return ExpPolyKernel(new, self.size)

    def left_multiply(self, P) -> "ExpPolyKernel":
        P = np.asarray(P, dtype=float)
        return ExpPolyKernel([(P @ t.matrix, t.power, t.rate) for t in self.terms], self.size)

    def rows(self, mask) -> "ExpPolyKernel":
        """Keep only the rows selected by boolean ``mask``."""
        keep = np.asarray(mask, dtype=float)[:, None]
        return ExpPolyKernel([(t.matrix * keep, t.power, t.rate) for t in self.terms], self.size)

    def __add__(self, other: "ExpPolyKernel") -> "ExpPolyKernel":
        return ExpPolyKernel(list(self.terms) + list(other.terms), self.size or other.size)

    def max_power(self) -> int:
        return max((t.power for t in self.terms), default=-1)


@dataclass(frozen=True)
class IDEOperator:
    pencil: PolyMatrixPencil
    kernel: ExpPolyKernel = field(default_factory=ExpPolyKernel)

    def __post_init__(self):
        if self.kernel.size is not None and self.kernel.size != self.pencil.size:
            raise ValueError("kernel size must match the pencil size")

    @property
    def size(self) -> int:
        return self.pencil.size

    @property
    def order(self) -> int:
        return self.pencil.order


@dataclass
class ReductionTrace:
    steps: list
    terminal_status: str
    initial: IDEOperator

    @property
    def final(self) -> IDEOperator:
        return self.steps[-1][1] if self.steps else self.initial

    @property
    def step_count(self) -> int:
        return len(self.steps)

    def to_text(self) -> str:
        out = [f"terminal_status = {self.terminal_status}", f"steps = {len(self.steps)}"]
        for i, (P, op) in enumerate(self.steps, start=1):
            out.append(f"[step {i}]")
            out.append("P =")
            out.append(format_matrix(P))
            out.append(format_operator(op).rstrip("\n"))
        return "\n".join(out) + "\n"


# -- operator algebra -----------------------------------------------------------

def differentiate_operator(op: IDEOperator) -> IDEOperator:
    """Operator of (d/dt) composed with ``op``.

    d/dt int_0^t K(t-s) v(s) ds = K(0) v(t) + int_0^t K'(t-s) v(s) ds, so the
    order rises by one, K(0) becomes the new order-0 coefficient, and the
    kernel is replaced by its derivative.
    """
    n = op.size
    coeffs = (op.kernel.at_zero(n),) + tuple(op.pencil.coeffs)
    return IDEOperator(PolyMatrixPencil(coeffs), op.kernel.derivative())


def omega0_step(op: IDEOperator, tol: float = RANK_TOL) -> tuple[np.ndarray, IDEOperator]:
    """One index-lowering step: compress rows of A_k, differentiate the zero block."""
    n, k = op.size, op.order
    P, r = row_compress(op.pencil.leading, tol)
    if r == n:
        raise NotSingularLeading("leading coefficient matrix is nonsingular")
    if not np.isfinite(P).all() or abs(np.linalg.det(P)) < 1e-12:
        raise SingularP("row compression produced a singular transformation")
    B = [P @ a for a in op.pencil.coeffs]
    B[k][r:] = 0.0
    K = op.kernel.left_multiply(P)
    bottom = np.arange(n) >= r
    top = ~bottom
    C = [b.copy() for b in B]
    for i in range(k, 0, -1):
        C[i][bottom] = B[i - 1][bottom]
    C[0][bottom] = K.at_zero(n)[bottom]
    kernel = K.rows(top) + K.rows(bottom).derivative()
    return P, IDEOperator(PolyMatrixPencil(tuple(C)), kernel)


def symbol_determinant(op: IDEOperator) -> list:
    """det of q(lambda) * (xi(lambda) + Laplace[K](lambda)) as a polynomial.

    ``q`` clears the kernel denominators, so the result vanishes identically
    exactly when the operator's symbol does.
    """
    n = op.size
    maxpow: dict[float, int] = {}
    for t in op.kernel.terms:
        maxpow[t.rate] = max(maxpow.get(t.rate, -1), t.power)

    def lin(mu):
        return [-mu, 1.0]

    q = [1.0]
    for mu, m in maxpow.items():
        q = poly.mul(q, poly.power(lin(mu), m + 1))
    entries = [[poly.mul(q, op.pencil.entry(i, j)) for j in range(n)] for i in range(n)]
    for t in op.kernel.terms:
        # m! q / (lambda - mu)^(m+1)
        factor = [float(math.factorial(t.power))]
        for mu, m in maxpow.items():
            e = m + 1 - (t.power + 1 if mu == t.rate else 0)
            factor = poly.mul(factor, poly.power(lin(mu), e))
        for i in range(n):
            for j in range(n):
                if t.matrix[i, j] != 0:
                    entries[i][j] = poly.add(entries[i][j], poly.scale(factor, float(t.matrix[i, j])))
    d = poly_det(entries)
    scale = 1.0
    for row in entries:
        scale *= max(sum(abs(c) for e in row for c in e), 1e-300)
    return poly.trim([0.0 if abs(c) <= 1e-10 * scale else c for c in d])


def _has_null_row(op: IDEOperator) -> bool:
    n = op.size
    for i in range(n):
        if all(not np.any(a[i]) for a in op.pencil.coeffs) and \
                all(not np.any(t.matrix[i]) for t in op.kernel.terms):
            return True
    return False


def default_max_steps(op: IDEOperator) -> int:
    n, k = op.size, op.order
    extra = n * (op.kernel.max_power() + 1) if op.kernel else 0
    return n * k + 1 + extra


def reduce_to_nonsingular(op: IDEOperator, max_steps: int | None = None,
                          tol: float = RANK_TOL) -> ReductionTrace:
    """Iterate ``omega0_step`` until the leading matrix is nonsingular."""
    if max_steps is None:
        max_steps = default_max_steps(op)
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    steps: list = []
    if not symbol_determinant(op):
        return ReductionTrace(steps, INFINITE_DIM, op)
    cur = op
    while rank_of(cur.pencil.leading, tol) < cur.size:
        if _has_null_row(cur):
            return ReductionTrace(steps, INFINITE_DIM, op)
        if len(steps) >= max_steps:
            return ReductionTrace(steps, STEP_LIMIT, op)
        P, cur = omega0_step(cur, tol)
        steps.append((P, cur))
    return ReductionTrace(steps, NONSINGULAR_LEADING, op)


class LROResult(NamedTuple):
    exists: bool
    witness: int | None
    reports: list  # PencilReport per swept j

    def __bool__(self):
        return self.exists


def lro_exists(op: IDEOperator, j_max: int | None = None, tol: float = RANK_TOL) -> LROResult:
    """Sweep j = 0..j_max over (d/dt)**j composed with op.

    A witness is the first j whose differentiated pencil is finite
    dimensional with index l_j <= j + k, i.e. regularizing that pencil does
    not need more derivatives than the differentiated order provides.
    """
    n, k = op.size, op.order
    if j_max is None:
        j_max = n * k + 2
    if j_max < 0:
        raise ValueError("j_max must be >= 0")
    reports: list[PencilReport] = []
    cur = op
    for j in range(j_max + 1):
        if j:
            cur = differentiate_operator(cur)
        rep = analyze(cur.pencil, tol=tol)
        reports.append(rep)
        if rep.finite_dim and rep.index_l <= j + k:
            return LROResult(True, j, reports)
    return LROResult(False, None, reports)


# -- numeric application (verification) -----------------------------------------

def apply_numeric(op: IDEOperator, v: Callable[[float, int], np.ndarray], t: float,
                  quad: Callable[[Callable[[float], float], float, float], float]) -> np.ndarray:
    """Evaluate (op v)(t) given ``v(s, order)`` and a scalar quadrature rule."""
    n = op.size
    out = np.zeros(n)
    for i, a in enumerate(op.pencil.coeffs):
        if np.any(a):
            out += a @ v(t, i)
    if op.kernel:
        for row in range(n):
            out[row] += quad(lambda s: float(op.kernel(t - s)[row] @ v(s, 0)), 0.0, t)
    return out


# -- text format -------------------------------------------------------------------

def parse_operator(text: str) -> IDEOperator:
    """Pencil text format followed by optional 'KERNEL m mu' + n x n blocks."""
    lines = iter(content_lines(text))
    n, k = read_header(lines)
    mats = [read_matrix(lines, n) for _ in range(k + 1)]
    terms = []
    for no, toks in lines:
        if toks[0].upper() != "KERNEL" or len(toks) != 3:
            raise FormatError("expected 'KERNEL m mu'", no)
        try:
            m, mu = int(toks[1]), float(toks[2])
        except ValueError:
            raise FormatError("bad KERNEL parameters", no) from None
        if m < 0:
            raise FormatError("kernel power must be >= 0", no)
        terms.append((read_matrix(lines, n), m, mu))
    return IDEOperator(PolyMatrixPencil(tuple(mats)), ExpPolyKernel(terms, n))


def format_operator(op: IDEOperator) -> str:
    parts = [f"{op.size} {op.order}"] + [format_matrix(a) for a in op.pencil.coeffs]
    for t in op.kernel.terms:
        parts.append(f"KERNEL {t.power} {t.rate:.17g}")
        parts.append(format_matrix(t.matrix))
    return "\n".join(parts) + "\n"
