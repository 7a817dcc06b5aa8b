"""Constant-coefficient polynomial matrix pencils xi(lambda) = sum_i lambda**i A_i.

Determinants are formed by cofactor expansion over polynomial entries, so
degree decisions never rest on floating point evaluation/interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import poly
from .errors import FormatError, NotConstantDeterminant, ResidualCheckFailed

RANK_TOL = 1e-9
DET_RTOL = 1e-10
INFINITE_DIM = "INFINITE_DIM"


@dataclass(frozen=True)
class PolyMatrixPencil:
    """Coefficient matrices ``A_0 .. A_k`` of an order-``k`` operator."""

    coeffs: tuple

    def __post_init__(self):
        mats = tuple(np.array(a, dtype=float) for a in self.coeffs)
        if not mats:
            raise ValueError("a pencil needs at least one coefficient matrix")
        n = mats[0].shape[0] if mats[0].ndim == 2 else 0
        if n < 1:
            raise ValueError("coefficient matrices must be n x n with n >= 1")
        for a in mats:
            if a.shape != (n, n):
                raise ValueError(f"coefficient of shape {a.shape}, expected {(n, n)}")
            a.setflags(write=False)
        object.__setattr__(self, "coeffs", mats)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def size(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def leading(self) -> np.ndarray:
        return self.coeffs[-1]

    def entry(self, i: int, j: int) -> list:
        """Polynomial in lambda at position (i, j)."""
        return poly.trim([float(a[i, j]) for a in self.coeffs])

    def entries(self) -> list[list[list]]:
        n = self.size
        return [[self.entry(i, j) for j in range(n)] for i in range(n)]


@dataclass(frozen=True)
class MatrixPolynomial:
    """n x n matrix whose entries are polynomials, stored as C_0 .. C_g."""

    coeffs: tuple

    def __post_init__(self):
        mats = [np.array(c, dtype=float) for c in self.coeffs]
        while len(mats) > 1 and not np.any(mats[-1]):
            mats.pop()
        for c in mats:
            c.setflags(write=False)
        object.__setattr__(self, "coeffs", tuple(mats))

    @classmethod
    def from_entries(cls, entries: Sequence[Sequence[Sequence]]) -> "MatrixPolynomial":
        n = len(entries)
        g = max([len(e) for row in entries for e in row] + [1]) - 1
        mats = np.zeros((g + 1, n, n))
        for i, row in enumerate(entries):
            for j, e in enumerate(row):
                for m, c in enumerate(e):
                    mats[m, i, j] = c
        return cls(tuple(mats))

    @property
    def size(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def entry(self, i: int, j: int) -> list:
        return poly.trim([float(c[i, j]) for c in self.coeffs])


@dataclass
class PencilReport:
    det_degree: int | str
    leading_rank: int
    finite_dim: bool
    index_l: int | None
    dj_sequence: list = field(default_factory=list)
    det_coeffs: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"det_degree = {self.det_degree}",
            f"leading_rank = {self.leading_rank}",
            f"finite_dim = {str(self.finite_dim).lower()}",
            f"index_l = {'none' if self.index_l is None else self.index_l}",
            "dj_sequence = " + " ".join(f"{j}:{d}" for j, d in self.dj_sequence),
            "det_coeffs = " + " ".join(f"{c:.17g}" for c in self.det_coeffs),
        ]
        return "\n".join(lines) + "\n"


# -- determinants over polynomial entries -----------------------------------

def poly_det(entries: Sequence[Sequence[Sequence]]) -> list:
    """Determinant of a square matrix of polynomials by Laplace expansion.

    Expansion is along the row with the most zero entries; cost grows as n!
    which is fine for the n <= 4 systems this package handles.
    """
    n = len(entries)
    if n == 0:
        return [1]
    if n == 1:
        return poly.trim(entries[0][0])
    if n == 2:
        return poly.sub(poly.mul(entries[0][0], entries[1][1]),
                        poly.mul(entries[0][1], entries[1][0]))
    row = min(range(n), key=lambda i: sum(1 for e in entries[i] if poly.trim(e)))
    total: list = []
    for j in range(n):
        e = poly.trim(entries[row][j])
        if not e:
            continue
        minor = [[entries[i][c] for c in range(n) if c != j] for i in range(n) if i != row]
        term = poly.mul(e, poly_det(minor))
        total = poly.add(total, term if (row + j) % 2 == 0 else poly.scale(term, -1))
    return total


def _det_scale(entries) -> float:
    # Hadamard-style bound on every determinant coefficient.
    s = 1.0
    for row in entries:
        s *= max(sum(abs(c) for e in row for c in e), 1e-300)
    return s


def det_polynomial(p: PolyMatrixPencil, rtol: float = DET_RTOL) -> list:
    """Coefficients of det xi(lambda), lowest power first; [] when det is identically 0."""
    entries = p.entries()
    d = poly_det(entries)
    if not d:
        return []
    thresh = rtol * _det_scale(entries)
    return poly.trim([0.0 if abs(c) <= thresh else float(c) for c in d])


def adjugate(p: PolyMatrixPencil) -> MatrixPolynomial:
    """Algebraic complement (transposed cofactor) matrix of xi(lambda)."""
    entries = p.entries()
    n = p.size
    if n == 1:
        return MatrixPolynomial((np.ones((1, 1)),))
    adj = [[[] for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[entries[r][c] for c in range(n) if c != j] for r in range(n) if r != i]
            cof = poly_det(minor)
            adj[j][i] = cof if (i + j) % 2 == 0 else poly.scale(cof, -1)
    return MatrixPolynomial.from_entries(adj)


# -- rank and row compression -------------------------------------------------

def row_compress(m, tol: float = RANK_TOL) -> tuple[np.ndarray, int]:
    """Nonsingular P and rank r with the last n-r rows of P @ m equal to zero.

    Gaussian elimination with partial pivoting; a pivot counts when it
    exceeds ``tol`` times the largest absolute entry of ``m``.
    """
    a = np.array(m, dtype=float)
    n_rows, n_cols = a.shape
    P = np.eye(n_rows)
    thresh = tol * (np.max(np.abs(a)) if a.size else 0.0)
    r = 0
    for c in range(n_cols):
        if r == n_rows:
            break
        piv = r + int(np.argmax(np.abs(a[r:, c])))
        if abs(a[piv, c]) <= thresh or a[piv, c] == 0:
            continue
        if piv != r:
            a[[r, piv]] = a[[piv, r]]
            P[[r, piv]] = P[[piv, r]]
        for i in range(r + 1, n_rows):
            f = a[i, c] / a[r, c]
            if f != 0:
                a[i] -= f * a[r]
                P[i] -= f * P[r]
        r += 1
    return P, r


def rank_of(m, tol: float = RANK_TOL) -> int:
    """Numerical rank via row reduction (pivot threshold tol * max |entry|)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    return row_compress(m, tol)[1]


# -- index analysis -----------------------------------------------------------

def shifted(p: PolyMatrixPencil, j: int) -> PolyMatrixPencil:
    """Pencil of (d/dt)**j composed with a kernel-free operator."""
    n = p.size
    return PolyMatrixPencil(tuple([np.zeros((n, n))] * j) + tuple(p.coeffs))


def index_from_degrees(n: int, order: int, d: int, r: int) -> int:
    """Smallest l with l*(n-r) >= n*order - d (integer part plus one otherwise)."""
    if r >= n:
        return 0
    num = n * order - d
    return num // (n - r) if num % (n - r) == 0 else num // (n - r) + 1


def analyze(p: PolyMatrixPencil, depth: int = 0, tol: float = RANK_TOL) -> PencilReport:
    """Determinant degree, leading rank and index of a pencil.

    The index is computed from the pencil differentiated ``depth`` times;
    for kernel-free pencils every depth yields the same value.
    """
    n, k = p.size, p.order
    r = rank_of(p.leading, tol)
    det0 = det_polynomial(p)
    if not det0:
        return PencilReport(INFINITE_DIM, r, False, None, [(0, INFINITE_DIM)], [])
    dj = []
    for j in range(depth + 1):
        dj.append((j, poly.degree(det_polynomial(shifted(p, j))) if j else poly.degree(det0)))
    j, d_j = dj[-1]
    return PencilReport(poly.degree(det0), r, True, index_from_degrees(n, j + k, d_j, r), dj, det0)


# -- closed-form solve for constant determinant -------------------------------

def apply_operator(p: PolyMatrixPencil, x: Sequence[Sequence]) -> list:
    """sum_i A_i x^(i) for a vector of polynomials in t."""
    n = p.size
    out = [[] for _ in range(n)]
    for i, a in enumerate(p.coeffs):
        dx = [poly.deriv(xc, i) for xc in x]
        for row in range(n):
            for col in range(n):
                if a[row, col] != 0 and dx[col]:
                    out[row] = poly.add(out[row], poly.scale(dx[col], float(a[row, col])))
    return out


def adjugate_solve(p: PolyMatrixPencil, f: Sequence[Sequence], rtol: float = 1e-10) -> list:
    """Solve sum_i A_i x^(i) = f exactly when det xi is a nonzero constant.

    x = (1/a0) * adj(xi)(d/dt) f.  The result is substituted back and
    compared coefficient-wise with ``f``.
    """
    det = det_polynomial(p)
    if len(det) != 1:
        raise NotConstantDeterminant(
            "det xi(lambda) is identically zero" if not det
            else f"det xi(lambda) has degree {len(det) - 1}, expected 0")
    a0 = det[0]
    adj = adjugate(p)
    n = p.size
    f = [poly.trim(fi) for fi in f]
    if len(f) != n:
        raise ValueError(f"right-hand side has {len(f)} components, expected {n}")
    x = [[] for _ in range(n)]
    for m, cm in enumerate(adj.coeffs):
        df = [poly.deriv(fj, m) for fj in f]
        for i in range(n):
            for j in range(n):
                if cm[i, j] != 0 and df[j]:
                    x[i] = poly.add(x[i], poly.scale(df[j], float(cm[i, j]) / a0))
    resid = apply_operator(p, x)
    for got, want in zip(resid, f):
        if not poly.allclose(got, want, rtol):
            raise ResidualCheckFailed(f"residual check failed: {got} != {want}")
    return x


# -- text format --------------------------------------------------------------

def content_lines(text: str) -> Iterable[tuple[int, list[str]]]:
    """Yield (line_number, tokens) for non-blank lines, '#' starts a comment."""
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            yield no, body.split()


def read_matrix(lines, n: int) -> np.ndarray:
    rows = []
    for _ in range(n):
        try:
            no, toks = next(lines)
        except StopIteration:
            raise FormatError("unexpected end of file inside a matrix block") from None
        if len(toks) != n:
            raise FormatError(f"expected {n} numbers, got {len(toks)}", no)
        try:
            rows.append([float(t) for t in toks])
        except ValueError as exc:
            raise FormatError(str(exc), no) from None
    return np.array(rows)


def read_header(lines) -> tuple[int, int]:
    try:
        no, toks = next(lines)
    except StopIteration:
        raise FormatError("empty pencil file") from None
    if len(toks) != 2:
        raise FormatError("header must be 'n k'", no)
    try:
        n, k = int(toks[0]), int(toks[1])
    except ValueError:
        raise FormatError("header must hold two integers", no) from None
    if n < 1 or k < 0:
        raise FormatError("need n >= 1 and k >= 0", no)
    return n, k


def parse_pencil(text: str) -> PolyMatrixPencil:
    lines = iter(content_lines(text))
    n, k = read_header(lines)
    mats = [read_matrix(lines, n) for _ in range(k + 1)]
    extra = next(lines, None)
    if extra is not None:
        raise FormatError("trailing content after the last matrix block", extra[0])
    return PolyMatrixPencil(tuple(mats))


def format_matrix(a) -> str:
    return "\n".join(" ".join(f"{x:.17g}" for x in row) for row in np.asarray(a))


def format_pencil(p: PolyMatrixPencil) -> str:
    blocks = [f"{p.size} {p.order}"] + [format_matrix(a) for a in p.coeffs]
    return "\n".join(blocks) + "\n"


def leading_is_singular(p: PolyMatrixPencil, tol: float = RANK_TOL) -> bool:
    return rank_of(p.leading, tol) < p.size


__all__ = [
    "INFINITE_DIM", "MatrixPolynomial", "PencilReport", "PolyMatrixPencil",
    "adjugate", "adjugate_solve", "analyze", "apply_operator", "det_polynomial",
    "format_pencil", "index_from_degrees", "parse_pencil", "poly_det", "rank_of",
    "row_compress", "shifted",
]
