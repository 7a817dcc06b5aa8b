"""Seeded random corpora shared by the unit and acceptance tests."""

import numpy as np

from dcdclab.pencil import PolyMatrixPencil
from dcdclab.reduction import ExpPolyKernel, IDEOperator


def pencil_corpus(count=200, seed=0):
    """Integer pencils, n <= 3, k <= 2, entries in [-3, 3], often with a singular leading matrix."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, 4))
        k = int(rng.integers(1, 3))
        A = [rng.integers(-3, 4, size=(n, n)).astype(float) for _ in range(k + 1)]
        mode = rng.integers(0, 4)
        if mode >= 1:
            A[k][rng.integers(n)] = 0
        if mode >= 2 and n > 1:
            A[k][rng.integers(n)] = 0
        if mode == 3:
            A[k - 1][rng.integers(n)] = 0
        out.append(PolyMatrixPencil(tuple(A)))
    return out


def operator_corpus(count=50, seed=0):
    """Operators with <= 2 exp-poly kernel terms (power 0/1, rate in {-2, -1, 0, 0.5})."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, 4))
        k = int(rng.integers(1, 3))
        A = [rng.integers(-2, 3, size=(n, n)).astype(float) for _ in range(k + 1)]
        for _ in range(rng.integers(0, n + 1)):
            A[k][rng.integers(n)] = 0
        for i in range(k):
            if rng.random() < 0.4:
                A[i][rng.integers(n)] = 0
        terms = []
        for _ in range(rng.integers(0, 3)):
            M = rng.integers(-2, 3, size=(n, n)).astype(float)
            if rng.random() < 0.5:
                M[rng.integers(n)] = 0
            terms.append((M, int(rng.integers(0, 2)), float(rng.choice([-2, -1, 0, 0.5]))))
        out.append(IDEOperator(PolyMatrixPencil(tuple(A)), ExpPolyKernel(terms, n)))
    return out


def constant_det_pencils(count=50, seed=0):
    """Pencils whose determinant is a nonzero constant.

    Built as c * P (I + lambda N_1 + lambda^2 N_2) Q with strictly upper
    triangular N_i and integer P, Q of determinant 1, so det = c^n.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(1, 4))
        k = int(rng.integers(1, 3))
        Ns = [np.triu(rng.integers(-2, 3, size=(n, n)), 1).astype(float) for _ in range(k)]

        def unimodular():
            Lm = np.tril(rng.integers(-2, 3, size=(n, n)), -1) + np.eye(n)
            Um = np.triu(rng.integers(-2, 3, size=(n, n)), 1) + np.eye(n)
            return (Lm @ Um).astype(float)

        P, Q = unimodular(), unimodular()
        scale = float(rng.choice([1.0, 2.0, -3.0]))
        out.append(PolyMatrixPencil((scale * P @ Q, *(scale * P @ Nm @ Q for Nm in Ns))))
    return out
