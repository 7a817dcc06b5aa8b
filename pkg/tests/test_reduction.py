import math

import numpy as np
import pytest
import sympy as sp

from dcdclab.errors import FormatError, NotSingularLeading
from dcdclab.pencil import INFINITE_DIM, PolyMatrixPencil, analyze
from dcdclab.quadrature import adaptive_simpson
from dcdclab.reduction import (NONSINGULAR_LEADING, STEP_LIMIT, ExpPolyKernel, IDEOperator,
                               apply_numeric, differentiate_operator, format_operator, lro_exists,
                               omega0_step, parse_operator, reduce_to_nonsingular)

from corpora import operator_corpus

I2, Z2 = np.eye(2), np.zeros((2, 2))
E11 = np.diag([1.0, 0.0])
NIL = np.array([[0.0, 1.0], [0.0, 0.0]])
ts, ss = sp.symbols("t s", real=True)


def quad(f, a, b):
    return adaptive_simpson(f, a, b, atol=1e-11)


def test_differentiate_kernel_free_shifts_orders():
    A1, A0 = np.array([[1.0, 2], [3, 4]]), np.array([[5.0, 6], [7, 8]])
    d = differentiate_operator(IDEOperator(PolyMatrixPencil((A0, A1))))
    assert d.order == 2
    assert np.array_equal(d.pencil.coeffs[2], A1) and np.array_equal(d.pencil.coeffs[1], A0)
    assert not np.any(d.pencil.coeffs[0]) and not d.kernel


def test_differentiate_constant_kernel():
    M = np.array([[1.0, 2], [0, 3]])
    d = differentiate_operator(IDEOperator(PolyMatrixPencil((I2,)), ExpPolyKernel([(M, 0, 0.0)])))
    assert np.array_equal(d.pencil.coeffs[0], M) and not d.kernel


def test_differentiate_exponential_kernel_on_sine():
    a = -0.7
    M = np.array([[1.0, -1], [2, 0.5]])
    op = IDEOperator(PolyMatrixPencil((E11, I2)), ExpPolyKernel([(M, 0, a)]))
    d = differentiate_operator(op)
    assert np.array_equal(d.pencil.coeffs[0], M)
    assert d.kernel.terms[0].rate == a and np.allclose(d.kernel.terms[0].matrix, a * M)

    def v(s, order):
        return np.array([math.sin(s + order * math.pi / 2), math.cos(2 * s + order * math.pi / 2) * 2**order])

    t, hstep = 0.8, 1e-4
    fd = (apply_numeric(op, v, t + hstep, quad) - apply_numeric(op, v, t - hstep, quad)) / (2 * hstep)
    assert np.allclose(apply_numeric(d, v, t, quad), fd, rtol=1e-6, atol=1e-6)


def test_derivative_commutes_with_canonicalization():
    M1, M2 = np.array([[1.0, 0], [2, 1]]), np.array([[0.5, 1], [0, -1]])
    split = ExpPolyKernel([(M1, 1, -1.0), (M2, 1, -1.0), (M1, 0, 0.5)])
    merged = ExpPolyKernel([(M1 + M2, 1, -1.0), (M1, 0, 0.5)])
    assert split == merged
    assert split.derivative() == merged.derivative()


def test_omega0_examples():
    P, red = omega0_step(IDEOperator(PolyMatrixPencil((I2, E11))))
    assert np.allclose(P, np.eye(2))
    assert np.linalg.matrix_rank(red.pencil.leading) == 2
    assert analyze(PolyMatrixPencil((I2, E11))).index_l == 1
    with pytest.raises(NotSingularLeading):
        omega0_step(IDEOperator(PolyMatrixPencil((I2, I2))))
    _, red = omega0_step(IDEOperator(PolyMatrixPencil((I2, Z2))))
    assert np.allclose(red.pencil.leading, I2)


def test_reduce_examples():
    tr = reduce_to_nonsingular(IDEOperator(PolyMatrixPencil((I2, E11))))
    assert (tr.terminal_status, tr.step_count) == (NONSINGULAR_LEADING, 1)
    assert reduce_to_nonsingular(IDEOperator(PolyMatrixPencil((Z2, NIL)))).terminal_status == INFINITE_DIM
    tr = reduce_to_nonsingular(IDEOperator(PolyMatrixPencil((I2, I2))))
    assert (tr.terminal_status, tr.step_count) == (NONSINGULAR_LEADING, 0)
    assert "terminal_status = NONSINGULAR_LEADING" in tr.to_text()


def test_step_limit():
    # index-3 chain needs three steps
    A0 = np.eye(3)
    A1 = np.array([[0.0, 1, 0], [0, 0, 1], [0, 0, 0]])
    op = IDEOperator(PolyMatrixPencil((A0, A1)))
    assert reduce_to_nonsingular(op, max_steps=1).terminal_status == STEP_LIMIT
    assert reduce_to_nonsingular(op).step_count == 3


def test_trace_invariants():
    for op in operator_corpus(30, seed=2):
        tr = reduce_to_nonsingular(op)
        for P, _ in tr.steps:
            assert abs(np.linalg.det(P)) > 1e-12
        full = np.linalg.matrix_rank(tr.final.pencil.leading) == op.size
        assert full == (tr.terminal_status == NONSINGULAR_LEADING)


def test_lro_examples():
    res = lro_exists(IDEOperator(PolyMatrixPencil((I2, E11))))
    assert res.exists and res.witness == 0
    assert not lro_exists(IDEOperator(PolyMatrixPencil((Z2, NIL))))
    # kernel I*exp(-u), A_1 = diag(1,0), A_0 = diag(1,0): witness recorded as oracle value
    op = IDEOperator(PolyMatrixPencil((E11, E11)), ExpPolyKernel([(I2, 0, -1.0)]))
    res = lro_exists(op)
    assert res.exists and res.witness == 1
    assert reduce_to_nonsingular(op).terminal_status == NONSINGULAR_LEADING


def _sym_apply(op, vs):
    """(op v)(t) computed exactly by sympy."""
    n = op.size
    out = []
    for row in range(n):
        e = sum(sum(sp.nsimplify(A[row, j]) * sp.diff(vs[j], ts, i) for j in range(n))
                for i, A in enumerate(op.pencil.coeffs))
        for term in op.kernel.terms:
            Kij = [sp.nsimplify(term.matrix[row, j]) * (ts - ss)**term.power
                   * sp.exp(sp.nsimplify(term.rate) * (ts - ss)) for j in range(n)]
            e += sum(sp.integrate(Kij[j] * vs[j].subs(ts, ss), (ss, 0, ts)) for j in range(n)
                     if term.matrix[row, j] != 0)
        out.append(e)
    return out


def test_reduced_operator_application_matches_omega_composition():
    """reduced v == (prod omega_j)(op v), with op v exact (sympy) and reduced v by quadrature."""
    v_exprs = [sp.Integer(1) + ts**2 * sp.exp(-ts / 2), ts * sp.exp(ts / 3), 2 - ts]
    checked = 0
    for op in operator_corpus(40, seed=5):
        tr = reduce_to_nonsingular(op)
        if tr.terminal_status != NONSINGULAR_LEADING or not tr.steps or op.size > 2:
            continue
        n = op.size
        vs = v_exprs[:n]
        g = _sym_apply(op, vs)
        prev = op
        for P, red in tr.steps:
            r = int(np.linalg.matrix_rank(prev.pencil.leading))
            Pg = [sum(sp.nsimplify(P[i, j]) * g[j] for j in range(n)) for i in range(n)]
            g = [Pg[i] if i < r else sp.diff(Pg[i], ts) for i in range(n)]
            prev = red
        fn = [sp.lambdify(ts, e, "math") for e in g]
        vnum = [[sp.lambdify(ts, sp.diff(e, ts, k), "math") for k in range(tr.final.order + 1)]
                for e in vs]

        def v(s, order):
            return np.array([vnum[j][order](s) for j in range(n)])

        for t in (0.4, 1.0):
            want = np.array([f(t) for f in fn])
            got = apply_numeric(tr.final, v, t, quad)
            assert np.allclose(got, want, rtol=1e-6, atol=1e-6 * max(1.0, np.max(np.abs(want))))
        checked += 1
        if checked >= 6:
            break
    assert checked >= 3


def test_operator_text_roundtrip():
    for op in operator_corpus(10, seed=8):
        back = parse_operator(format_operator(op))
        assert back.kernel == op.kernel
        assert all(np.array_equal(a, b) for a, b in zip(back.pencil.coeffs, op.pencil.coeffs))


def test_operator_parse_error():
    with pytest.raises(FormatError) as ei:
        parse_operator("1 0\n1\nKERNAL 0 1\n1\n")
    assert ei.value.line == 3
