import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shum.calculus import (
    IDENTITIES, apply_Ah, apply_Dh, apply_Dh_pow, assemble_biharmonic, check_identities,
    identity_suite, second_difference_matrix,
)
from shum.mesh import GridFunction, Mesh, NodeSet


def test_Dh_examples():
    m = Mesh(3)
    c = apply_Dh(GridFunction.from_function(m.M_bar, lambda x: 0 * x + 7.0), m.M_star)
    assert np.all(c.values == 0)
    lin = apply_Dh(GridFunction.from_function(m.M_bar, lambda x: x), m.M_star)
    assert np.allclose(lin.values, 1.0)
    sq = apply_Dh(GridFunction.from_function(m.M_bar, lambda x: x**2), m.M_star)
    assert sq(0.375) == pytest.approx(0.75, abs=1e-15)


def test_Ah_examples():
    m = Mesh(3)
    assert np.allclose(apply_Ah(GridFunction(m.M_bar, np.full(5, 2.5)), m.M_star).values, 2.5)
    assert apply_Ah(GridFunction.from_function(m.M_bar, lambda x: x), m.M_star)(0.375) == 0.375
    assert apply_Ah(GridFunction.from_function(m.M_bar, lambda x: x**2), m.M_star)(0.375) == 0.15625


def test_missing_neighbour_names_node():
    m = Mesh(3)
    with pytest.raises(ValueError, match="0.125"):
        apply_Dh(GridFunction(m.M, np.ones(3)), m.M_star)


@pytest.mark.parametrize("N", [6, 11])
def test_fourth_difference_polynomials(N):
    m = Mesh(N)
    E = m.extended
    inner = NodeSet("custom", m.M.index[1:-1], m.h)
    cubic = apply_Dh_pow(GridFunction.from_function(E, lambda x: x**3), 4, inner)
    assert np.allclose(cubic.values, 0.0, atol=1e-7)
    quartic = apply_Dh_pow(GridFunction.from_function(E, lambda x: x**4), 4, inner)
    assert np.allclose(quartic.values, 24.0, rtol=1e-6)
    assert np.all(apply_Dh_pow(GridFunction.zeros(E), 4, m.M).values == 0)


def test_Dh_pow_rejects_short_support():
    m = Mesh(6)
    with pytest.raises(ValueError):
        apply_Dh_pow(GridFunction(m.M, np.ones(6)), 4, m.M)
    with pytest.raises(ValueError):
        apply_Dh_pow(GridFunction(m.M, np.ones(6)), 5)


@pytest.mark.parametrize("N", [4, 8, 15])
def test_biharmonic_matrix(N):
    m = Mesh(N)
    A = assemble_biharmonic(m).matrix
    assert np.abs(A - A.T).max() <= 1e-13 * np.abs(A).max()
    for i in range(2, N - 2):
        assert np.allclose(A[i, i - 2:i + 3] * m.h**4, [1, -4, 6, -4, 1])
    rng = np.random.default_rng(3)
    xi = rng.standard_normal((100, N))
    rq = np.einsum("ij,jk,ik->i", xi, A, xi)
    assert rq.min() >= -1e-10 * np.einsum("ij,ij->i", xi, xi).max()


@pytest.mark.parametrize("N", [5, 10])
def test_biharmonic_matrix_matches_stencil_and_gram_form(N):
    m = Mesh(N)
    op = assemble_biharmonic(m)
    L = second_difference_matrix(m)
    assert np.allclose(L.T @ L, op.matrix, rtol=1e-12, atol=0)
    rng = np.random.default_rng(N)
    for _ in range(10):
        y, z = rng.standard_normal(N), rng.standard_normal(N)
        yg = GridFunction(m.M, y)
        assert np.allclose(op.apply(yg).values, op.matrix @ y, rtol=1e-11, atol=1e-11 * np.abs(op.matrix @ y).max())
        lhs = m.h * y @ op.matrix @ z
        # D_h^2 of the zero-extended field, on M_bar
        d2 = apply_Dh_pow(yg.extend(m.extended), 2, m.M_bar).values
        e2 = apply_Dh_pow(GridFunction(m.M, z).extend(m.extended), 2, m.M_bar).values
        assert abs(lhs - m.h * d2 @ e2) <= 1e-11 * max(1.0, abs(lhs))


def test_identities_zero_input():
    m = Mesh(7)
    W = m.M
    res = check_identities(W, GridFunction.zeros(W.bar().bar()), GridFunction.zeros(W.bar()))
    assert set(res) == set(IDENTITIES)
    assert all(r == 0.0 for r in res.values())


def test_identity_suite_small():
    rep = identity_suite(Mesh(7), trials=100, seed=1)
    assert rep.passed, rep.failures()
    assert rep.residuals["product_D"] <= 1e-12 and rep.residuals["parts_D"] <= 1e-12


def test_identity_suite_reproducible():
    a = identity_suite(Mesh(5), trials=5, seed=9).residuals
    b = identity_suite(Mesh(5), trials=5, seed=9).residuals
    assert a == b
    with pytest.raises(ValueError):
        identity_suite(Mesh(5), trials=0, seed=0)


@settings(max_examples=25, deadline=None)
@given(lo=st.integers(0, 6), length=st.integers(2, 8), seed=st.integers(0, 2**20))
def test_identities_on_random_sub_meshes(lo, length, seed):
    h = 1 / 16
    W = NodeSet("custom", tuple(2 * (lo + i + 1) for i in range(length)), h)
    rng = np.random.default_rng(seed)
    U, V = W.bar().bar(), W.bar()
    res = check_identities(W, GridFunction(U, rng.uniform(-1, 1, len(U))), GridFunction(V, rng.uniform(-1, 1, len(V))))
    assert max(res.values()) <= 1e-12
