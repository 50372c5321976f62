from math import factorial

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from gsav_gl.fem import (DegenerateElementError, ElementGeometry, P2_NODES, assemble,
                         derivative_product_kernel, eval_shapes, integrate_ref, load_kernel,
                         mass_kernel, quadrature_rule, stiffness_kernel)
from gsav_gl.mesh import Mesh, build_dof_map, multiconnected_mesh, unit_square_mesh
from oracles import p2_basis, p2_basis_grad


def monomial_integral(a, b):
    """Exact integral of x^a y^b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", [1, 2, 5, 8, 10, 12, 14])
def test_quadrature_exact_for_all_monomials(degree):
    rule = quadrature_rule(degree)
    assert rule.exact_degree >= degree
    x, y = rule.points.T
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            got = rule.weights @ (x ** a * y ** b)
            assert abs(got - monomial_integral(a, b)) <= 1e-13


def test_degree8_rule_has_16_interior_points():
    rule = quadrature_rule(8)
    assert len(rule.weights) == 16
    assert np.all(rule.weights > 0)
    x, y = rule.points.T
    assert np.all((x > 0) & (y > 0) & (x + y < 1))


def test_integrate_ref_examples():
    rule = quadrature_rule(5)
    assert integrate_ref(rule, lambda x, y: np.ones_like(x)) == pytest.approx(0.5, abs=1e-15)
    assert integrate_ref(rule, lambda x, y: x * y) == pytest.approx(1 / 24, abs=1e-15)
    assert integrate_ref(rule, lambda x, y: x ** 4) == pytest.approx(1 / 30, abs=1e-15)


def test_p1_kronecker_at_vertex():
    v, _ = eval_shapes(1, np.array([0.0, 0.0]))
    np.testing.assert_allclose(v, [1, 0, 0], atol=1e-15)


def test_p2_kronecker_at_nodes():
    v, _ = eval_shapes(2, P2_NODES)
    np.testing.assert_allclose(v, np.eye(6), atol=1e-14)
    v, _ = eval_shapes(2, np.array([0.5, 0.0]))
    np.testing.assert_allclose(v, [0, 0, 0, 1, 0, 0], atol=1e-15)


@pytest.mark.parametrize("order", [1, 2])
def test_partition_of_unity_at_centroid(order):
    v, g = eval_shapes(order, np.array([1 / 3, 1 / 3]))
    assert v.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(g.sum(axis=0), [0, 0], atol=1e-14)


def test_p2_shapes_match_independent_basis(rng):
    pts = rng.random((50, 2))
    pts = pts[pts.sum(axis=1) < 1]
    v, g = eval_shapes(2, pts)
    np.testing.assert_allclose(v, p2_basis(pts[:, 0], pts[:, 1]), atol=1e-14)
    np.testing.assert_allclose(g, p2_basis_grad(pts[:, 0], pts[:, 1]), atol=1e-13)


def _single_triangle(verts):
    verts = np.asarray(verts, dtype=float)
    m = Mesh(verts, np.array([[0, 1, 2]]), np.array([[0, 1, 0], [1, 2, 0], [2, 0, 0]]),
             np.zeros(3, dtype=np.int8))
    return m, build_dof_map(m, 2)


def _local(A, d):
    """Global matrix of a one-triangle mesh in local dof order."""
    c = d.cell_dofs[0]
    return A.toarray()[np.ix_(c, c)]


def test_p2_reference_mass_matches_adaptive_quadrature():
    m, d = _single_triangle([[0, 0], [1, 0], [0, 1]])
    M = _local(assemble(m, d, mass_kernel), d)
    oracle = np.empty((6, 6))
    for a in range(6):
        for b in range(6):
            f = lambda y, x: p2_basis(x, y)[a] * p2_basis(x, y)[b]  # noqa: E731
            oracle[a, b] = scipy.integrate.dblquad(f, 0, 1, 0, lambda x: 1 - x,
                                                   epsabs=1e-14, epsrel=1e-13)[0]
    np.testing.assert_allclose(M, oracle, atol=1e-12)
    # closed form (|T|/180) with |T| = 1/2
    closed = np.array([
        [6, -1, -1, 0, -4, 0], [-1, 6, -1, 0, 0, -4], [-1, -1, 6, -4, 0, 0],
        [0, 0, -4, 32, 16, 16], [-4, 0, 0, 16, 32, 16], [0, -4, 0, 16, 16, 32],
    ]) / 360.0
    np.testing.assert_allclose(M, closed, atol=1e-15)


def test_p1_stiffness_kills_constants():
    m = unit_square_mesh(4)
    d = build_dof_map(m, 1)
    S = assemble(m, d, stiffness_kernel)
    np.testing.assert_allclose(S @ np.ones(d.n_dofs), 0, atol=1e-13)


def test_p1_reference_stiffness_closed_form():
    m = Mesh(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([[0, 1, 2]]),
             np.zeros((0, 3), dtype=np.int64), np.zeros(3, dtype=np.int8))
    d = build_dof_map(m, 1)
    S = assemble(m, d, stiffness_kernel).toarray()
    np.testing.assert_allclose(S, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-15)


@pytest.mark.parametrize("mesh", [unit_square_mesh(3), multiconnected_mesh(6)], ids=["square", "holed"])
def test_global_matrices_reproduce_integrals(mesh):
    d = build_dof_map(mesh, 2)
    M = assemble(mesh, d, mass_kernel)
    S = assemble(mesh, d, stiffness_kernel)
    one = np.ones(d.n_dofs)
    assert one @ M @ one == pytest.approx(mesh.total_area(), abs=1e-13)
    np.testing.assert_allclose(S @ one, 0, atol=1e-12)
    # P2 reproduces quadratics: int |grad(x^2 + xy)|^2 is a closed form on the square
    if mesh.total_area() == 1.0:
        x, y = d.coords.T
        u = x ** 2 + x * y
        exact = 3.0  # int (2x+y)^2 + x^2 = 5/3 + 1 + 1/3
        assert u @ S @ u == pytest.approx(exact, abs=1e-12)


def test_derivative_products_sum_to_stiffness():
    m = unit_square_mesh(3)
    d = build_dof_map(m, 2)
    S = assemble(m, d, stiffness_kernel)
    Sxx = assemble(m, d, lambda g: derivative_product_kernel(g, 0, 0))
    Syy = assemble(m, d, lambda g: derivative_product_kernel(g, 1, 1))
    Dxy = assemble(m, d, lambda g: derivative_product_kernel(g, 0, 1))
    Dyx = assemble(m, d, lambda g: derivative_product_kernel(g, 1, 0))
    assert abs(S - Sxx - Syy).max() <= 1e-12
    assert abs(Dxy - Dyx.T).max() <= 1e-14


def test_load_vector_of_constant_is_row_sum_of_mass():
    m = unit_square_mesh(3)
    d = build_dof_map(m, 2)
    M = assemble(m, d, mass_kernel)
    b = assemble(m, d, lambda g: load_kernel(g, np.ones(g.wdet.shape)))
    np.testing.assert_allclose(b, M @ np.ones(d.n_dofs), atol=1e-15)


def test_degenerate_element_named():
    verts = np.array([[0.0, 0], [1, 0], [2, 0], [0, 1]])
    m = Mesh(verts, np.array([[0, 1, 3], [0, 1, 2]]), np.zeros((0, 3), dtype=np.int64),
             np.zeros(4, dtype=np.int8))
    dm = build_dof_map(unit_square_mesh(1), 1)  # any dofmap with 2 cells, 4 dofs
    object.__setattr__(dm, "cell_dofs", m.triangles)
    with pytest.raises(DegenerateElementError, match="triangle 1"):
        ElementGeometry(m, dm, quadrature_rule(2))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_affine_mass_and_stiffness_against_oracle(c):
    v = np.array(c).reshape(3, 2)
    J = np.column_stack([v[1] - v[0], v[2] - v[0]])
    det = np.linalg.det(J)
    if abs(det) < 1e-2:
        return
    if det < 0:
        v = v[[0, 2, 1]]
        J = np.column_stack([v[1] - v[0], v[2] - v[0]])
        det = -det
    m, d = _single_triangle(v)
    M = _local(assemble(m, d, mass_kernel), d)
    S = _local(assemble(m, d, stiffness_kernel), d)
    # reference matrices from the oracle basis, mapped by the affine transform
    g, w = np.polynomial.legendre.leggauss(6)
    g, w = 0.5 * (g + 1), 0.5 * w
    U, V = np.meshgrid(g, g, indexing="ij")
    x, y = U.ravel(), (V * (1 - U)).ravel()
    wq = (np.outer(w, w) * (1 - U)).ravel()
    phi, dphi = p2_basis(x, y), p2_basis_grad(x, y)
    Jit = np.linalg.inv(J).T
    gp = np.einsum("lk,qbk->qbl", Jit, dphi)
    M_o = det * np.einsum("q,qa,qb->ab", wq, phi, phi)
    S_o = det * np.einsum("q,qak,qbk->ab", wq, gp, gp)
    np.testing.assert_allclose(M, M_o, atol=1e-12 * max(1, abs(M_o).max()))
    np.testing.assert_allclose(S, S_o, atol=1e-11 * max(1, abs(S_o).max()))
