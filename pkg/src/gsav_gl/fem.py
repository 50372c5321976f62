"""Reference-triangle Lagrange elements, quadrature and sparse assembly.

Reference triangle is (0,0), (1,0), (0,1) with area 1/2.  Quadrature weights
are scaled to that area.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

from .mesh import DofMap, Mesh


class DegenerateElementError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (Q, 2) reference coordinates
    weights: np.ndarray  # (Q,), sum = 1/2
    exact_degree: int


def _symmetric_rule(groups, degree):
    """Build a rule from barycentric orbit generators (a, b, c, weight) with
    weights normalised to area 1 (Dunavant convention)."""
    pts, wts = [], []
    for a, b, c, w in groups:
        orbit = {(a, b, c), (b, c, a), (c, a, b), (a, c, b), (c, b, a), (b, a, c)}
        for l0, l1, l2 in sorted(orbit):
            pts.append((l1, l2))
            wts.append(w)
    return QuadratureRule(np.array(pts), 0.5 * np.array(wts), degree)


_DUNAVANT = {
    1: [(1 / 3, 1 / 3, 1 / 3, 1.0)],
    2: [(2 / 3, 1 / 6, 1 / 6, 1 / 3)],
    5: [
        (1 / 3, 1 / 3, 1 / 3, 0.225),
        (0.059715871789770, 0.470142064105115, 0.470142064105115, 0.132394152788506),
        (0.797426985353087, 0.101286507323456, 0.101286507323456, 0.125939180544827),
    ],
    8: [
        (1 / 3, 1 / 3, 1 / 3, 0.144315607677787),
        (0.081414823414554, 0.459292588292723, 0.459292588292723, 0.095091634267285),
        (0.658861384496480, 0.170569307751760, 0.170569307751760, 0.103217370534718),
        (0.898905543365938, 0.050547228317031, 0.050547228317031, 0.032458497623198),
        (0.008394777409958, 0.263112829634638, 0.728492392955404, 0.027230314174435),
    ],
}


def collapsed_gauss_rule(degree: int) -> QuadratureRule:
    """Gauss-Jacobi x Gauss-Legendre rule mapped onto the triangle (Duffy
    collapse); exact for polynomials of total degree ``degree``."""
    m = degree // 2 + 1
    # integrate over s in [0,1] with weight (1-s): Gauss-Jacobi(alpha=1, beta=0)
    sj, wj = roots_jacobi(m, 1.0, 0.0)
    s = 0.5 * (sj + 1.0)
    ws = wj / 4.0
    tg, wg = np.polynomial.legendre.leggauss(m)
    t = 0.5 * (tg + 1.0)
    wt = 0.5 * wg
    S, Tt = np.meshgrid(s, t, indexing="ij")
    pts = np.column_stack([S.ravel(), ((1.0 - S) * Tt).ravel()])
    wts = np.outer(ws, wt).ravel()
    return QuadratureRule(pts, wts, 2 * m - 1)


@lru_cache(maxsize=None)
def quadrature_rule(degree: int) -> QuadratureRule:
    """Cheapest available rule exact to at least ``degree``."""
    for d in sorted(_DUNAVANT):
        if d >= degree:
            return _symmetric_rule(_DUNAVANT[d], d)
    return collapsed_gauss_rule(degree)


def integrate_ref(rule: QuadratureRule, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
    x, y = rule.points[:, 0], rule.points[:, 1]
    return float(np.dot(rule.weights, f(x, y)))


# nodal points of the reference P2 element, in local dof order
P2_NODES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])


def eval_shapes(order: int, ref_points) -> tuple[np.ndarray, np.ndarray]:
    """Basis values ``(..., nb)`` and reference gradients ``(..., nb, 2)``."""
    p = np.asarray(ref_points, dtype=float)
    x, y = p[..., 0], p[..., 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    one = np.ones_like(x)
    # gradients of barycentrics w.r.t. (x, y)
    g0, g1, g2 = (-one, -one), (one, 0 * one), (0 * one, one)
    if order == 1:
        vals = np.stack([l0, l1, l2], axis=-1)
        grads = np.stack([np.stack(g, axis=-1) for g in (g0, g1, g2)], axis=-2)
        return vals, grads
    if order != 2:
        raise ValueError(f"unsupported element order {order!r}")
    L = (l0, l1, l2)
    G = (g0, g1, g2)
    vals = [L[i] * (2 * L[i] - 1) for i in range(3)]
    grads = [tuple((4 * L[i] - 1) * G[i][d] for d in range(2)) for i in range(3)]
    for i, j in ((0, 1), (1, 2), (2, 0)):
        vals.append(4 * L[i] * L[j])
        grads.append(tuple(4 * (L[i] * G[j][d] + L[j] * G[i][d]) for d in range(2)))
    vals = np.stack(vals, axis=-1)
    grads = np.stack([np.stack(g, axis=-1) for g in grads], axis=-2)
    return vals, grads


class ElementGeometry:
    """Affine-map data for every triangle at the points of one quadrature rule.

    Attributes: ``phi`` (Q, nb), ``dphi`` (T, Q, nb, 2) physical gradients,
    ``wdet`` (T, Q) quadrature weights times |det J|.
    """

    def __init__(self, mesh: Mesh, dofmap: DofMap, rule: QuadratureRule):
        p = mesh.vertices[mesh.triangles]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)  # (T, 2, 2) columns
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        bad = np.flatnonzero(np.abs(det) <= 1e-14 * np.max(np.abs(J), axis=(1, 2)) ** 2)
        if len(bad):
            raise DegenerateElementError(f"triangle {bad[0]} has a singular Jacobian")
        invJ = np.linalg.inv(J)
        self.rule = rule
        self.order = dofmap.order
        self.cells = dofmap.cell_dofs
        self.n_dofs = dofmap.n_dofs
        self.phi, ref_grad = eval_shapes(dofmap.order, rule.points)
        # physical gradient = J^{-T} reference gradient
        self.dphi = np.einsum("tdk,qbd->tqbk", invJ, ref_grad)
        self.wdet = np.abs(det)[:, None] * rule.weights[None, :]
        self.x = np.einsum("qb,tbk->tqk", eval_shapes(1, rule.points)[0], p)

    def values(self, coeffs: np.ndarray) -> np.ndarray:
        """Field values at quadrature points, shape (T, Q)."""
        return coeffs[self.cells] @ self.phi.T

    def gradients(self, coeffs: np.ndarray) -> np.ndarray:
        """Field gradients at quadrature points, shape (T, Q, 2)."""
        return np.einsum("tb,tqbk->tqk", coeffs[self.cells], self.dphi)


class Assembler:
    """Scatter element blocks into a fixed CSR pattern.

    The sparsity pattern and the COO -> CSR slot map are computed once, so
    repeated assembly only costs a ``bincount``.  Summation is via
    ``bincount`` and is independent of triangle order up to rounding.
    """

    def __init__(self, dofmap: DofMap):
        cells = dofmap.cell_dofs
        nb = cells.shape[1]
        n = dofmap.n_dofs
        self.n = n
        self.cells = cells
        self.rows = np.repeat(cells, nb, axis=1).ravel()
        self.cols = np.tile(cells, (1, nb)).ravel()
        keys = self.rows * n + self.cols
        uniq, self.slot = np.unique(keys, return_inverse=True)
        self.nnz = len(uniq)
        self.indices = (uniq % n).astype(np.int64)
        r = uniq // n
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.indptr, r + 1, 1)
        self.indptr = np.cumsum(self.indptr)
        self.diag_slot = np.searchsorted(uniq, np.arange(n) * n + np.arange(n))

    def data(self, local: np.ndarray) -> np.ndarray:
        """Sum element blocks ``(T, nb, nb)`` (row = test, col = trial) into CSR data."""
        flat = local.reshape(-1)
        if np.iscomplexobj(flat):
            return (np.bincount(self.slot, flat.real, self.nnz)
                    + 1j * np.bincount(self.slot, flat.imag, self.nnz))
        return np.bincount(self.slot, flat, self.nnz)

    def matrix(self, local: np.ndarray) -> sp.csr_matrix:
        return self.csr(self.data(local))

    def csr(self, data: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()),
                             shape=(self.n, self.n))

    def vector(self, local: np.ndarray) -> np.ndarray:
        flat = local.reshape(-1)
        idx = self.cells.reshape(-1)
        if np.iscomplexobj(flat):
            return (np.bincount(idx, flat.real, self.n)
                    + 1j * np.bincount(idx, flat.imag, self.n))
        return np.bincount(idx, flat, self.n)


def assemble(mesh: Mesh, dofmap: DofMap, element_kernel, rule: QuadratureRule | None = None):
    """Generic assembly driver.

    ``element_kernel(geom)`` receives an :class:`ElementGeometry` and returns
    either a (T, nb, nb) block array (-> CSR matrix) or a (T, nb) array
    (-> load vector).
    """
    geom = ElementGeometry(mesh, dofmap, rule or quadrature_rule(2 * dofmap.order))
    local = np.asarray(element_kernel(geom))
    asm = Assembler(dofmap)
    if local.ndim == 3:
        return asm.matrix(local)
    if local.ndim == 2:
        return asm.vector(local)
    raise ValueError(f"element kernel returned an array of shape {local.shape}")


# common kernels -------------------------------------------------------------

def mass_kernel(geom: ElementGeometry, weight: np.ndarray | None = None) -> np.ndarray:
    w = geom.wdet if weight is None else geom.wdet * weight
    return np.einsum("tq,qa,qb->tab", w, geom.phi, geom.phi)


def stiffness_kernel(geom: ElementGeometry) -> np.ndarray:
    return np.einsum("tq,tqak,tqbk->tab", geom.wdet, geom.dphi, geom.dphi)


def derivative_product_kernel(geom: ElementGeometry, i: int, j: int) -> np.ndarray:
    """Blocks of  int d_i(phi_a) d_j(phi_b)  (row a = test, column b = trial)."""
    return np.einsum("tq,tqa,tqb->tab", geom.wdet, geom.dphi[..., i], geom.dphi[..., j])


def load_kernel(geom: ElementGeometry, f_q: np.ndarray) -> np.ndarray:
    return np.einsum("tq,qa->ta", geom.wdet * f_q, geom.phi)
