"""Linear systems of one time step: the order-parameter system and the
vector-potential system, with the A.n = 0 constraint.

Fields are plain arrays: ``psi`` is complex of length ``n_dofs``; ``A`` is real
with shape ``(2, n_dofs)`` holding (A_x, A_y).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import (Assembler, ElementGeometry, derivative_product_kernel,
                  mass_kernel, quadrature_rule, stiffness_kernel)
from .mesh import (CORNER, ON_HORIZONTAL_EDGE, ON_VERTICAL_EDGE, DofMap, Mesh,
                   UnsupportedGeometryError, axis_aligned_boundary)

# degree 8 integrates |A|^2 phi phi, |psi|^2 phi phi and every energy density
# exactly for P2 fields, so discrete energy identities hold to rounding
ASSEMBLY_DEGREE = 8


@dataclass(frozen=True)
class PhysParams:
    kappa: float
    eta: float = 1.0
    H: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")


def supercurrent(psi_q: np.ndarray, grad_q: np.ndarray, kappa: float) -> np.ndarray:
    """Real form of (i/2k)(psi* grad psi - psi grad psi*) = -(1/k) Im(psi* grad psi)."""
    return -np.imag(np.conj(psi_q)[..., None] * grad_q) / kappa


class GLDiscretization:
    """Precomputed geometry, constant matrices and constraint masks for one
    mesh / element order pair.  Immutable after construction."""

    def __init__(self, mesh: Mesh, dofmap: DofMap):
        self.mesh = mesh
        self.dofmap = dofmap
        self.n = dofmap.n_dofs
        self.geom = ElementGeometry(mesh, dofmap, quadrature_rule(ASSEMBLY_DEGREE))
        self.asm = Assembler(dofmap)
        g = self.geom
        self.mass_data = self.asm.data(mass_kernel(g))
        self.stiff_data = self.asm.data(stiffness_kernel(g))
        self.M = self.asm.csr(self.mass_data)
        self.S = self.asm.csr(self.stiff_data)
        Sxx = self.asm.matrix(derivative_product_kernel(g, 0, 0))
        Syy = self.asm.matrix(derivative_product_kernel(g, 1, 1))
        D = self.asm.matrix(derivative_product_kernel(g, 0, 1))
        self.Sxx, self.Syy, self.D = Sxx, Syy, D
        lap = Sxx + Syy
        skew = D - D.T
        # curl-curl + grad-div form on (A_x, A_y), rows = test, cols = trial
        self.curl_div = sp.bmat([[lap, skew], [-skew, lap]], format="csr")
        self.M2 = sp.block_diag([self.M, self.M], format="csr")
        # curl moments: (1, curl phi) for A_x and A_y test functions
        ones = np.ones(g.wdet.shape)
        dx = np.einsum("tq,tqa->ta", g.wdet * ones, g.dphi[..., 0])
        dy = np.einsum("tq,tqa->ta", g.wdet * ones, g.dphi[..., 1])
        self.curl_moments = np.concatenate([-self.asm.vector(dy), self.asm.vector(dx)])
        self._pinned = None

    # ------------------------------------------------------------------ psi
    def psi_system(self, psi_prev: np.ndarray, A_prev: np.ndarray, p: PhysParams, tau: float):
        g = self.geom
        Aq = np.stack([g.values(A_prev[0]), g.values(A_prev[1])], axis=-1)  # (T,Q,2)
        w = np.abs(g.values(psi_prev)) ** 2 + np.sum(Aq ** 2, axis=-1)
        adphi = np.einsum("tqk,tqbk->tqb", Aq, g.dphi)
        C = np.einsum("tq,qa,tqb->tab", g.wdet, g.phi, adphi)
        local = (1j / p.kappa) * (C - C.transpose(0, 2, 1)) + mass_kernel(g, w)
        data = (self.asm.data(local) + (p.eta / tau) * self.mass_data
                + self.stiff_data / p.kappa ** 2)
        L = self.asm.csr(data)
        rhs = (p.eta / tau + 1.0) * (self.M @ psi_prev)
        return L, rhs

    # -------------------------------------------------------------------- A
    def A_system(self, psi_bar: np.ndarray, A_prev: np.ndarray, p: PhysParams, tau: float,
                 constrain: bool = True):
        g = self.geom
        pq = g.values(psi_bar)
        w = np.abs(pq) ** 2
        Mw = self.asm.matrix(mass_kernel(g, w))
        K = self.curl_div + self.M2 / tau + sp.block_diag([Mw, Mw], format="csr")
        J = supercurrent(pq, g.gradients(psi_bar), p.kappa)  # (T,Q,2)
        jx = self.asm.vector(np.einsum("tq,qa->ta", g.wdet * J[..., 0], g.phi))
        jy = self.asm.vector(np.einsum("tq,qa->ta", g.wdet * J[..., 1], g.phi))
        rhs = (self.M2 @ A_prev.reshape(-1)) / tau + p.H * self.curl_moments - np.concatenate([jx, jy])
        if constrain:
            K, rhs = apply_normal_constraints(self.mesh, self.dofmap, (K, rhs), self)
        return K, rhs

    def pinned(self) -> np.ndarray:
        """Boolean mask over the 2N vector unknowns fixed by A.n = 0."""
        if self._pinned is None:
            if not axis_aligned_boundary(self.mesh):
                raise UnsupportedGeometryError(
                    "A.n = 0 is imposed componentwise and needs axis-aligned boundary edges")
            cls = self.dofmap.boundary_class
            px = (cls == ON_VERTICAL_EDGE) | (cls == CORNER)
            py = (cls == ON_HORIZONTAL_EDGE) | (cls == CORNER)
            self._pinned = np.concatenate([px, py])
        return self._pinned


def apply_normal_constraints(mesh: Mesh, dofmap: DofMap, system, disc: GLDiscretization | None = None):
    """Pin A_x = 0 on vertical-edge dofs and A_y = 0 on horizontal-edge dofs
    (both at corners) by symmetric row/column elimination."""
    K, rhs = system
    if disc is None:
        disc = GLDiscretization(mesh, dofmap)
    pinned = disc.pinned()
    keep = (~pinned).astype(float)
    Dk = sp.diags(keep)
    Kc = (Dk @ K @ Dk + sp.diags(1.0 - keep)).tocsr()
    Kc.eliminate_zeros()
    Kc.sort_indices()
    return Kc, rhs * keep


def assemble_psi_system(mesh, dofmap, psi_prev, A_prev, p: PhysParams, tau: float,
                        disc: GLDiscretization | None = None):
    disc = disc or GLDiscretization(mesh, dofmap)
    return disc.psi_system(psi_prev, A_prev, p, tau)


def assemble_A_system(mesh, dofmap, psi_bar, A_prev, p: PhysParams, tau: float,
                      disc: GLDiscretization | None = None, constrain: bool = True):
    disc = disc or GLDiscretization(mesh, dofmap)
    return disc.A_system(psi_bar, A_prev, p, tau, constrain=constrain)
