"""Sparse matrix helpers and restarted GMRES for real and complex systems.

Matrices are ``scipy.sparse.csr_matrix`` in canonical form (sorted, unique
column indices per row).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class GmresConfig:
    restart: int = 50
    tol: float = 1e-10
    max_iter: int = 10000
    preconditioner: str = "jacobi"  # "none" | "jacobi"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"GMRES tolerance must be positive, got {self.tol}")
        if self.restart < 1:
            raise ValueError(f"GMRES restart must be >= 1, got {self.restart}")
        if self.max_iter < 1:
            raise ValueError(f"GMRES max_iter must be >= 1, got {self.max_iter}")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    residual: float  # ||b - A x|| / ||b||, recomputed from x
    converged: bool

    def __iter__(self):
        return iter((self.x, self.iterations, self.residual))


def as_csr(a) -> sp.csr_matrix:
    """Canonical CSR copy; rejects non-finite stored values."""
    m = sp.csr_matrix(a)
    m.sum_duplicates()
    m.sort_indices()
    if not np.all(np.isfinite(m.data)):
        raise ValueError("sparse matrix holds non-finite values")
    return m


def spmv(a: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {a.shape} times vector of length {x.shape[0]}")
    return a @ x


def _givens(a, b):
    """Complex Givens rotation (c real, s complex) zeroing b against a."""
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, np.conj(b) / abs(b)
    h = np.hypot(abs(a), abs(b))
    c = abs(a) / h
    s = (a / abs(a)) * np.conj(b) / h
    return c, s


def gmres_solve(a: sp.spmatrix, b: np.ndarray, x0: np.ndarray | None = None,
                cfg: GmresConfig = GmresConfig()) -> GmresResult:
    """Restarted GMRES(m) with optional right Jacobi preconditioning.

    Right preconditioning keeps the monitored residual equal to the residual of
    the original system, so the stopping test is ``||b - A x|| <= tol ||b||``.
    Non-convergence is reported through ``converged=False`` with the best
    iterate found.
    """
    n = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"GMRES needs a square matrix, got {a.shape}")
    b = np.asarray(b)
    if b.shape != (n,):
        raise ValueError(f"rhs length {b.shape} does not match matrix {a.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("rhs holds non-finite values")
    dtype = np.result_type(a.dtype, b.dtype, np.float64)
    x = np.zeros(n, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return GmresResult(np.zeros(n, dtype=dtype), 0, 0.0, True)

    if cfg.preconditioner == "jacobi":
        d = a.diagonal()
        d = np.where(d == 0, 1.0, d)
        dinv = 1.0 / d
    else:
        dinv = None

    target = cfg.tol * bnorm
    r = b - a @ x
    beta = np.linalg.norm(r)
    best_x, best_res = x.copy(), beta
    it = 0
    m = cfg.restart
    while beta > target and it < cfg.max_iter:
        V = np.zeros((m + 1, n), dtype=dtype)
        H = np.zeros((m + 1, m), dtype=dtype)
        cs = np.zeros(m)
        sn = np.zeros(m, dtype=dtype)
        g = np.zeros(m + 1, dtype=dtype)
        g[0] = beta
        V[0] = r / beta
        k_used = 0
        for k in range(m):
            z = V[k] * dinv if dinv is not None else V[k]
            w = a @ z
            # classical Gram-Schmidt with one re-orthogonalisation pass
            h = V[:k + 1].conj() @ w
            w = w - h @ V[:k + 1]
            h2 = V[:k + 1].conj() @ w
            w = w - h2 @ V[:k + 1]
            h = h + h2
            hnext = np.linalg.norm(w)
            H[:k + 1, k] = h
            H[k + 1, k] = hnext
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -np.conj(sn[i]) * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            cs[k], sn[k] = _givens(H[k, k], H[k + 1, k])
            H[k, k] = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
            H[k + 1, k] = 0.0
            g[k + 1] = -np.conj(sn[k]) * g[k]
            g[k] = cs[k] * g[k]
            it += 1
            k_used = k + 1
            if hnext <= 1e-14 * abs(H[k, k]) or hnext == 0.0:
                break  # happy breakdown: Krylov space is invariant
            V[k + 1] = w / hnext
            if abs(g[k + 1]) <= target or it >= cfg.max_iter:
                break
        if k_used == 0:
            break
        y = _back_substitute(H[:k_used, :k_used], g[:k_used])
        dx = y @ V[:k_used]
        if dinv is not None:
            dx = dx * dinv
        x = x + dx
        r = b - a @ x
        beta_new = np.linalg.norm(r)
        if beta_new < best_res:
            best_x, best_res = x.copy(), beta_new
        if beta_new >= beta and abs(g[k_used]) > target:
            # no progress over a full cycle: stagnation
            beta = beta_new
            break
        beta = beta_new

    x = best_x
    res = float(np.linalg.norm(b - a @ x) / bnorm)
    return GmresResult(x, it, res, res <= cfg.tol)


def _back_substitute(R: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    y = np.zeros(k, dtype=np.result_type(R, g))
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i]
    return y
