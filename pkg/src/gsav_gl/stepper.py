"""Backward-Euler generalized SAV time stepping for the gauged TDGL system.

One step:

1. solve the linear order-parameter system for ``psi_bar`` and the linear
   vector-potential system for ``A``;
2. update the auxiliary scalar to ``tilde_r`` and rescale ``psi = xi * psi_bar``
   with ``xi = 1 - (1 - zeta)^2``, ``zeta = min(tilde_r / G_bar, cap)``;
3. relax ``r`` towards the true energy of the corrected state.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import GLDiscretization, PhysParams
from .linalg import GmresConfig, GmresResult, gmres_solve
from .observables import EnergyBreakdown, energy, max_modulus

log = logging.getLogger(__name__)

ZETA_CAP = 1.0 + math.sqrt(3.0)
G_FLOOR = 1e-14


class SolverError(RuntimeError):
    def __init__(self, step: int, system: str, result: GmresResult):
        super().__init__(
            f"GMRES failed on the {system} system at step {step}: "
            f"relative residual {result.residual:.3e} after {result.iterations} iterations")
        self.step = step
        self.system = system
        self.result = result


@dataclass(frozen=True)
class SavState:
    r: float
    tilde_r: float = 0.0
    zeta: float = 1.0
    xi: float = 1.0
    alpha0: float = 0.0
    gamma: float = 0.0
    case_id: int = 0  # 0 before the first step
    step: int = 0
    t: float = 0.0
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class StepReport:
    state: SavState
    r_prev: float
    G_prev: float
    G_bar: float
    G_new: float
    K_bar: float
    K_new: float
    max_psi: float
    gmres_psi_iters: int
    gmres_A_iters: int
    energy_new: EnergyBreakdown
    tau: float


# --------------------------------------------------------------- scalar rules

def compute_Ktau(psi_new, psi_old, A_new, A_old, tau: float, M) -> float:
    """Discrete dissipation ||(psi_new-psi_old)/tau||^2 + ||(A_new-A_old)/tau||^2,
    with ``M`` the scalar mass matrix."""
    dpsi = np.asarray(psi_new) - np.asarray(psi_old)
    dA = np.asarray(A_new) - np.asarray(A_old)
    val = np.real(np.vdot(dpsi, M @ dpsi))
    for c in np.atleast_2d(dA):
        val += float(c @ (M @ c))
    return max(float(val), 0.0) / tau ** 2


def update_tilde_r(r_prev: float, G_bar: float, K_bar: float, tau: float) -> float:
    """Closed-form solution of (tr - r_prev)/tau = -(tr/G_bar) K_bar."""
    return r_prev / (1.0 + tau * K_bar / G_bar)


def correction_step(tilde_r: float, G_bar: float, psi_bar, zeta_cap: float = ZETA_CAP):
    """Return ``(zeta, xi, psi, xi_clamped)``.

    With the default cap xi can reach -2; it is clamped to [-1, 1] so that
    |psi| <= |psi_bar| still holds.  Clamping at 0 instead would make psi = 0,
    which the linear system then preserves forever.
    """
    zeta = min(tilde_r / G_bar, zeta_cap)
    xi = 1.0 - (1.0 - zeta) ** 2
    clamped = not -1.0 <= xi <= 1.0
    if clamped:
        xi = min(max(xi, -1.0), 1.0)
    return zeta, xi, xi * np.asarray(psi_bar), clamped


def relax_r(tilde_r: float, G_new: float, K_new: float, G_bar: float, K_bar: float, tau: float):
    """Choose (alpha0, gamma) and return ``(r, alpha0, gamma, case_id)``."""
    drive = tilde_r * K_bar / G_bar
    if tilde_r == G_new:
        case = 1
    elif tilde_r > G_new:
        case = 2
    elif tilde_r - G_new + tau * drive >= 0.0:
        case = 3
    else:
        case = 4

    if case == 4:
        alpha0 = 1.0 - tau * drive / (G_new - tilde_r)
        # alpha0 tr + (1 - alpha0) G_new, written without the cancellation
        r = tilde_r + tau * drive
        return r, alpha0, 0.0, 4
    if K_new == 0.0:
        return tilde_r, 0.0, 0.0, case
    if case == 1:
        gamma = drive / K_new
    else:
        gamma = (tilde_r - G_new) / (tau * K_new) + drive / K_new
    return G_new, 0.0, gamma, case


def _relative(residual: float, magnitudes) -> float:
    scale = max(abs(m) for m in magnitudes)
    return abs(residual) / scale if scale > 0 else 0.0


def relaxation_residual(r, tilde_r, gamma, K_new, G_bar, K_bar, tau) -> float:
    """Residual of (r - tr)/tau + gamma K_new - (tr/G_bar) K_bar = 0, relative
    to the largest of r/tau, tr/tau and the two dissipation terms (the
    difference r - tr cancels, so its rounding scales with r/tau)."""
    drive = (tilde_r / G_bar) * K_bar
    res = (r - tilde_r) / tau + gamma * K_new - drive
    return _relative(res, (r / tau, tilde_r / tau, gamma * K_new, drive))


def tilde_r_residual(tilde_r, r_prev, G_bar, K_bar, tau) -> float:
    """Residual of (tr - r_prev)/tau + (tr/G_bar) K_bar = 0, scaled likewise."""
    drive = (tilde_r / G_bar) * K_bar
    res = (tilde_r - r_prev) / tau + drive
    return _relative(res, (tilde_r / tau, r_prev / tau, drive))


# ---------------------------------------------------------------- time step

class GSAVStepper:
    def __init__(self, disc: GLDiscretization, params: PhysParams, tau: float,
                 zeta_cap: float = ZETA_CAP, gmres: GmresConfig = GmresConfig()):
        if not tau > 0:
            raise ValueError(f"time step must be positive, got {tau}")
        self.disc = disc
        self.params = params
        self.tau = tau
        self.zeta_cap = zeta_cap
        self.gmres = gmres
        if tau > params.eta:
            log.warning("tau=%g exceeds eta=%g; energy stability is only proven for tau <= eta",
                        tau, params.eta)

    def energy(self, psi, A) -> EnergyBreakdown:
        return energy(psi, A, self.params, disc=self.disc)

    def initial_state(self, psi0, A0) -> SavState:
        return SavState(r=self.energy(psi0, A0).total)

    def advance(self, state: SavState, psi, A, G_prev: float | None = None):
        """One GSAV step from (psi, A) = (psi^{n-1}, A^{n-1}).

        Returns ``(psi_new, A_new, new_state, report)``.
        """
        disc, p, tau = self.disc, self.params, self.tau
        step = state.step + 1
        if G_prev is None:
            G_prev = self.energy(psi, A).total

        L, b = disc.psi_system(psi, A, p, tau)
        res_psi = gmres_solve(L, b, psi, self.gmres)
        if not res_psi.converged:
            raise SolverError(step, "order-parameter", res_psi)
        psi_bar = res_psi.x

        K, c = disc.A_system(psi_bar, A, p, tau)
        res_A = gmres_solve(K, c, np.asarray(A, dtype=float).reshape(-1), self.gmres)
        if not res_A.converged:
            raise SolverError(step, "vector-potential", res_A)
        A_new = res_A.x.reshape(2, -1)

        G_bar = self.energy(psi_bar, A_new).total
        K_bar = compute_Ktau(psi_bar, psi, A_new, A, tau, disc.M)
        flags = []
        r_prev = state.r
        if G_bar < G_FLOOR:
            flags.append("g_floor")
            tilde_r, zeta, xi, psi_new = r_prev, 1.0, 1.0, psi_bar
            E_new = self.energy(psi_new, A_new)
            K_new = K_bar
            r, alpha0, gamma, case = E_new.total, 0.0, 0.0, 1
        else:
            tilde_r = update_tilde_r(r_prev, G_bar, K_bar, tau)
            zeta, xi, psi_new, clamped = correction_step(tilde_r, G_bar, psi_bar, self.zeta_cap)
            if clamped:
                flags.append("xi_clamped")
                log.warning("step %d: xi left [-1, 1] and was clamped", step)
            E_new = self.energy(psi_new, A_new)
            K_new = compute_Ktau(psi_new, psi, A_new, A, tau, disc.M)
            r, alpha0, gamma, case = relax_r(tilde_r, E_new.total, K_new, G_bar, K_bar, tau)
            if K_new == 0.0 and case != 4:
                flags.append("k_new_zero")

        new_state = SavState(r=r, tilde_r=tilde_r, zeta=zeta, xi=xi, alpha0=alpha0,
                             gamma=gamma, case_id=case, step=step, t=step * tau,
                             flags=tuple(flags))
        report = StepReport(new_state, r_prev, G_prev, G_bar, E_new.total, K_bar, K_new,
                            max_modulus(psi_new), res_psi.iterations, res_A.iterations,
                            E_new, tau)
        return psi_new, A_new, new_state, report


@dataclass
class SimResult:
    config: object
    mesh: object
    dofmap: object
    psi: np.ndarray
    A: np.ndarray
    r0: float
    G0: float
    reports: list[StepReport] = field(default_factory=list)
    snapshots: list[tuple[int, float, np.ndarray, np.ndarray]] = field(default_factory=list)
    failure: str | None = None
    failed_step: int | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def series(self) -> list[dict]:
        return [series_row(rep) for rep in self.reports]


SERIES_COLUMNS = ("step", "t", "energy", "kinetic", "condensation", "magnetic", "gauge",
                  "r", "tilde_r", "zeta", "xi", "case_id", "max_psi",
                  "gmres_psi_iters", "gmres_A_iters")


def series_row(rep: StepReport) -> dict:
    s, e = rep.state, rep.energy_new
    return {
        "step": s.step, "t": s.t, "energy": e.total, "kinetic": e.kinetic,
        "condensation": e.condensation, "magnetic": e.magnetic, "gauge": e.gauge,
        "r": s.r, "tilde_r": s.tilde_r, "zeta": s.zeta, "xi": s.xi, "case_id": s.case_id,
        "max_psi": rep.max_psi, "gmres_psi_iters": rep.gmres_psi_iters,
        "gmres_A_iters": rep.gmres_A_iters,
    }


def run(config, progress=None) -> SimResult:
    """Integrate ``config`` (a :class:`~gsav_gl.config.SimConfig`) to its final time."""
    from .config import build_discretization, initial_fields

    config.validate()
    mesh, dofmap, disc = build_discretization(config)
    params = PhysParams(config.kappa, config.eta, config.H)
    stepper = GSAVStepper(disc, params, config.tau, config.zeta_cap, config.gmres)
    psi, A = initial_fields(config, dofmap)
    state = stepper.initial_state(psi, A)
    result = SimResult(config, mesh, dofmap, psi.copy(), A.copy(), state.r, state.r,
                       warnings=list(config.warnings()))
    n_steps = config.n_steps()
    interval = config.snapshot_interval
    if interval:
        result.snapshots.append((0, 0.0, psi.copy(), A.copy()))
    G_prev = state.r
    for _ in range(n_steps):
        try:
            psi, A, state, rep = stepper.advance(state, psi, A, G_prev)
        except SolverError as exc:
            result.failure = str(exc)
            result.failed_step = exc.step
            break
        G_prev = rep.G_new
        result.reports.append(rep)
        if interval and (state.step % interval == 0 or state.step == n_steps):
            result.snapshots.append((state.step, state.t, psi.copy(), A.copy()))
        if progress is not None:
            progress(rep)
    result.psi, result.A = psi, A
    return result


__all__ = [
    "SavState", "StepReport", "SimResult", "GSAVStepper", "SolverError", "compute_Ktau",
    "update_tilde_r", "correction_step", "relax_r", "relaxation_residual",
    "tilde_r_residual", "run", "series_row", "SERIES_COLUMNS", "ZETA_CAP",
]
