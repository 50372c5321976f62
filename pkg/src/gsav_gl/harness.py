"""Experiment presets, invariant audits and the temporal self-convergence study."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig, build_discretization, preset_multiconnected, preset_square
from .stepper import SimResult, StepReport, relaxation_residual, run, tilde_r_residual

MAX_BOUND_TOL = 1e-6
R_MONOTONE_TOL = 1e-12
ENERGY_TOL = 1e-10
RELAX_TOL = 1e-10
TILDE_R_TOL = 1e-12

AUDIT_CHECKS = ("max_bound", "r_monotone", "energy", "relaxation", "tilde_r")


@dataclass
class AuditSummary:
    steps: int = 0
    passed: dict[str, int] = field(default_factory=lambda: dict.fromkeys(AUDIT_CHECKS, 0))
    failed: dict[str, int] = field(default_factory=lambda: dict.fromkeys(AUDIT_CHECKS, 0))
    skipped: dict[str, int] = field(default_factory=lambda: dict.fromkeys(AUDIT_CHECKS, 0))
    first_failure: dict[str, int] = field(default_factory=dict)
    worst: dict[str, float] = field(default_factory=lambda: dict.fromkeys(AUDIT_CHECKS, 0.0))
    run_failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.run_failure is None and not any(self.failed.values())

    def record(self, check: str, ok: bool | None, step: int, value: float = 0.0) -> None:
        if ok is None:
            self.skipped[check] += 1
            return
        self.worst[check] = max(self.worst[check], value)
        if ok:
            self.passed[check] += 1
        else:
            self.failed[check] += 1
            self.first_failure.setdefault(check, step)

    def report_lines(self) -> list[str]:
        lines = [f"steps={self.steps}"]
        for c in AUDIT_CHECKS:
            lines.append(f"{c}.pass={self.passed[c]}")
            lines.append(f"{c}.fail={self.failed[c]}")
            lines.append(f"{c}.skipped={self.skipped[c]}")
            lines.append(f"{c}.worst={self.worst[c]:.3e}")
            if c in self.first_failure:
                lines.append(f"{c}.first_failure_step={self.first_failure[c]}")
        if self.run_failure:
            lines.append(f"run_failure={self.run_failure}")
        lines.append(f"verdict={'PASS' if self.ok else 'FAIL'}")
        return lines

    def as_dict(self) -> dict:
        return {"steps": self.steps, "passed": self.passed, "failed": self.failed,
                "skipped": self.skipped, "worst": self.worst,
                "first_failure": self.first_failure, "run_failure": self.run_failure,
                "verdict": "PASS" if self.ok else "FAIL"}


def audit_reports(reports: list[StepReport], eta: float, initial_max_psi: float) -> AuditSummary:
    """Check every step against the discrete guarantees of the scheme.

    ``max_bound`` only applies when the initial data satisfies |psi0| <= 1 and
    ``energy`` only when tau <= eta; otherwise those checks are skipped.
    """
    s = AuditSummary(steps=len(reports))
    bound_applies = initial_max_psi <= 1.0 + MAX_BOUND_TOL
    for rep in reports:
        st = rep.state
        n = st.step
        if bound_applies:
            excess = rep.max_psi - 1.0
            s.record("max_bound", excess <= MAX_BOUND_TOL, n, max(excess, 0.0))
        else:
            s.record("max_bound", None, n)

        rise = st.r - rep.r_prev
        s.record("r_monotone", rise <= R_MONOTONE_TOL * max(1.0, rep.r_prev), n,
                 max(rise, 0.0) / max(1.0, rep.r_prev))

        if rep.tau <= eta:
            compared = rep.G_bar if st.case_id == 4 else rep.G_new
            rise = compared - rep.G_prev
            scale = max(1.0, rep.G_prev)
            s.record("energy", rise <= ENERGY_TOL * scale, n, max(rise, 0.0) / scale)
        else:
            s.record("energy", None, n)

        if "g_floor" in st.flags:
            s.record("relaxation", None, n)
            s.record("tilde_r", None, n)
        else:
            res = relaxation_residual(st.r, st.tilde_r, st.gamma, rep.K_new, rep.G_bar,
                                      rep.K_bar, rep.tau)
            s.record("relaxation", res <= RELAX_TOL, n, res)
            res = tilde_r_residual(st.tilde_r, rep.r_prev, rep.G_bar, rep.K_bar, rep.tau)
            s.record("tilde_r", res <= TILDE_R_TOL, n, res)
    return s


def audit_result(result: SimResult) -> AuditSummary:
    cfg = result.config
    summary = audit_reports(result.reports, cfg.eta, abs(complex(cfg.psi0)))
    summary.run_failure = result.failure
    return summary


def audit_run(config: SimConfig) -> tuple[AuditSummary, SimResult]:
    result = run(config)
    return audit_result(result), result


# ---------------------------------------------------------------- convergence

@dataclass
class ConvergenceReport:
    taus: list[float]
    tau_ref: float
    errors_psi: list[float]
    errors_A: list[float]
    orders_psi: list[float | None]
    orders_A: list[float | None]

    def report_lines(self) -> list[str]:
        lines = [f"tau_ref={self.tau_ref!r}"]
        for i, t in enumerate(self.taus):
            lines.append(f"tau={t!r} err_psi={self.errors_psi[i]:.6e} err_A={self.errors_A[i]:.6e}")
        for i, (op, oa) in enumerate(zip(self.orders_psi, self.orders_A)):
            f = lambda v: "NA" if v is None else f"{v:.4f}"  # noqa: E731
            lines.append(f"order[{self.taus[i]!r}->{self.taus[i + 1]!r}] psi={f(op)} A={f(oa)}")
        return lines


def observed_orders(taus, errors) -> list[float | None]:
    """log(e_i / e_{i+1}) / log(tau_i / tau_{i+1}) for consecutive entries; None
    when the ratio is undefined (equal steps or zero errors)."""
    out = []
    for (t0, e0), (t1, e1) in zip(zip(taus, errors), zip(taus[1:], errors[1:])):
        if t0 == t1 or e0 <= 0.0 or e1 <= 0.0:
            out.append(None)
        else:
            out.append(math.log(e0 / e1) / math.log(t0 / t1))
    return out


def _final_fields(cfg: SimConfig):
    res = run(cfg)
    if res.failure:
        raise RuntimeError(f"convergence run with tau={cfg.tau} failed: {res.failure}")
    return res.psi, res.A


def temporal_convergence(base: SimConfig, taus, tau_ref: float,
                         max_workers: int | None = None) -> ConvergenceReport:
    """Self-convergence in time against a fine-step reference on one fixed mesh."""
    taus = [float(t) for t in taus]
    if not taus:
        raise ValueError("need at least one time step")
    if not tau_ref < min(taus) / 4:
        raise ValueError(f"reference step {tau_ref} must be below min(taus)/4 = {min(taus) / 4}")
    cfgs = [base.override(tau=t, snapshot_interval=0) for t in taus + [tau_ref]]
    if max_workers and max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            finals = list(pool.map(_final_fields, cfgs))
    else:
        finals = [_final_fields(c) for c in cfgs]
    _, _, disc = build_discretization(base)
    M = disc.M

    def l2(v):
        v = np.atleast_2d(v)
        return math.sqrt(max(sum(float(np.real(np.vdot(c, M @ c))) for c in v), 0.0))

    psi_ref, A_ref = finals[-1]
    e_psi = [l2(p - psi_ref) for p, _ in finals[:-1]]
    e_A = [l2(a - A_ref) for _, a in finals[:-1]]
    return ConvergenceReport(taus, tau_ref, e_psi, e_A,
                             observed_orders(taus, e_psi), observed_orders(taus, e_A))


def desk_config(kappa: float = 10.0, **overrides) -> SimConfig:
    """The square preset scaled for quick checks (n=16, T=2)."""
    return preset_square(kappa, n=16, T=2.0, **overrides)


__all__ = [
    "AuditSummary", "audit_reports", "audit_result", "audit_run", "ConvergenceReport",
    "observed_orders", "temporal_convergence", "desk_config", "preset_square",
    "preset_multiconnected",
]
