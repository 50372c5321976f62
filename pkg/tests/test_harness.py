import math
from dataclasses import replace

import pytest

from gsav_gl.config import preset_multiconnected, preset_square
from gsav_gl.harness import (AuditSummary, audit_reports, audit_result, audit_run,
                             observed_orders, temporal_convergence)
from gsav_gl.stepper import run


def test_observed_orders_examples():
    assert observed_orders([0.04, 0.02, 0.01], [4.0, 2.0, 1.0]) == pytest.approx([1.0, 1.0])
    assert observed_orders([0.02, 0.01], [4.0, 1.0])[0] == pytest.approx(2.0)
    assert observed_orders([0.01, 0.01], [0.0, 0.0]) == [None]
    assert observed_orders([0.02, 0.01], [1.0, 0.0]) == [None]
    # non-halving ratios
    assert observed_orders([0.03, 0.01], [9.0, 1.0])[0] == pytest.approx(2.0)


def test_convergence_requires_fine_reference():
    with pytest.raises(ValueError, match="reference"):
        temporal_convergence(preset_square(5, n=2, T=0.04), [0.02, 0.01], 0.004)


def test_convergence_identical_steps_give_zero_error():
    rep = temporal_convergence(preset_square(5, n=2, T=0.04), [0.01, 0.01], 0.002)
    assert rep.errors_psi[0] == rep.errors_psi[1]
    assert rep.orders_psi == [None] and rep.orders_A == [None]


def test_convergence_aborts_on_member_failure():
    from gsav_gl.linalg import GmresConfig
    base = preset_square(5, n=2, T=0.04, gmres=GmresConfig(max_iter=1, restart=1, tol=1e-15))
    with pytest.raises(RuntimeError, match="failed"):
        temporal_convergence(base, [0.02, 0.01], 0.002)


def test_convergence_errors_shrink():
    rep = temporal_convergence(preset_square(5, n=2, T=0.2, H=0.5), [0.02, 0.01], 0.001)
    assert rep.errors_psi[1] < rep.errors_psi[0]
    assert all(math.isfinite(o) for o in rep.orders_psi)
    assert len(rep.report_lines()) == 4


def test_audit_passes_on_scaled_presets():
    summary, result = audit_run(preset_square(10, n=4, T=0.3))
    assert summary.ok, summary.report_lines()
    assert summary.steps == 30
    assert summary.passed["max_bound"] == 30
    s2, _ = audit_run(preset_multiconnected(5, n=3, T=0.1))
    assert s2.ok, s2.report_lines()


def test_audit_detects_energy_and_monotonicity_violations():
    result = run(preset_square(5, n=2, T=0.05))
    reps = result.reports
    bad = replace(reps[2], G_new=reps[2].G_prev + 1.0,
                  state=replace(reps[2].state, r=reps[2].r_prev + 1.0))
    s = audit_reports(reps[:2] + [bad] + reps[3:], 1.0, 1.0)
    assert s.failed["energy"] == 1 and s.failed["r_monotone"] == 1
    assert s.first_failure["energy"] == 3
    assert not s.ok
    assert "verdict=FAIL" in s.report_lines()


def test_audit_skips_checks_outside_hypotheses():
    result = run(preset_square(5, n=2, T=0.05, psi0=1.5 + 0j))
    s = audit_result(result)
    assert s.skipped["max_bound"] == 5
    result = run(preset_square(5, n=2, T=2.0, tau=1.0, eta=0.5))
    s = audit_result(result)
    assert s.skipped["energy"] == 2


def test_audit_summary_records_run_failure():
    s = AuditSummary(steps=0, run_failure="boom")
    assert not s.ok
