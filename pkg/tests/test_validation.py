import numpy as np
import pytest

from switchlyap.sampling import STREAM_SP1, STREAM_SP2, ScenarioBatch, sample_batch
from switchlyap.synthesis import (
    LyapunovCertificate,
    ScenarioOffsetWarning,
    build_sp1,
    build_sp2,
    solve_sp1,
    solve_sp2,
)
from switchlyap.validation import (
    InvarianceReport,
    ViolationReport,
    empirical_violation,
    invariance_suite,
    max_quadratic_over_ellipsoid,
    stage_one_violation,
    stage_two_violation,
)


def _angular_oracle(F, v_center, W, e_center, grid=400_001):
    """Dense boundary scan for 2-by-2 problems."""
    evals, evecs = np.linalg.eigh(W)
    Wmh = (evecs * evals**-0.5) @ evecs.T
    theta = np.linspace(0.0, 2.0 * np.pi, grid)
    pts = e_center[None, :] + np.stack([np.cos(theta), np.sin(theta)], axis=1) @ Wmh.T
    diff = pts - v_center[None, :]
    return float(np.einsum("ki,ij,kj->k", diff, F, diff).max())


def test_max_quadratic_matches_dense_boundary_scan():
    rng = np.random.default_rng(7)
    for _ in range(6):
        M = rng.normal(size=(2, 2))
        F = M @ M.T + 0.3 * np.eye(2)
        M = rng.normal(size=(2, 2))
        W = M @ M.T + 0.3 * np.eye(2)
        v_center = rng.normal(size=2)
        e_center = rng.normal(size=2)
        exact = max_quadratic_over_ellipsoid(F, v_center, W, e_center)
        grid = _angular_oracle(F, v_center, W, e_center)
        assert exact >= grid - 1e-12
        assert exact == pytest.approx(grid, rel=1e-6, abs=1e-8)


def test_max_quadratic_dominates_sampled_points_in_3d():
    rng = np.random.default_rng(11)
    M = rng.normal(size=(3, 3))
    F = M @ M.T + 0.5 * np.eye(3)
    M = rng.normal(size=(3, 3))
    W = M @ M.T + 0.5 * np.eye(3)
    v_center = rng.normal(size=3)
    e_center = rng.normal(size=3)
    exact = max_quadratic_over_ellipsoid(F, v_center, W, e_center)
    evals, evecs = np.linalg.eigh(W)
    Wmh = (evecs * evals**-0.5) @ evecs.T
    u = rng.normal(size=(20000, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = e_center[None, :] + u @ Wmh.T
    diff = pts - v_center[None, :]
    sampled = np.einsum("ki,ij,kj->k", diff, F, diff).max()
    assert exact >= sampled - 1e-9
    assert exact <= sampled * 1.05 + 1e-9


def test_max_quadratic_hard_case_alignment():
    """Offset orthogonal to the dominant eigenvector still solves exactly."""
    F = np.diag([4.0, 1.0])
    W = np.eye(2)
    v_center = np.array([0.0, 0.7])
    e_center = np.zeros(2)
    exact = max_quadratic_over_ellipsoid(F, v_center, W, e_center)
    grid = _angular_oracle(F, v_center, W, e_center)
    assert exact == pytest.approx(grid, rel=1e-9, abs=1e-10)


def test_max_quadratic_coincident_centers_reduce_to_eigenvalue():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(3, 3))
    W = M @ M.T + np.eye(3)
    center = rng.normal(size=3)
    assert max_quadratic_over_ellipsoid(W, center, W, center) == pytest.approx(
        1.0, rel=1e-9
    )
    assert max_quadratic_over_ellipsoid(4.0 * W, center, W, center) == pytest.approx(
        4.0, rel=1e-9
    )


def test_violation_report_verdict_arithmetic():
    rep = ViolationReport(
        tested=1000, violated=50, by_family={"containment": 50},
        indices=(), worst_margin=-0.1, target_eps=0.0455,
    )
    assert rep.rate == 0.05
    assert rep.stderr == pytest.approx(np.sqrt(0.05 * 0.95 / 1000), rel=1e-12)
    assert rep.verdict is True
    tight = ViolationReport(
        tested=1000, violated=50, by_family={}, indices=(),
        worst_margin=-0.1, target_eps=0.02,
    )
    assert tight.verdict is False
    silent = ViolationReport(
        tested=1000, violated=50, by_family={}, indices=(), worst_margin=-0.1,
    )
    assert silent.verdict is None
    empty = ViolationReport(
        tested=0, violated=0, by_family={}, indices=(), worst_margin=0.0,
    )
    assert empty.rate == 0.0 and empty.stderr == 0.0


def test_stage_checks_reject_training_streams(comparison_run):
    run = comparison_run
    for batch in (run.batch1, run.batch2):
        with pytest.raises(ValueError):
            stage_one_violation(run.cert, batch)
        with pytest.raises(ValueError):
            stage_two_violation(run.cert, run.inv.rho, batch)


def test_zero_width_uncertainty_never_violates():
    A = [0.5 * np.eye(2)]
    L = [np.zeros(2)]
    batch = ScenarioBatch(
        A=np.tile(np.asarray(A)[None], (25, 1, 1, 1)),
        L=np.tile(np.asarray(L)[None], (25, 1, 1)),
        seed=0, stream=STREAM_SP1, measure="point",
    )
    with pytest.warns(ScenarioOffsetWarning):
        cert, _ = solve_sp1(build_sp1(batch, [1.0], trace_cap=10.0))
    inv, _ = solve_sp2(build_sp2(cert, batch))
    fresh = ScenarioBatch(
        A=np.tile(np.asarray(A)[None], (400, 1, 1, 1)),
        L=np.tile(np.asarray(L)[None], (400, 1, 1)),
        seed=1, stream="validation", measure="point",
    )
    one = stage_one_violation(cert, fresh)
    two = stage_two_violation(cert, inv.rho, fresh)
    assert one.violated == 0
    assert two.violated == 0
    assert one.worst_margin >= -1e-9
    assert two.worst_margin >= -1e-7


def test_empirical_violation_with_certified_budgets(comparison_run):
    run = comparison_run
    out = empirical_violation(
        run.cert, run.em, 2000, seed=123, measure="box", rho=run.inv.rho,
        eps=(run.conf.eps1, run.conf.eps2),
    )
    one, two = out["stage_one"], out["stage_two"]
    assert one.tested == two.tested == 2000
    assert one.verdict is True
    assert two.verdict is True
    assert set(one.by_family) == {"contraction", "offset", "origin"}
    assert max(one.by_family.values()) <= one.violated <= sum(one.by_family.values())
    assert len(one.indices) == one.violated
    assert one.target_eps == run.conf.eps1


def test_empirical_violation_skips_stage_two_without_radius(comparison_run):
    run = comparison_run
    out = empirical_violation(run.cert, run.em, 50, seed=5)
    assert set(out) == {"stage_one"}
    assert out["stage_one"].verdict is None


def test_invariance_suite_on_synthesized_certificate(comparison_run):
    run = comparison_run
    report = invariance_suite(
        run.em, run.cert, run.inv.rho, training_batch=run.batch1,
        eps2=run.conf.eps2, seed=2, points=500, fresh_realizations=150,
        trajectories=10, steps=300,
    )
    assert isinstance(report, InvarianceReport)
    assert report.origin_inside
    assert report.decrease_tested == run.batch1.count
    assert report.decrease_failures == 0
    assert report.decrease_worst < 0.0
    assert report.closure_tested == 150
    assert report.closure_ok is True
    assert report.closure_rate <= run.conf.eps2 + 3.0 * report.closure_stderr
    assert report.entry_ok
    assert report.entry_fraction == 1.0
    assert report.all_ok


def test_invariance_suite_without_budget_is_indeterminate(comparison_run):
    run = comparison_run
    report = invariance_suite(
        run.em, run.cert, run.inv.rho, training_batch=run.batch1,
        seed=3, points=100, fresh_realizations=20, trajectories=2, steps=100,
    )
    assert report.closure_budget is None
    assert report.closure_ok is None
    assert report.all_ok
