import numpy as np
import pytest

from switchlyap.conic import (
    ConicProgram,
    SolverSettings,
    attach_det_root_objective,
    min_eigenvalue,
    solve_linear_sdp,
    solve_maxdet,
    svec,
    svec_dim,
    sym_col_scale,
    sym_pairs,
    unsvec,
)


def _psd_upper_bound(prog, var, bound):
    """Add bound - var >= 0 as a PSD cone on the svec components."""
    n = bound.shape[0]
    nf = svec_dim(n)
    scale = sym_col_scale(n)
    prog.add_psd(n, {var: -np.diag(1.0 / scale) @ np.eye(nf)}, svec(bound), ("ub",))


def test_svec_roundtrip():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3, 5, 8):
        M = rng.normal(size=(n, n))
        M = M + M.T
        v = svec(M)
        assert v.shape == (svec_dim(n),)
        assert np.allclose(unsvec(v), M)
        # svec preserves the Frobenius inner product
        N = rng.normal(size=(n, n))
        N = N + N.T
        assert np.isclose(svec(M) @ svec(N), np.sum(M * N))


def test_svec_batched():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(4, 3, 3))
    M = M + np.transpose(M, (0, 2, 1))
    V = svec(M)
    assert V.shape == (4, 6)
    assert np.allclose(unsvec(V), M)


def test_sym_pairs_column_stacked():
    assert sym_pairs(2) == ((0, 0), (0, 1), (1, 1))
    assert sym_pairs(3) == ((0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2))


def test_min_eigenvalue_checks_symmetry():
    assert np.isclose(min_eigenvalue(np.diag([2.0, -1.0])), -1.0)
    with pytest.raises(ValueError):
        min_eigenvalue(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_maxdet_identity_box():
    prog = ConicProgram()
    prog.add_symmetric("W", 2)
    _psd_upper_bound(prog, "W", np.eye(2))
    attach_det_root_objective(prog, "W")
    rep = solve_maxdet(prog)
    assert rep.status == "optimal"
    assert abs(rep.objective) < 1e-6
    assert np.allclose(prog.value(rep.x, "W"), np.eye(2), atol=1e-5)


def test_maxdet_diagonal_box():
    prog = ConicProgram()
    prog.add_symmetric("W", 2)
    _psd_upper_bound(prog, "W", np.diag([2.0, 3.0]))
    attach_det_root_objective(prog, "W")
    rep = solve_maxdet(prog)
    assert rep.status == "optimal"
    assert abs(rep.objective - np.log(6.0)) < 1e-6
    assert np.allclose(prog.value(rep.x, "W"), np.diag([2.0, 3.0]), atol=1e-5)


def test_maxdet_needs_det_target():
    prog = ConicProgram()
    prog.add_symmetric("W", 2)
    _psd_upper_bound(prog, "W", np.eye(2))
    with pytest.raises(ValueError):
        solve_maxdet(prog)


def test_maxdet_odd_dimension():
    # exercises the padded levels of the geometric-mean tree
    prog = ConicProgram()
    prog.add_symmetric("W", 3)
    _psd_upper_bound(prog, "W", np.diag([1.0, 2.0, 4.0]))
    attach_det_root_objective(prog, "W")
    rep = solve_maxdet(prog)
    assert rep.status == "optimal"
    assert abs(rep.objective - np.log(8.0)) < 1e-5


def test_maxdet_scalar():
    prog = ConicProgram()
    prog.add_symmetric("W", 1)
    _psd_upper_bound(prog, "W", np.array([[5.0]]))
    attach_det_root_objective(prog, "W")
    rep = solve_maxdet(prog)
    assert rep.status == "optimal"
    assert abs(rep.objective - np.log(5.0)) < 1e-6


def test_linear_sdp_scalar_bound():
    prog = ConicProgram()
    prog.add_scalar("rho")
    row = np.array([[1.0]])
    prog.add_nonneg({"rho": row}, np.array([-5.0]), ("lb",))
    prog.add_objective({"rho": np.array([1.0])})
    rep = solve_linear_sdp(prog)
    assert rep.status == "optimal"
    assert abs(prog.value(rep.x, "rho") - 5.0) < 1e-7


def test_linear_sdp_schur_corner():
    # min rho s.t. [[rho, 1], [1, 1]] >= 0 has optimum rho = 1
    prog = ConicProgram()
    prog.add_scalar("rho")
    C = np.zeros((3, 1))
    C[0, 0] = 1.0
    prog.add_psd(2, {"rho": C}, svec(np.array([[0.0, 1.0], [1.0, 1.0]])), ("blk",))
    prog.add_objective({"rho": np.array([1.0])})
    rep = solve_linear_sdp(prog)
    assert rep.status == "optimal"
    assert abs(prog.value(rep.x, "rho") - 1.0) < 1e-6


def test_infeasible_status():
    prog = ConicProgram()
    prog.add_scalar("t")
    row = np.array([[1.0]])
    prog.add_nonneg({"t": row}, np.array([-1.0]), ("lo",))   # t >= 1
    prog.add_nonneg({"t": -row}, np.array([0.0]), ("hi",))   # t <= 0
    prog.add_objective({"t": np.array([1.0])})
    rep = prog.solve()
    assert rep.status == "infeasible"


def test_unbounded_status():
    prog = ConicProgram()
    prog.add_scalar("t")
    prog.add_nonneg({"t": np.array([[1.0]])}, np.array([0.0]), ("lo",))
    prog.add_objective({"t": np.array([-1.0])})
    rep = prog.solve()
    assert rep.status == "unbounded"


def test_added_constraint_never_improves_maxdet():
    prog = ConicProgram()
    prog.add_symmetric("W", 2)
    _psd_upper_bound(prog, "W", np.diag([2.0, 3.0]))
    attach_det_root_objective(prog, "W")
    base = solve_maxdet(prog).objective

    tighter = ConicProgram()
    tighter.add_symmetric("W", 2)
    _psd_upper_bound(tighter, "W", np.diag([2.0, 3.0]))
    nf = svec_dim(2)
    scale = sym_col_scale(2)
    tighter.add_psd(
        2, {"W": -np.diag(1.0 / scale) @ np.eye(nf)}, svec(np.diag([1.5, 3.0])), ("ub2",)
    )
    attach_det_root_objective(tighter, "W")
    rep = solve_maxdet(tighter)
    assert rep.objective <= base + 1e-9


def test_without_tags_drops_rows():
    prog = ConicProgram()
    prog.add_scalar("t")
    row = np.array([[1.0]])
    prog.add_nonneg({"t": row}, np.array([-5.0]), ("keep",))  # t >= 5
    prog.add_nonneg({"t": row}, np.array([-9.0]), ("drop",))  # t >= 9
    prog.add_objective({"t": np.array([1.0])})
    full = prog.solve()
    assert abs(prog.value(full.x, "t") - 9.0) < 1e-7
    sub = prog.without_tags([("drop",)])
    red = sub.solve()
    assert abs(sub.value(red.x, "t") - 5.0) < 1e-7
    with pytest.raises(RuntimeError):
        sub.add_scalar("u")


def test_audit_by_tag():
    prog = ConicProgram()
    prog.add_scalar("t")
    row = np.array([[1.0]])
    prog.add_nonneg({"t": row}, np.array([-5.0]), ("lb",))
    prog.add_nonneg({"t": -row}, np.array([8.0]), ("ub",))
    slack = prog.audit(np.array([6.0]))
    assert np.isclose(slack[("lb",)], 1.0)
    assert np.isclose(slack[("ub",)], 2.0)


def test_report_worst_slack_on_optimal():
    prog = ConicProgram()
    prog.add_symmetric("W", 2)
    _psd_upper_bound(prog, "W", np.eye(2))
    attach_det_root_objective(prog, "W")
    rep = solve_maxdet(prog)
    assert rep.worst_slack is not None
    assert rep.worst_slack >= -SolverSettings().audit_tol


def test_dump_is_self_describing(tmp_path):
    prog = ConicProgram()
    prog.add_symmetric("W", 2)
    _psd_upper_bound(prog, "W", np.eye(2))
    out = tmp_path / "prog.txt"
    prog.dump(out)
    text = out.read_text()
    assert "W" in text
    assert "psd" in text
    assert "ub" in text


def test_duplicate_variable_rejected():
    prog = ConicProgram()
    prog.add_scalar("t")
    with pytest.raises(ValueError):
        prog.add_scalar("t")
