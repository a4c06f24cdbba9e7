import json

import numpy as np
import pytest

from switchlyap.casestudies import build_case, comparison_case
from switchlyap.intervals import (
    IntervalMatrix,
    ModelFormatError,
    NotSchurStable,
    build_error_model,
    is_schur_stable,
    mixed_nominal,
    model_from_dict,
    model_to_dict,
    nominal_midpoint,
    operating_point_residual,
    project_operating_point,
    solve_operating_point,
)


def test_interval_matrix_basics():
    iv = IntervalMatrix([[0.0, 1.0]], [[0.5, 1.0]])
    assert np.allclose(iv.width, [[0.5, 0.0]])
    assert np.allclose(iv.midpoint(), [[0.25, 1.0]])
    assert iv.contains([[0.3, 1.0]])
    assert not iv.contains([[0.6, 1.0]])
    assert iv.contains([[0.5000001, 1.0]], atol=1e-6)


def test_interval_matrix_rejects_crossed_bounds():
    with pytest.raises(ValueError):
        IntervalMatrix([[1.0]], [[0.0]])


def test_interval_matrix_rejects_nan():
    with pytest.raises(ValueError):
        IntervalMatrix([[np.nan]], [[1.0]])


def test_schur_stability():
    assert is_schur_stable(np.diag([0.5, -0.9]))
    assert not is_schur_stable(np.diag([0.5, 1.0]))
    assert not is_schur_stable(np.array([[0.0, 2.0], [0.0, 0.0]]) + np.eye(2))


def test_mixed_nominal_is_convex_combination():
    case = comparison_case()
    lam = case.lam
    A, B = mixed_nominal(case.model, lam)
    A_direct = sum(l * Ah for l, Ah in zip(lam, case.model.A_hat))
    assert np.allclose(A, A_direct)
    B_direct = sum(l * Bh for l, Bh in zip(lam, case.model.B_hat))
    assert np.allclose(B, B_direct)


def test_operating_point_solves_stationarity():
    case = comparison_case()
    op = solve_operating_point(case.model, case.lam, residual_tol=1e-6)
    res = operating_point_residual(case.model, case.lam, op.x_e)
    assert np.linalg.norm(res) < 1e-10


def test_reported_operating_point_close_to_solved():
    """The rounded reference point [0.1, 0.2] satisfies stationarity only
    approximately; the exactly solved point must sit within that slack."""
    case = comparison_case()
    res = operating_point_residual(case.model, case.lam, np.array([0.1, 0.2]))
    assert np.linalg.norm(res) < 1e-2
    op = solve_operating_point(case.model, case.lam, residual_tol=1e-6)
    assert np.linalg.norm(op.x_e - np.array([0.1, 0.2])) < 2e-2


def test_operating_point_rejects_bad_lambda():
    case = comparison_case()
    with pytest.raises(ValueError):
        solve_operating_point(case.model, [0.5, 0.5])
    with pytest.raises(ValueError):
        solve_operating_point(case.model, [0.7, 0.2, 0.2])


def test_operating_point_requires_schur_mix():
    A = IntervalMatrix(1.5 * np.eye(2), 1.5 * np.eye(2))
    B = IntervalMatrix(np.ones(2), np.ones(2))
    doc = {
        "n": 2,
        "nominal": "midpoint",
        "modes": [
            {
                "A_lower": A.lower.tolist(),
                "A_upper": A.upper.tolist(),
                "B_lower": B.lower.tolist(),
                "B_upper": B.upper.tolist(),
            }
        ],
    }
    model, _ = model_from_dict(doc)
    with pytest.raises(NotSchurStable):
        solve_operating_point(model, [1.0])


def test_project_operating_point_finds_nearby_mix():
    case = comparison_case()
    op = solve_operating_point(case.model, case.lam, residual_tol=1e-6)
    proj = project_operating_point(case.model, op.x_e, resolution=25)
    assert np.linalg.norm(proj.x_e - op.x_e) < 0.05


def test_error_model_offsets_match_definition():
    case = comparison_case()
    op = solve_operating_point(case.model, case.lam, residual_tol=1e-6)
    em = build_error_model(case.model, op)
    for p in range(case.model.mode_count):
        expected = (case.model.A_hat[p] - np.eye(2)) @ op.x_e + case.model.B_hat[p]
        assert np.allclose(em.L_hat[p], expected)
        lo = (case.model.A[p].lower - np.eye(2)) @ op.x_e + case.model.B[p].lower
        hi = (case.model.A[p].upper - np.eye(2)) @ op.x_e + case.model.B[p].upper
        assert np.allclose(em.L[p].lower, np.minimum(lo, hi))
        assert np.allclose(em.L[p].upper, np.maximum(lo, hi))


def test_interval_exact_offsets_contain_endpoint_offsets():
    # with nonnegative x_e the two constructions coincide; with mixed signs
    # the exact interval image is strictly wider
    for name in ("comparison", "imdp", "simo"):
        case = build_case(name)
        op = solve_operating_point(case.model, case.lam, residual_tol=1e-6)
        ep = build_error_model(case.model, op, mode="endpoint")
        ex = build_error_model(case.model, op, mode="interval_exact")
        for p in range(case.model.mode_count):
            assert np.all(ex.L[p].lower <= ep.L[p].lower + 1e-12)
            assert np.all(ex.L[p].upper >= ep.L[p].upper - 1e-12)
            if np.all(op.x_e >= 0):
                assert np.allclose(ex.L[p].lower, ep.L[p].lower)
                assert np.allclose(ex.L[p].upper, ep.L[p].upper)


def test_build_error_model_rejects_unknown_mode():
    case = comparison_case()
    op = solve_operating_point(case.model, case.lam, residual_tol=1e-6)
    with pytest.raises(ValueError):
        build_error_model(case.model, op, mode="widest")


def test_model_document_roundtrip(tmp_path):
    case = build_case("imdp")
    doc = model_to_dict(case.model, lam=case.lam)
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    reloaded, extras = model_from_dict(json.loads(path.read_text()))
    assert reloaded.n == case.model.n
    assert reloaded.mode_count == case.model.mode_count
    for p in range(case.model.mode_count):
        assert np.allclose(reloaded.A[p].lower, case.model.A[p].lower)
        assert np.allclose(reloaded.A[p].upper, case.model.A[p].upper)
        assert np.allclose(reloaded.A_hat[p], case.model.A_hat[p])
    assert reloaded.credal is not None
    assert extras["measure"] == "credal"
    assert np.allclose(extras["lambda"], case.lam)


def test_model_from_dict_reports_offending_mode():
    doc = {
        "n": 2,
        "modes": [
            {
                "A_lower": [[0.0, 0.0], [0.0, 0.0]],
                "A_upper": [[0.0, 0.0], [0.0, 0.0]],
                "B_lower": [0.0, 0.0],
                "B_upper": [0.0, 0.0],
            },
            {
                "A_lower": [[0.0, 0.0]],
                "A_upper": [[0.0, 0.0], [0.0, 0.0]],
                "B_lower": [0.0, 0.0],
                "B_upper": [0.0, 0.0],
            },
        ],
    }
    with pytest.raises(ModelFormatError) as err:
        model_from_dict(doc)
    assert "mode 1" in str(err.value)
    assert "A_lower" in str(err.value)


def test_nominal_policies():
    doc = {
        "n": 1,
        "modes": [
            {
                "A_lower": [[0.2]],
                "A_upper": [[0.4]],
                "B_lower": [1.0],
                "B_upper": [3.0],
            }
        ],
    }
    mid, _ = model_from_dict(doc)
    assert np.allclose(mid.A_hat[0], [[0.3]])
    assert np.allclose(mid.B_hat[0], [2.0])
    low, _ = model_from_dict({**doc, "nominal": "lower"})
    assert np.allclose(low.A_hat[0], [[0.2]])
    up, _ = model_from_dict({**doc, "nominal": "upper"})
    assert np.allclose(up.B_hat[0], [3.0])
    assert np.allclose(nominal_midpoint(mid.A[0]), [[0.3]])


def test_explicit_nominal_must_stay_inside_intervals():
    doc = {
        "n": 1,
        "nominal": "explicit",
        "modes": [
            {
                "A_lower": [[0.2]],
                "A_upper": [[0.4]],
                "B_lower": [1.0],
                "B_upper": [3.0],
                "A_hat": [[0.9]],
                "B_hat": [2.0],
            }
        ],
    }
    with pytest.raises(ModelFormatError):
        model_from_dict(doc)
