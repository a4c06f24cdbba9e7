import numpy as np
import pytest

from switchlyap.casestudies import build_case
from switchlyap.intervals import build_error_model, solve_operating_point
from switchlyap.sampling import (
    STREAM_SP1,
    STREAM_SP2,
    STREAM_VALIDATION,
    sample_batch,
    sample_stochastic_row,
    stream_rng,
)


def _error_model(name):
    case = build_case(name)
    op = solve_operating_point(case.model, case.lam, residual_tol=1e-6)
    return case, build_error_model(case.model, op)


def test_streams_are_disjoint():
    a = stream_rng(7, STREAM_SP1).uniform(size=8)
    b = stream_rng(7, STREAM_SP2).uniform(size=8)
    c = stream_rng(7, STREAM_VALIDATION).uniform(size=8)
    assert not np.allclose(a, b)
    assert not np.allclose(a, c)
    assert np.allclose(a, stream_rng(7, STREAM_SP1).uniform(size=8))


def test_box_samples_stay_in_intervals():
    case, em = _error_model("comparison")
    batch = sample_batch(em, 200, 3, measure="box", stream=STREAM_SP1)
    assert batch.A.shape == (200, 3, 2, 2)
    assert batch.L.shape == (200, 3, 2)
    for p in range(3):
        assert np.all(batch.A[:, p] >= em.base.A[p].lower - 1e-12)
        assert np.all(batch.A[:, p] <= em.base.A[p].upper + 1e-12)
        assert np.all(batch.L[:, p] >= em.L[p].lower - 1e-12)
        assert np.all(batch.L[:, p] <= em.L[p].upper + 1e-12)


def test_box_sample_mean_near_midpoint():
    """The uncertain entry is A[0, 1] of every mode; its sample mean should
    approach the interval midpoint."""
    case, em = _error_model("comparison")
    batch = sample_batch(em, 4000, 11, measure="box", stream=STREAM_SP1)
    for p in range(3):
        iv = em.base.A[p]
        mean = batch.A[:, p, 0, 1].mean()
        mid = iv.midpoint()[0, 1]
        hw = 0.5 * iv.width[0, 1]
        assert abs(mean - mid) < 0.05 * hw


def test_batches_reproducible_from_seed():
    _, em = _error_model("imdp")
    b1 = sample_batch(em, 50, 5, measure="credal", stream=STREAM_SP1)
    b2 = sample_batch(em, 50, 5, measure="credal", stream=STREAM_SP1)
    assert np.array_equal(b1.A, b2.A)
    assert np.array_equal(b1.L, b2.L)
    b3 = sample_batch(em, 50, 6, measure="credal", stream=STREAM_SP1)
    assert not np.array_equal(b1.A, b3.A)


def test_stochastic_row_sampler_valid():
    rng = np.random.default_rng(0)
    lo = np.array([0.1, 0.0, 0.2, 0.05])
    hi = np.array([0.6, 0.3, 0.9, 0.4])
    for _ in range(200):
        row = sample_stochastic_row(lo, hi, rng)
        assert abs(row.sum() - 1.0) < 1e-12
        assert np.all(row >= lo - 1e-12)
        assert np.all(row <= hi + 1e-12)


def test_stochastic_row_rejects_infeasible_bounds():
    rng = np.random.default_rng(0)
    with pytest.raises(Exception):
        sample_stochastic_row(np.array([0.6, 0.6]), np.array([0.7, 0.7]), rng)


def test_credal_rows_are_stochastic_within_bounds():
    case, em = _error_model("imdp")
    credal = case.model.credal
    batch = sample_batch(em, 100, 2, measure="credal", stream=STREAM_SP1)
    m = credal.base_states
    gamma = credal.gammas[0]
    for i in range(batch.count):
        for p in range(batch.mode_count):
            P = batch.A[i, p, :m, :m] / gamma
            assert np.allclose(P.sum(axis=1), 1.0, atol=1e-10)
            assert np.all(P >= credal.P_lower[p] - 1e-10)
            assert np.all(P <= credal.P_upper[p] + 1e-10)


def test_credal_shares_transition_realization_across_blocks():
    """Both objective blocks of one sample must embed the same transition
    matrix, scaled by their own discount."""
    case, em = _error_model("moimdp")
    credal = case.model.credal
    m = credal.base_states
    g1, g2 = credal.gammas
    batch = sample_batch(em, 40, 9, measure="credal", stream=STREAM_SP1)
    for i in range(batch.count):
        for p in range(batch.mode_count):
            P1 = batch.A[i, p, :m, :m] / g1
            P2 = batch.A[i, p, m:, m:] / g2
            assert np.allclose(P1, P2, atol=1e-12)
            assert np.allclose(batch.A[i, p, :m, m:], 0.0)


def test_credal_offsets_follow_affine_identity():
    case, em = _error_model("imdp")
    batch = sample_batch(em, 30, 4, measure="credal", stream=STREAM_SP2)
    x_e = em.x_e
    eye = np.eye(em.base.n)
    for i in range(batch.count):
        for p in range(batch.mode_count):
            B = batch.L[i, p] - (batch.A[i, p] - eye) @ x_e
            assert np.all(B >= em.base.B[p].lower - 1e-9)
            assert np.all(B <= em.base.B[p].upper + 1e-9)


def test_credal_measure_requires_credal_model():
    _, em = _error_model("comparison")
    with pytest.raises(ValueError):
        sample_batch(em, 10, 0, measure="credal", stream=STREAM_SP1)


def test_unknown_measure_rejected():
    _, em = _error_model("comparison")
    with pytest.raises(ValueError):
        sample_batch(em, 10, 0, measure="gaussian", stream=STREAM_SP1)


def test_subset_keeps_metadata():
    _, em = _error_model("comparison")
    batch = sample_batch(em, 20, 1, measure="box", stream=STREAM_SP1)
    sub = batch.subset([3, 5, 7])
    assert sub.count == 3
    assert sub.seed == batch.seed
    assert sub.stream == batch.stream
    assert np.array_equal(sub.A[1], batch.A[5])
