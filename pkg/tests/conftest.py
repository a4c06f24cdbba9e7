"""Shared pipeline runs for the test suite.

The four case studies are synthesized once per session and handed to the
unit and acceptance tests as plain namespaces; every stage is deterministic
given the seed, so sharing does not couple tests.
"""

import warnings
from types import SimpleNamespace

import pytest

from switchlyap import (
    ScenarioOffsetWarning,
    build_error_model,
    build_sp1,
    build_sp2,
    certify,
    count_support_scenarios,
    sample_batch,
    solve_operating_point,
    solve_sp1,
    solve_sp2,
)
from switchlyap.casestudies import build_case
from switchlyap.confidence import DegenerateCountWarning
from switchlyap.sampling import STREAM_SP1, STREAM_SP2

SEED = 0


def run_pipeline(name: str, seed: int = SEED) -> SimpleNamespace:
    case = build_case(name)
    op = solve_operating_point(case.model, case.lam, residual_tol=1e-6)
    em = build_error_model(case.model, op)
    batch1 = sample_batch(
        em, case.sp1_count, seed, measure=case.measure, stream=STREAM_SP1
    )
    batch2 = sample_batch(
        em, case.sp2_count, seed, measure=case.measure, stream=STREAM_SP2
    )
    sp1 = build_sp1(batch1, case.lam, trace_cap=case.trace_cap)
    cert, rep1 = solve_sp1(sp1)
    sp2 = build_sp2(cert, batch2)
    inv, rep2 = solve_sp2(sp2)
    sup1 = count_support_scenarios(sp1.prog, rep1, case.sp1_count, resolve_budget=64)
    sup2 = count_support_scenarios(sp2.prog, rep2, case.sp2_count, resolve_budget=64)
    conf = certify(
        case.sp1_count,
        sup1.count,
        case.sp2_count,
        sup2.count,
        case.beta,
        measure=case.measure,
        seed=seed,
        support_methods=(sup1.method, sup2.method),
    )
    return SimpleNamespace(
        name=name,
        case=case,
        op=op,
        em=em,
        batch1=batch1,
        batch2=batch2,
        sp1=sp1,
        sp2=sp2,
        cert=cert,
        inv=inv,
        rep1=rep1,
        rep2=rep2,
        sup1=sup1,
        sup2=sup2,
        conf=conf,
        seed=seed,
    )


def _quiet_run(name: str) -> SimpleNamespace:
    # the capped fixtures legitimately warn (degenerate support counts,
    # slightly negative c); the tests that care assert on those explicitly
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCountWarning)
        warnings.simplefilter("ignore", ScenarioOffsetWarning)
        return run_pipeline(name)


@pytest.fixture(scope="session")
def comparison_run():
    return run_pipeline("comparison")


@pytest.fixture(scope="session")
def imdp_run():
    return _quiet_run("imdp")


@pytest.fixture(scope="session")
def moimdp_run():
    return _quiet_run("moimdp")


@pytest.fixture(scope="session")
def simo_run():
    return _quiet_run("simo")
