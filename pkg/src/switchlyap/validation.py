"""Out-of-sample checks of a synthesized certificate.

Two kinds of evidence are produced: empirical violation rates of the two
scenario constraint families on fresh draws, compared against the certified
levels with three binomial standard errors of slack, and a direct invariance
suite that propagates sampled points of the sublevel set one step under
sampled realizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .control import lyapunov_value, simulate
from .intervals import ErrorModel
from .sampling import (
    STREAM_SP1,
    STREAM_SP2,
    STREAM_VALIDATION,
    ScenarioBatch,
    sample_batch,
    stream_rng,
)
from .synthesis import LyapunovCertificate, scenario_lmi_data

__all__ = [
    "max_quadratic_over_ellipsoid",
    "ViolationReport",
    "stage_one_violation",
    "stage_two_violation",
    "empirical_violation",
    "InvarianceReport",
    "invariance_suite",
]


def max_quadratic_over_ellipsoid(F, v_center, W, e_center) -> float:
    """Exact maximum of (xi - v_center)'F(xi - v_center) over the ellipsoid
    (xi - e_center)'W(xi - e_center) <= 1.

    After whitening the ellipsoid this is the classic trust-region
    subproblem on the unit sphere; the stationarity multiplier is the root
    of a secular equation above the top eigenvalue, with the usual hard
    case when the linear term has no component along the top eigenspace.
    """
    F = np.asarray(F, dtype=float)
    W = np.asarray(W, dtype=float)
    m = np.asarray(v_center, dtype=float) - np.asarray(e_center, dtype=float)
    evals, evecs = np.linalg.eigh(W)
    if evals[0] <= 0:
        raise ValueError("ellipsoid matrix must be positive definite")
    Wmh = (evecs * evals**-0.5) @ evecs.T
    S = Wmh @ F @ Wmh
    g = Wmh @ (F @ m)
    base = float(m @ F @ m)
    d, U = np.linalg.eigh(S)
    w = U.T @ g
    dmax = float(d[-1])
    scale = max(1.0, abs(dmax))
    wnorm = float(np.linalg.norm(w))
    if wnorm < 1e-14 * scale:
        return base + dmax

    top = d > dmax - 1e-12 * scale
    rest = ~top
    w_top = float(np.linalg.norm(w[top]))
    phi_rest = (
        float(np.sum((w[rest] / (d[rest] - dmax)) ** 2)) if rest.any() else 0.0
    )
    if w_top <= 1e-11 * wnorm and phi_rest < 1.0:
        u = np.zeros_like(w)
        u[rest] = w[rest] / (d[rest] - dmax)
        alpha2 = max(0.0, 1.0 - phi_rest)
        val = u @ (d * u) + dmax * alpha2 - 2.0 * (w @ u) + base
        return float(val)

    def phi_minus_one(sigma):
        return float(np.sum((w / (d - sigma)) ** 2)) - 1.0

    lo = dmax + max(w_top * (1.0 - 1e-9), 1e-18 * scale)
    hi = dmax + wnorm * (1.0 + 1e-9) + 1e-18 * scale
    if phi_minus_one(lo) <= 0.0:
        sigma = lo
    else:
        sigma = brentq(phi_minus_one, lo, hi, xtol=1e-15, rtol=1e-14)
    u = w / (d - sigma)
    return float(u @ (d * u) - 2.0 * (w @ u) + base)


@dataclass(frozen=True)
class ViolationReport:
    """Empirical violation of one scenario constraint family.

    violated counts samples breaking any block of the family; by_family
    breaks the same samples down per block kind. The verdict compares the
    rate against the certified level plus three binomial standard errors.
    """

    tested: int
    violated: int
    by_family: dict
    indices: tuple
    worst_margin: float
    target_eps: float | None = None

    @property
    def rate(self) -> float:
        return self.violated / self.tested if self.tested else 0.0

    @property
    def stderr(self) -> float:
        if not self.tested:
            return 0.0
        r = self.rate
        return float(np.sqrt(r * (1.0 - r) / self.tested))

    @property
    def verdict(self) -> bool | None:
        if self.target_eps is None:
            return None
        return self.rate <= self.target_eps + 3.0 * self.stderr


def _assert_fresh(batch: ScenarioBatch):
    if batch.stream in (STREAM_SP1, STREAM_SP2):
        raise ValueError(
            "validation must not reuse training sample streams; draw the"
            " batch on the validation stream"
        )


def stage_one_violation(
    cert: LyapunovCertificate,
    batch: ScenarioBatch,
    tol: float = 1e-9,
    target_eps: float | None = None,
) -> ViolationReport:
    """Fraction of fresh scenarios breaking any first-stage matrix inequality."""
    _assert_fresh(batch)
    data = scenario_lmi_data(cert.F, cert.h, batch, cert.lam)
    N, n = batch.count, cert.n
    mu = cert.mu
    m_contraction = np.linalg.eigvalsh(data.Q - cert.W[None]).min(axis=1) - mu

    B = np.zeros((N, n + 1, n + 1))
    B[:, :n, :n] = data.Q
    B[:, :n, n] = data.rho_vec
    B[:, n, :n] = data.rho_vec
    B[:, n, n] = 1.0 - data.c
    m_offset = np.linalg.eigvalsh(B).min(axis=1) - mu
    B[:, n, n] = 1.0
    m_origin = np.linalg.eigvalsh(B).min(axis=1) - mu

    margins = np.minimum(np.minimum(m_contraction, m_offset), m_origin)
    bad = np.nonzero(margins < -tol)[0]
    return ViolationReport(
        tested=N,
        violated=int(bad.size),
        by_family={
            "contraction": int(np.sum(m_contraction < -tol)),
            "offset": int(np.sum(m_offset < -tol)),
            "origin": int(np.sum(m_origin < -tol)),
        },
        indices=tuple(int(i) for i in bad),
        worst_margin=float(margins.min()),
        target_eps=target_eps,
    )


def stage_two_violation(
    cert: LyapunovCertificate,
    rho: float,
    batch: ScenarioBatch,
    tol: float = 1e-9,
    target_eps: float | None = None,
) -> ViolationReport:
    """Fraction of fresh scenarios whose ellipsoid escapes {V <= rho}."""
    _assert_fresh(batch)
    data = scenario_lmi_data(cert.F, cert.h, batch, cert.lam)
    xi_hat = cert.xi_hat
    margins = np.empty(batch.count)
    for j in range(batch.count):
        peak = max_quadratic_over_ellipsoid(cert.F, xi_hat, cert.W, data.xi_o[j])
        margins[j] = rho - peak
    bad = np.nonzero(margins < -tol)[0]
    return ViolationReport(
        tested=batch.count,
        violated=int(bad.size),
        by_family={"containment": int(bad.size)},
        indices=tuple(int(i) for i in bad),
        worst_margin=float(margins.min()),
        target_eps=target_eps,
    )


def empirical_violation(
    cert: LyapunovCertificate,
    error_model: ErrorModel,
    fresh_count: int,
    seed: int,
    measure: str = "box",
    rho: float | None = None,
    eps: tuple = (None, None),
    tol: float = 1e-9,
) -> dict:
    """Draw fresh scenarios and rate both constraint families at once.

    Returns {"stage_one": ViolationReport, "stage_two": ViolationReport};
    the second entry is present only when rho is given.
    """
    batch = sample_batch(
        error_model, fresh_count, seed, measure=measure, stream=STREAM_VALIDATION
    )
    out = {"stage_one": stage_one_violation(cert, batch, tol, target_eps=eps[0])}
    if rho is not None:
        out["stage_two"] = stage_two_violation(
            cert, rho, batch, tol, target_eps=eps[1]
        )
    return out


# ---------------------------------------------------------------------------
# direct invariance checks


@dataclass(frozen=True)
class InvarianceReport:
    """Sampled evidence for the three defining properties of the set.

    origin_inside: V(0) <= rho. The decrease figures come from points on
    shells outside the set propagated under training realizations, where
    strict decrease holds by construction; failures should be zero. The
    closure figures count fresh realizations under which some point drawn
    uniformly inside the set escapes in one step; their frequency is held
    against the second-stage violation level. entry_fraction: closed-loop
    runs from the outer shell that enter and never leave afterwards.
    """

    points: int
    origin_inside: bool
    decrease_tested: int
    decrease_failures: int
    decrease_worst: float
    closure_tested: int
    closure_failures: int
    closure_worst: float
    closure_budget: float | None
    entry_fraction: float
    entry_violations: int

    @property
    def decrease_ok(self) -> bool:
        return self.decrease_failures == 0

    @property
    def closure_rate(self) -> float:
        if not self.closure_tested:
            return 0.0
        return self.closure_failures / self.closure_tested

    @property
    def closure_stderr(self) -> float:
        if not self.closure_tested:
            return 0.0
        r = self.closure_rate
        return float(np.sqrt(r * (1.0 - r) / self.closure_tested))

    @property
    def closure_ok(self) -> bool | None:
        if self.closure_budget is None:
            return None
        return self.closure_rate <= self.closure_budget + 3.0 * self.closure_stderr

    @property
    def entry_ok(self) -> bool:
        """No closed-loop run entered the set and left, and every run that
        had not entered by the horizon still made progress toward it."""
        return self.entry_violations == 0

    @property
    def all_ok(self) -> bool:
        return (
            self.origin_inside
            and self.decrease_ok
            and self.closure_ok is not False
            and self.entry_ok
        )


def _sphere(rng, count, n):
    u = rng.normal(size=(count, n))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _one_step(cert: LyapunovCertificate, pts, A_real, L_real):
    """Propagate points one step, switching on the realized images.

    The min-type law evaluates the candidate successors with the matrices
    the plant will actually apply; this is the form the decrease and
    closure guarantees are proved for.
    """
    P = len(A_real)
    nxt_all = np.empty((P, pts.shape[0], pts.shape[1]))
    vals = np.empty((P, pts.shape[0]))
    for p in range(P):
        nxt_all[p] = pts @ np.asarray(A_real[p]).T + np.asarray(L_real[p])
        vals[p] = lyapunov_value(cert, nxt_all[p])
    modes = np.argmin(vals, axis=0)
    return nxt_all[modes, np.arange(pts.shape[0])]


def invariance_suite(
    error_model: ErrorModel,
    cert: LyapunovCertificate,
    rho: float,
    training_batch: ScenarioBatch | None = None,
    eps2: float | None = None,
    seed: int = 0,
    points: int = 1000,
    fresh_realizations: int = 200,
    shell_factor: float = 5.0,
    trajectories: int = 20,
    steps: int = 200,
    measure: str = "box",
    tol: float = 1e-7,
) -> InvarianceReport:
    """Sample-based audit of invariance, decrease, and attraction.

    Inside points are uniform in {V <= rho}; outside points sit on similar
    shells scaled up to shell_factor times the boundary. Strict decrease is
    checked under the training realizations when training_batch is given
    (fresh ones otherwise); one-step closure is checked under fresh
    realizations and its per-realization failure frequency is compared to
    eps2 plus three standard errors.
    """
    rng = stream_rng(seed, STREAM_VALIDATION)
    n = cert.n
    evals, evecs = np.linalg.eigh(cert.F)
    Fmh = (evecs * evals**-0.5) @ evecs.T

    radii = rng.uniform(size=points) ** (1.0 / n)
    inside_pts = cert.xi_hat[None, :] + np.sqrt(rho) * (
        (radii[:, None] * _sphere(rng, points, n)) @ Fmh.T
    )
    factors = 1.0 + (shell_factor - 1.0) * rng.uniform(size=points)
    outside_pts = cert.xi_hat[None, :] + np.sqrt(rho) * (
        (factors[:, None] * _sphere(rng, points, n)) @ Fmh.T
    )

    fresh = sample_batch(
        error_model, fresh_realizations, seed, measure=measure,
        stream=STREAM_VALIDATION,
    )
    decrease_batch = training_batch if training_batch is not None else fresh

    dec_worst = -np.inf
    dec_fail = 0
    v_out = lyapunov_value(cert, outside_pts)
    for r in range(decrease_batch.count):
        A_real, L_real = decrease_batch.scenario(r)
        dv = lyapunov_value(cert, _one_step(cert, outside_pts, A_real, L_real)) - v_out
        worst = float(dv.max())
        dec_worst = max(dec_worst, worst)
        dec_fail += int(worst >= 0.0)

    closure_worst = -np.inf
    closure_fail = 0
    for r in range(fresh.count):
        A_real, L_real = fresh.scenario(r)
        v_next = lyapunov_value(cert, _one_step(cert, inside_pts, A_real, L_real))
        escape = float(v_next.max() - rho)
        closure_worst = max(closure_worst, escape)
        closure_fail += int(escape > rho * tol + tol)

    entered = 0
    entry_violations = 0
    starts = cert.xi_hat[None, :] + shell_factor * np.sqrt(rho) * (
        _sphere(rng, trajectories, n) @ Fmh.T
    )
    for t in range(trajectories):
        traj = simulate(
            error_model, cert, rho, xi0=starts[t], steps=steps,
            policy="per_step_random", seed=seed + 1000 + t,
        )
        if traj.entry_step is not None:
            entered += 1
            if not traj.stays_inside_after_entry:
                entry_violations += 1
        elif not traj.V[-1] < traj.V[0]:
            # slow dynamics may not reach the set within the horizon, but
            # the run must at least have descended
            entry_violations += 1
    entry_fraction = entered / trajectories if trajectories else 1.0

    return InvarianceReport(
        points=points,
        origin_inside=bool(lyapunov_value(cert, np.zeros(n)) <= rho + 1e-9),
        decrease_tested=decrease_batch.count,
        decrease_failures=dec_fail,
        decrease_worst=dec_worst,
        closure_tested=fresh.count,
        closure_failures=closure_fail,
        closure_worst=closure_worst,
        closure_budget=eps2,
        entry_fraction=entry_fraction,
        entry_violations=entry_violations,
    )
