"""Scenario programs for the Lyapunov function and the invariant set.

Stage one fits a quadratic function V(xi) = d + 2 h'xi + xi'F xi and a shape
matrix W by maximizing det W subject to one linear-matrix-inequality family
per sampled realization; the ellipsoid {(xi - xi_o)'W(xi - xi_o) <= 1} is
then forward-invariant for every sampled scenario. Stage two holds (F, h, W)
fixed and finds the smallest sublevel radius rho so that {V <= rho} contains
the scenario ellipsoids, again one block per sample.

Both stages are assembled directly in solver form: coefficients of the
matrix variables are computed against raw symmetric components and then
rescaled to the svec storage convention (off-diagonal components carry a
sqrt(2) factor).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .conic import (
    ConicProgram,
    SolverSettings,
    SolveReport,
    attach_det_root_objective,
    solve_linear_sdp,
    solve_maxdet,
    svec,
    svec_dim,
    sym_col_scale,
    sym_pairs,
)
from .sampling import ScenarioBatch

__all__ = [
    "SynthesisError",
    "Infeasible",
    "Unbounded",
    "NumericalFailure",
    "SingularScenario",
    "ScenarioOffsetWarning",
    "LyapunovCertificate",
    "InvariantSetCertificate",
    "ScenarioLmiData",
    "scenario_lmi_data",
    "attraction_ellipsoid_center",
    "Sp1Problem",
    "Sp2Problem",
    "build_sp1",
    "solve_sp1",
    "build_sp2",
    "solve_sp2",
    "SupportCount",
    "count_support_scenarios",
]


class SynthesisError(RuntimeError):
    pass


class Infeasible(SynthesisError):
    pass


class Unbounded(SynthesisError):
    pass


class NumericalFailure(SynthesisError):
    pass


class SingularScenario(SynthesisError):
    """A scenario's contraction matrix Q is numerically singular."""


class ScenarioOffsetWarning(UserWarning):
    """The scalar offset c of some scenario left the open interval (0, 1)."""


@dataclass(frozen=True)
class LyapunovCertificate:
    """Quadratic function data V(xi) = d + 2 h'xi + xi'F xi with d = h'F^-1 h."""

    F: np.ndarray
    h: np.ndarray
    W: np.ndarray
    lam: np.ndarray
    mu: float
    log_det_W: float
    c_range: tuple
    trace_cap: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def d(self) -> float:
        return float(self.h @ np.linalg.solve(self.F, self.h))

    @property
    def xi_hat(self) -> np.ndarray:
        """Minimizer of V; V(xi_hat) = 0."""
        return -np.linalg.solve(self.F, self.h)

    def validate(self):
        for name, M in (("F", self.F), ("W", self.W)):
            if np.abs(M - M.T).max() > 1e-9 * max(1.0, np.abs(M).max()):
                raise ValueError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(M)[0] <= 0:
                raise ValueError(f"{name} is not positive definite")
        if not np.isfinite(self.d) or self.d < 0:
            raise ValueError("offset d = h'F^-1 h is not a finite nonnegative number")


@dataclass(frozen=True)
class InvariantSetCertificate:
    """Sublevel radius rho and multiplier tau from the containment stage."""

    rho: float
    tau: float
    mu: float
    separation_eig: float
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioLmiData:
    """Per-scenario quantities induced by fixed (F, h): Q, rho_vec, c, xi_o."""

    Q: np.ndarray
    rho_vec: np.ndarray
    c: np.ndarray
    xi_o: np.ndarray


def _weighted(batch: ScenarioBatch, lam) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (batch.mode_count,):
        raise ValueError("lambda length does not match the batch mode count")
    return batch.A, batch.L, lam


def scenario_lmi_data(F, h, batch: ScenarioBatch, lam) -> ScenarioLmiData:
    """Evaluate Q, rho_vec, c and the ellipsoid center for every scenario.

    Q = F - sum_p lam_p A_p' F A_p
    rho_vec = sum_p lam_p (A_p' F L_p + A_p' h - h)
    c = sum_p lam_p (2 h'L_p + L_p' F L_p)
    xi_o = Q^-1 rho_vec
    """
    A, L, lam = _weighted(batch, lam)
    F = np.asarray(F, dtype=float)
    h = np.asarray(h, dtype=float)
    FA = np.einsum("kl,splj->spkj", F, A)
    Q = F[None] - np.einsum("p,spki,spkj->sij", lam, A, FA)
    FL = np.einsum("kl,spl->spk", F, L)
    rho_vec = np.einsum("p,spki,spk->si", lam, A, FL + h[None, None, :]) - h[None, :]
    c = (2.0 * np.einsum("spk,k->sp", L, h) + np.einsum("spk,spk->sp", L, FL)) @ lam
    try:
        xi_o = np.linalg.solve(Q, rho_vec[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularScenario(f"scenario contraction matrix is singular: {exc}")
    return ScenarioLmiData(Q=Q, rho_vec=rho_vec, c=c, xi_o=xi_o)


def attraction_ellipsoid_center(cert: LyapunovCertificate, A_real, L_real) -> np.ndarray:
    """Center xi_o of the invariant ellipsoid for one realization.

    A_real and L_real hold one matrix per mode, shapes (P, n, n) and (P, n).
    """
    batch = ScenarioBatch(
        A=np.asarray(A_real, dtype=float)[None],
        L=np.asarray(L_real, dtype=float)[None],
        seed=0, stream=0, measure="point",
    )
    return scenario_lmi_data(cert.F, cert.h, batch, cert.lam).xi_o[0]


# ---------------------------------------------------------------------------
# stage one


@dataclass
class Sp1Problem:
    prog: ConicProgram
    batch: ScenarioBatch
    lam: np.ndarray
    mu: float
    trace_cap: float | None


def _sym_expand(T_raw, kk, ll, diag_mask):
    """Fold a tensor indexed by raw (k, l) into symmetric components.

    T_raw[..., k, l, ...] -> T[..., comp, ...] with
    T[comp=(k,l)] = T_raw[k,l] + T_raw[l,k] for k < l and T_raw[k,k] on the
    diagonal, matching the action of the symmetric basis matrices.
    """
    folded = T_raw[:, kk, ll] + T_raw[:, ll, kk]
    folded[:, diag_mask] *= 0.5
    return folded


def build_sp1(
    batch: ScenarioBatch,
    lam,
    mu: float = 1e-6,
    trace_cap: float | None = None,
) -> Sp1Problem:
    """Assemble the determinant-maximization stage over the given scenarios.

    Variables: F, h, W. Per scenario i (tags ("scen", i, family)):
      Q_i - W >= mu I
      [[Q_i, rho_i], [rho_i', 1 - c_i]] >= mu I
      [[Q_i, rho_i], [rho_i', 1]]       >= mu I
    plus F >= mu I, W >= mu I once, optional trace caps on F and W, and the
    determinant-root objective on W.

    The trace caps bound an otherwise unbounded det W direction that appears
    when some coordinates have zero-width dynamics and zero affine terms
    (the objective can inflate W freely there). With slack caps the optimum
    is unchanged; the rows are deterministic, so scenario counting and the
    confidence machinery are unaffected.
    """
    A, L, lam = _weighted(batch, lam)
    N, P, n, _ = A.shape
    nf = svec_dim(n)
    pairs = sym_pairs(n)
    kk = np.array([p[0] for p in pairs])
    ll = np.array([p[1] for p in pairs])
    diag_mask = kk == ll
    scale = sym_col_scale(n)
    desc = 1.0 / scale

    lamA = lam[None, :, None, None] * A
    # raw coefficient of F_kl in Q_ij, scenario-wise
    M = np.einsum("spki,splj->sklij", lamA, A)
    E = np.zeros((nf, n, n))
    E[np.arange(nf), kk, ll] = 1.0
    E[np.arange(nf), ll, kk] = 1.0
    Qc = E[None] - _sym_expand(M, kk, ll, diag_mask)  # (N, nf, n, n)

    # raw coefficient of F_kl in rho_i, and of h_j in rho_i
    R = np.einsum("spki,spl->skli", lamA, L)
    Rsym = _sym_expand(R, kk, ll, diag_mask)  # (N, nf, n)
    Hrho = np.einsum("spji->sij", lamA) - np.eye(n)[None]  # coeff of h_j in rho_i

    # raw coefficient of F_kl and h_j in the scalar c
    CF = np.einsum("p,spk,spl->skl", lam, L, L)
    CFsym = _sym_expand(CF, kk, ll, diag_mask)  # (N, nf)
    ch = 2.0 * np.einsum("p,spj->sj", lam, L)  # (N, n)

    prog = ConicProgram()
    prog.add_symmetric("F", n)
    prog.add_vector("h", n)
    prog.add_symmetric("W", n)

    # block 1: Q - W - mu I >= 0, size n
    GF1 = np.transpose(svec(Qc), (0, 2, 1)) * desc[None, None, :]
    GW1 = np.broadcast_to(-np.eye(nf), (N, nf, nf))
    const1 = np.broadcast_to(svec(-mu * np.eye(n)), (N, nf))
    prog.add_psd_batch(
        n, {"F": GF1, "W": GW1}, const1,
        [("scen", i, "contraction") for i in range(N)],
    )

    # blocks 2 and 3: bordered matrices of size n + 1
    tri2 = svec_dim(n + 1)
    corner = np.zeros((n + 1, n + 1))
    corner[:n, :n] = -mu * np.eye(n)
    corner[n, n] = 1.0 - mu
    const23 = np.broadcast_to(svec(corner), (N, tri2))

    BF = np.zeros((N, nf, n + 1, n + 1))
    BF[:, :, :n, :n] = Qc
    BF[:, :, :n, n] = Rsym
    BF[:, :, n, :n] = Rsym
    Bh = np.zeros((N, n, n + 1, n + 1))
    Bh[:, :, :n, n] = np.transpose(Hrho, (0, 2, 1))
    Bh[:, :, n, :n] = np.transpose(Hrho, (0, 2, 1))

    # block 3 first (no c terms), then block 2 with the corner filled in
    GF3 = np.transpose(svec(BF), (0, 2, 1)) * desc[None, None, :]
    Gh3 = np.transpose(svec(Bh), (0, 2, 1))
    prog.add_psd_batch(
        n + 1, {"F": GF3, "h": Gh3}, const23,
        [("scen", i, "origin") for i in range(N)],
    )

    BF[:, :, n, n] = -CFsym
    Bh[:, :, n, n] = -ch
    GF2 = np.transpose(svec(BF), (0, 2, 1)) * desc[None, None, :]
    Gh2 = np.transpose(svec(Bh), (0, 2, 1))
    prog.add_psd_batch(
        n + 1, {"F": GF2, "h": Gh2}, const23,
        [("scen", i, "offset") for i in range(N)],
    )

    floor = svec(-mu * np.eye(n))
    prog.add_psd(n, {"F": np.eye(nf)}, floor, ("base", "F"))
    prog.add_psd(n, {"W": np.eye(nf)}, floor, ("base", "W"))

    if trace_cap is not None:
        tr_row = np.zeros((1, nf))
        tr_row[0, diag_mask] = -1.0
        prog.add_nonneg({"F": tr_row}, np.array([trace_cap]), ("cap", "F"))
        prog.add_nonneg({"W": tr_row}, np.array([trace_cap]), ("cap", "W"))

    attach_det_root_objective(prog, "W")
    return Sp1Problem(prog=prog, batch=batch, lam=lam, mu=mu, trace_cap=trace_cap)


def _raise_for_status(report: SolveReport, what: str):
    if report.status == "infeasible":
        raise Infeasible(f"{what}: solver certified infeasibility")
    if report.status == "unbounded":
        raise Unbounded(f"{what}: solver certified an unbounded objective")
    if report.status != "optimal":
        raise NumericalFailure(
            f"{what}: solver returned {report.solver_status}"
            f" (worst slack {report.worst_slack})"
        )


def _dominant_family(report: SolveReport) -> str | None:
    """Best-effort name of the constraint family driving infeasibility.

    Sums the solver's dual infeasibility certificate over cones per family
    and picks the largest; the dual may be uninformative, in which case
    None is returned.
    """
    norms = report.extra.get("dual_norm_by_tag")
    if not norms:
        return None
    by_family: dict[str, float] = {}
    for tag, v in norms.items():
        if isinstance(tag, tuple) and len(tag) >= 3 and tag[0] == "scen":
            by_family[tag[2]] = by_family.get(tag[2], 0.0) + v
    if not by_family or max(by_family.values()) <= 0.0:
        return None
    return max(by_family, key=by_family.get)


def solve_sp1(
    problem: Sp1Problem, settings: SolverSettings | None = None
) -> tuple[LyapunovCertificate, SolveReport]:
    report = solve_maxdet(problem.prog, settings)
    if report.status == "infeasible":
        family = _dominant_family(report)
        hint = (
            f"; the dual weights point at the {family} blocks"
            if family
            else ""
        )
        raise Infeasible(
            "stage one: the sampled program is infeasible, so the robust"
            " program over the full uncertainty set is infeasible as well"
            " (sampled constraints are a subset); the converse would not"
            f" hold{hint}"
        )
    _raise_for_status(report, "stage one")
    F = problem.prog.value(report.x, "F")
    h = problem.prog.value(report.x, "h")
    W = problem.prog.value(report.x, "W")
    data = scenario_lmi_data(F, h, problem.batch, problem.lam)
    c_lo, c_hi = float(data.c.min()), float(data.c.max())
    if c_lo <= 0.0 or c_hi >= 1.0:
        warnings.warn(
            f"scenario offset scalar c outside (0, 1): range [{c_lo:.6g}, {c_hi:.6g}]",
            ScenarioOffsetWarning,
            stacklevel=2,
        )
    cert = LyapunovCertificate(
        F=F,
        h=h,
        W=W,
        lam=np.asarray(problem.lam, dtype=float),
        mu=problem.mu,
        log_det_W=float(report.objective),
        c_range=(c_lo, c_hi),
        trace_cap=problem.trace_cap,
        diagnostics={
            "worst_slack": report.worst_slack,
            "solver_status": report.solver_status,
            "iterations": report.iterations,
            "solve_time": report.solve_time,
            "log_det_direct": report.extra.get("log_det_direct"),
            "scenario_count": problem.batch.count,
        },
    )
    return cert, report


# ---------------------------------------------------------------------------
# stage two


@dataclass
class Sp2Problem:
    prog: ConicProgram
    cert: LyapunovCertificate
    xi_o: np.ndarray
    mu: float


def build_sp2(
    cert: LyapunovCertificate, batch: ScenarioBatch, mu: float = 1e-6
) -> Sp2Problem:
    """Assemble the radius-minimization stage over fresh scenarios.

    Per scenario j the ellipsoid center xi_o^j is precomputed from the fixed
    certificate and enters the blocks as a constant:

      [[rho + tau (xi_o'W xi_o - 1), h', -tau xi_o'W],
       [h,                           F,  F          ],
       [-tau W xi_o,                 F,  tau W      ]] >= mu I,  rho, tau >= mu.
    """
    F, h, W = cert.F, cert.h, cert.W
    n = cert.n
    data = scenario_lmi_data(F, h, batch, cert.lam)
    xi_o = data.xi_o
    N = batch.count
    side = 2 * n + 1
    tri = svec_dim(side)

    Wxi = xi_o @ W  # (N, n)
    quad = np.einsum("si,si->s", xi_o, Wxi)  # xi_o' W xi_o

    const = np.zeros((N, side, side))
    const[:, 0, 1 : n + 1] = h[None, :]
    const[:, 1 : n + 1, 0] = h[None, :]
    const[:, 1 : n + 1, 1 : n + 1] = F[None]
    const[:, 1 : n + 1, n + 1 :] = F[None]
    const[:, n + 1 :, 1 : n + 1] = F[None]
    const[:, np.arange(side), np.arange(side)] -= mu

    Crho = np.zeros((N, side, side))
    Crho[:, 0, 0] = 1.0
    Ctau = np.zeros((N, side, side))
    Ctau[:, 0, 0] = quad - 1.0
    Ctau[:, 0, n + 1 :] = -Wxi
    Ctau[:, n + 1 :, 0] = -Wxi
    Ctau[:, n + 1 :, n + 1 :] = W[None]

    prog = ConicProgram()
    prog.add_scalar("rho")
    prog.add_scalar("tau")
    tags = [("scen", j) for j in range(N)]
    prog.add_psd_batch(
        side,
        {"rho": svec(Crho)[..., None], "tau": svec(Ctau)[..., None]},
        svec(const),
        tags,
    )
    one = np.ones((1, 1))
    prog.add_nonneg({"rho": one}, np.array([-mu]), ("base", "rho"))
    prog.add_nonneg({"tau": one}, np.array([-mu]), ("base", "tau"))
    prog.add_objective({"rho": np.array([1.0])})
    return Sp2Problem(prog=prog, cert=cert, xi_o=xi_o, mu=mu)


def solve_sp2(
    problem: Sp2Problem, settings: SolverSettings | None = None
) -> tuple[InvariantSetCertificate, SolveReport]:
    report = solve_linear_sdp(problem.prog, settings)
    _raise_for_status(report, "stage two")
    rho = problem.prog.value(report.x, "rho")
    tau = problem.prog.value(report.x, "tau")
    cert = problem.cert
    sep = float(np.linalg.eigvalsh(cert.F - tau * cert.W)[-1])
    if sep >= 0.0:
        raise NumericalFailure(
            f"stage two: F - tau W has nonnegative eigenvalue {sep:.3e};"
            " the sublevel set does not enclose the ellipsoids strictly"
        )
    inv = InvariantSetCertificate(
        rho=rho,
        tau=tau,
        mu=problem.mu,
        separation_eig=sep,
        diagnostics={
            "worst_slack": report.worst_slack,
            "solver_status": report.solver_status,
            "iterations": report.iterations,
            "solve_time": report.solve_time,
            "scenario_count": problem.xi_o.shape[0],
        },
    )
    return inv, report


# ---------------------------------------------------------------------------
# support scenarios


@dataclass(frozen=True)
class SupportCount:
    """Result of counting scenarios whose removal moves the solution.

    When the method is "screened_upper_bound" the count is the number of
    active scenarios, a valid upper bound on the support count (for convex
    programs every support scenario is active); the confidence level derived
    from an overcount is conservative.
    """

    count: int
    method: str
    active: tuple
    support: tuple | None
    failures: tuple


def count_support_scenarios(
    prog: ConicProgram,
    report: SolveReport,
    scenario_count: int,
    strategy: str = "screened",
    rel_tol: float = 1e-6,
    var_tol: float = 1e-5,
    act_tol: float = 1e-5,
    resolve_budget: int | None = None,
    settings: SolverSettings | None = None,
) -> SupportCount:
    """Count support scenarios of a solved program whose per-scenario cones
    carry tags starting with ("scen", i).

    strategy="full_resolve" re-solves once per scenario and flags those whose
    removal moves the objective (relatively more than rel_tol) or any primary
    variable (entrywise more than var_tol). strategy="screened" only
    re-solves the scenarios whose blocks are active at the optimum (slack
    within act_tol), which is exhaustive for convex problems. A failed
    reduced solve counts as support. If a resolve budget is given and the
    active set exceeds it, the active count itself is returned as an upper
    bound without re-solving.
    """
    if report.status != "optimal":
        raise ValueError("support counting needs an optimal base solve")
    if strategy not in ("screened", "full_resolve"):
        raise ValueError(f"unknown strategy {strategy!r}")
    slack = report.slack_by_tag or prog.audit(report.x)
    scen_tags: dict[int, list] = {i: [] for i in range(scenario_count)}
    worst = np.full(scenario_count, np.inf)
    for tag, v in slack.items():
        if isinstance(tag, tuple) and len(tag) >= 2 and tag[0] == "scen":
            scen_tags[tag[1]].append(tag)
            worst[tag[1]] = min(worst[tag[1]], v)
    active = [i for i in range(scenario_count) if worst[i] <= act_tol]
    if strategy == "screened":
        candidates = active
        if resolve_budget is not None and len(candidates) > resolve_budget:
            return SupportCount(
                count=len(active),
                method="screened_upper_bound",
                active=tuple(active),
                support=None,
                failures=(),
            )
    else:
        candidates = list(range(scenario_count))

    names = [n for n in prog._vars if not n.startswith("_")]
    base_vals = {n: prog.value(report.x, n) for n in names}
    base_obj = report.objective
    is_maxdet = prog._detroot is not None
    support = []
    failures = []
    for i in candidates:
        sub = prog.without_tags(scen_tags[i])
        rep = solve_maxdet(sub, settings) if is_maxdet else sub.solve(settings)
        if rep.status != "optimal":
            support.append(i)
            failures.append(i)
            continue
        moved = abs(rep.objective - base_obj) > rel_tol * max(1.0, abs(base_obj))
        if not moved:
            for nm in names:
                delta = np.max(
                    np.abs(np.asarray(prog.value(rep.x, nm)) - np.asarray(base_vals[nm]))
                )
                if delta > var_tol:
                    moved = True
                    break
        if moved:
            support.append(i)
    return SupportCount(
        count=len(support),
        method=strategy,
        active=tuple(active),
        support=tuple(support),
        failures=tuple(failures),
    )
