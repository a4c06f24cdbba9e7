"""Ready-made uncertain switched affine models from three application areas.

* Value iteration over interval Markov decision processes, single- and
  multi-objective: the value vector evolves as W <- gamma P W + R with
  row-stochastic P inside entrywise bounds, one block per objective.
* A single-inductor dual-output boost converter discretized with the
  forward Euler rule, with load resistances and input voltage uncertain.
* A three-mode planar benchmark with a common perturbation on one entry,
  used to compare invariant-set tightness against earlier designs.

Each builder returns a CaseStudy bundling the model with the run settings
(sample sizes, confidence budget, sampling measure) used in the studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .intervals import CredalStructure, IntervalMatrix, SwitchedAffineModel

__all__ = [
    "CaseStudy",
    "imdp_to_model",
    "imdp_case",
    "moimdp_case",
    "simo_converter_model",
    "simo_case",
    "comparison_case",
    "REGISTRY",
    "build_case",
]


@dataclass(frozen=True)
class CaseStudy:
    model: SwitchedAffineModel
    lam: np.ndarray
    sp1_count: int
    sp2_count: int
    beta: float
    measure: str
    trace_cap: float | None
    x0: np.ndarray | None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        if self.x0 is not None:
            object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))


def imdp_to_model(
    P_lower, P_upper, R_lower, R_upper, gammas, name: str = "imdp"
) -> SwitchedAffineModel:
    """Switched affine model of multi-objective interval value iteration.

    One mode per policy. For objective block b with discount gammas[b] the
    block of A is gammas[b] * P and the block of B is the reward interval
    R_*[mode][b]; the blocks share a single P realization, which is recorded
    as credal structure so samplers can draw coupled scenarios. Nominal
    values use the entrywise interval midpoint; midpoint rows need not sum
    to one, only realized rows are stochastic.
    """
    P_lower = [np.asarray(p, dtype=float) for p in P_lower]
    P_upper = [np.asarray(p, dtype=float) for p in P_upper]
    gammas = tuple(float(g) for g in gammas)
    S = P_lower[0].shape[0]
    blocks = len(gammas)
    n = S * blocks
    modes = len(P_lower)

    A, B, A_hat, B_hat = [], [], [], []
    for m in range(modes):
        A_lo = np.zeros((n, n))
        A_hi = np.zeros((n, n))
        A_nom = np.zeros((n, n))
        P_nom = 0.5 * (P_lower[m] + P_upper[m])
        for b, g in enumerate(gammas):
            sl = slice(b * S, (b + 1) * S)
            A_lo[sl, sl] = g * P_lower[m]
            A_hi[sl, sl] = g * P_upper[m]
            A_nom[sl, sl] = g * P_nom
        B_lo = np.concatenate([np.asarray(R_lower[m][b], dtype=float) for b in range(blocks)])
        B_hi = np.concatenate([np.asarray(R_upper[m][b], dtype=float) for b in range(blocks)])
        A.append(IntervalMatrix(A_lo, A_hi))
        B.append(IntervalMatrix(B_lo, B_hi))
        A_hat.append(A_nom)
        B_hat.append(0.5 * (B_lo + B_hi))
    credal = CredalStructure(
        base_states=S,
        gammas=gammas,
        P_lower=tuple(P_lower),
        P_upper=tuple(P_upper),
    )
    return SwitchedAffineModel(
        A=tuple(A), B=tuple(B), A_hat=tuple(A_hat), B_hat=tuple(B_hat),
        name=name, credal=credal,
    )


# Three-state process, two policies. Rows two and three are absorbing, so
# their value coordinates have exact dynamics and zero affine error terms.
_P_LOWER = (
    np.array([[0.0, 1 / 3, 1 / 10], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
    np.array([[0.0, 2 / 5, 1 / 10], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
)
_P_UPPER = (
    np.array([[0.0, 2 / 3, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
    np.array([[0.0, 3 / 5, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
)
_R1_LOWER = (np.array([13 / 10, 3 / 10, 1 / 10]), np.array([1 / 2, 3 / 10, 1 / 10]))
_R1_UPPER = (np.array([5.0, 3 / 10, 1 / 10]), np.array([8 / 5, 3 / 10, 1 / 10]))
_R2_LOWER = (np.array([13 / 30, 1 / 5, 2 / 5]), np.array([13 / 16, 1 / 5, 2 / 5]))
_R2_UPPER = (np.array([5.0, 1 / 5, 2 / 5]), np.array([19 / 12, 1 / 5, 2 / 5]))


def imdp_case() -> CaseStudy:
    """Single-objective value iteration, discount 0.5, policies mixed 9:1."""
    model = imdp_to_model(
        _P_LOWER,
        _P_UPPER,
        R_lower=((_R1_LOWER[0],), (_R1_LOWER[1],)),
        R_upper=((_R1_UPPER[0],), (_R1_UPPER[1],)),
        gammas=(0.5,),
        name="imdp",
    )
    return CaseStudy(
        model=model,
        lam=[0.9, 0.1],
        sp1_count=700,
        sp2_count=250,
        beta=0.05,
        measure="credal",
        trace_cap=1e4,
        x0=np.zeros(3),
        notes={"states": ["s", "t", "u"], "policies": ["a", "b"]},
    )


def moimdp_case() -> CaseStudy:
    """Two objectives with discounts 0.5 and 0.7 sharing the transitions."""
    model = imdp_to_model(
        _P_LOWER,
        _P_UPPER,
        R_lower=((_R1_LOWER[0], _R2_LOWER[0]), (_R1_LOWER[1], _R2_LOWER[1])),
        R_upper=((_R1_UPPER[0], _R2_UPPER[0]), (_R1_UPPER[1], _R2_UPPER[1])),
        gammas=(0.5, 0.7),
        name="moimdp",
    )
    return CaseStudy(
        model=model,
        lam=[0.9, 0.1],
        sp1_count=1500,
        sp2_count=300,
        beta=0.05,
        measure="credal",
        trace_cap=1e4,
        x0=np.zeros(6),
        notes={"states": ["s", "t", "u"], "policies": ["a", "b"]},
    )


def simo_converter_model(source: str = "euler") -> SwitchedAffineModel:
    """Single-inductor dual-output boost converter, three switch positions.

    State [inductor current; output voltage 1; output voltage 2]. Mode 1
    charges the inductor, modes 2 and 3 route it to one output while both
    capacitors discharge through their loads. source="euler" applies the
    forward Euler rule x+ = x + dt f(x) to the averaged circuit equations.
    source="tabulated" reproduces a published variant whose current row
    drops the identity term and whose off-diagonal entries miss the dt
    factor; it is kept for cross-checking and is not Schur stabilizable.
    """
    if source not in ("euler", "tabulated"):
        raise ValueError(f"unknown matrix source {source!r}")
    dt = 1e-4
    L = 5e-3
    C1 = 470e-6
    C2 = 470e-6
    R1_lo, R1_hi = 39.0, 56.0
    R2_lo, R2_hi = 47.0, 68.0
    vi_lo, vi_hi = 20.0, 30.0

    def build(R1, R2, vi):
        if source == "euler":
            a1 = np.array([
                [1.0, 0.0, 0.0],
                [0.0, 1.0 - dt / (R1 * C1), 0.0],
                [0.0, 0.0, 1.0 - dt / (R2 * C2)],
            ])
            a2 = np.array([
                [1.0, -dt / L, 0.0],
                [dt / C1, 1.0 - dt / (R1 * C1), 0.0],
                [0.0, 0.0, 1.0 - dt / (R2 * C2)],
            ])
            a3 = np.array([
                [1.0, 0.0, -dt / L],
                [0.0, 1.0 - dt / (R1 * C1), 0.0],
                [dt / C2, 0.0, 1.0 - dt / (R2 * C2)],
            ])
            b = np.array([dt * vi / L, 0.0, 0.0])
        else:
            a1 = np.array([
                [0.0, 0.0, 0.0],
                [0.0, 1.0 + dt / (R1 * C1), 0.0],
                [0.0, 0.0, 1.0 + dt / (R2 * C2)],
            ])
            a2 = np.array([
                [0.0, -1.0 / L, 0.0],
                [-1.0 / C1, 1.0 + dt / (R1 * C1), 0.0],
                [0.0, 0.0, 1.0 + dt / (R2 * C2)],
            ])
            a3 = np.array([
                [0.0, 0.0, -1.0 / L],
                [0.0, 1.0 + dt / (R1 * C1), 0.0],
                [-1.0 / C1, 0.0, 1.0 + dt / (R2 * C2)],
            ])
            b = np.array([vi / L, 0.0, 0.0])
        return (a1, a2, a3), b

    # entrywise extremes: diagonals 1 - dt/(R C) increase with R, the
    # injection terms increase with vi, everything else is exact
    (lo1, lo2, lo3), b_lo = build(R1_lo, R2_lo, vi_lo)
    (hi1, hi2, hi3), b_hi = build(R1_hi, R2_hi, vi_hi)
    (nm1, nm2, nm3), b_nm = build(
        0.5 * (R1_lo + R1_hi), 0.5 * (R2_lo + R2_hi), 0.5 * (vi_lo + vi_hi)
    )
    A = tuple(
        IntervalMatrix(np.minimum(lo, hi), np.maximum(lo, hi))
        for lo, hi in ((lo1, hi1), (lo2, hi2), (lo3, hi3))
    )
    B_iv = IntervalMatrix(np.minimum(b_lo, b_hi), np.maximum(b_lo, b_hi))
    return SwitchedAffineModel(
        A=A,
        B=(B_iv, B_iv, B_iv),
        A_hat=(nm1, nm2, nm3),
        B_hat=(b_nm, b_nm, b_nm),
        name=f"simo-{source}",
    )


def simo_case(source: str = "euler") -> CaseStudy:
    """Converter study: equal dwell on the two output modes."""
    return CaseStudy(
        model=simo_converter_model(source),
        lam=[0.0, 0.5, 0.5],
        sp1_count=900,
        sp2_count=200,
        beta=0.06,
        measure="box",
        trace_cap=None,
        x0=np.zeros(3),
        notes={"dt": 1e-4, "source": source},
    )


def comparison_case() -> CaseStudy:
    """Planar three-mode benchmark with a shared perturbation delta.

    delta enters the (1, 2) entry of every mode and ranges over [0, 0.2];
    the nominal realization takes delta = 0.
    """
    d_lo, d_hi = 0.0, 0.2

    def mode(a, b):
        a = np.asarray(a, dtype=float)
        lo = a.copy()
        hi = a.copy()
        lo[0, 1] += d_lo
        hi[0, 1] += d_hi
        b = np.asarray(b, dtype=float)
        return IntervalMatrix(lo, hi), IntervalMatrix(b, b), lo, b

    A1, B1, A1n, B1n = mode([[0.0, 0.15], [-0.35, -1.0]], [1.0, 0.35])
    A2, B2, A2n, B2n = mode([[0.24, 0.15], [-2.35, -1.0]], [-1.0, -0.35])
    A3, B3, A3n, B3n = mode([[-0.24, 0.15], [-2.35, -0.5]], [0.05, 1.5])
    model = SwitchedAffineModel(
        A=(A1, A2, A3),
        B=(B1, B2, B3),
        A_hat=(A1n, A2n, A3n),
        B_hat=(B1n, B2n, B3n),
        name="comparison",
    )
    return CaseStudy(
        model=model,
        lam=[0.36, 0.3, 0.34],
        sp1_count=300,
        sp2_count=150,
        beta=0.04,
        measure="box",
        trace_cap=None,
        x0=np.array([1.0, 1.0]),
        notes={"delta_range": [d_lo, d_hi]},
    )


REGISTRY = {
    "comparison": comparison_case,
    "imdp": imdp_case,
    "moimdp": moimdp_case,
    "simo": simo_case,
}


def build_case(name: str) -> CaseStudy:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise ValueError(
            f"unknown case study {name!r}; available: {sorted(REGISTRY)}"
        ) from None
