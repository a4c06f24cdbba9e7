"""A-posteriori probabilistic guarantees from scenario counts.

After solving a scenario program with N samples of which k turned out to be
support scenarios, the violation probability of the returned solution is at
most epsilon(k) with confidence 1 - eta, where epsilon(k) = 1 - iota(k) and
iota is the unique root in (0, 1) of

    eta / (N + 1) * sum_{q=k}^{N} C(q, k) iota^(q - k)  =  C(N, k) iota^(N - k).

The root is bracketed in (0, 1) and found by bisection on the log of the
ratio of the two sides; binomial coefficients are handled in log space so
counts in the thousands stay finite.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

__all__ = [
    "DegenerateCountWarning",
    "epsilon",
    "epsilon_residual",
    "split_confidence",
    "ConfidenceCertificate",
    "certify",
]


class DegenerateCountWarning(UserWarning):
    """Every scenario was a support scenario; the bound degenerates to 1."""


def _log_binom(n, k):
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _log_sides(N: int, k: int, eta: float, iota: float):
    """Logs of the two sides of the root equation at iota."""
    q = np.arange(k, N + 1, dtype=float)
    lhs = (
        np.log(eta)
        - np.log(N + 1.0)
        + logsumexp(_log_binom(q, float(k)) + (q - k) * np.log(iota))
    )
    rhs = _log_binom(float(N), float(k)) + (N - k) * np.log(iota)
    return lhs, rhs


def epsilon(sample_count: int, support_count: int, beta_share: float) -> float:
    """Violation level epsilon(k) at confidence parameter beta_share.

    beta_share is the slice of the total confidence budget assigned to this
    stage (eta in the root equation). Requires 0 <= support_count <=
    sample_count and 0 < beta_share < 1. Returns a value in (0, 1]; the
    degenerate case support_count == sample_count returns exactly 1 with a
    warning.
    """
    N, k = int(sample_count), int(support_count)
    eta = float(beta_share)
    if N < 1:
        raise ValueError("sample count must be positive")
    if not 0 <= k <= N:
        raise ValueError("support count must lie in [0, sample count]")
    if not 0.0 < eta < 1.0:
        raise ValueError("confidence share must lie in (0, 1)")
    if k == N:
        warnings.warn(
            "all scenarios are support scenarios; no generalization is possible"
            " and the violation bound is 1",
            DegenerateCountWarning,
            stacklevel=2,
        )
        return 1.0

    def g(iota):
        lhs, rhs = _log_sides(N, k, eta, iota)
        return lhs - rhs

    # g(0+) = +inf, g(1-) = ln(eta) - ln(k+1) < 0: exactly one sign change
    lo, hi = 1e-308, 1.0 - 1e-16
    glo, ghi = g(lo), g(hi)
    if not (glo > 0.0 > ghi):
        raise RuntimeError("root bracketing failed; counts out of supported range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    iota = 0.5 * (lo + hi)
    return float(1.0 - iota)


def epsilon_residual(sample_count: int, support_count: int, beta_share: float,
                     eps: float) -> float:
    """Relative residual of the root equation at 1 - eps (diagnostic)."""
    N, k = int(sample_count), int(support_count)
    if k == N:
        return 0.0
    lhs, rhs = _log_sides(N, k, float(beta_share), 1.0 - float(eps))
    return float(abs(np.expm1(lhs - rhs)))


def split_confidence(beta: float, ratio: float = 0.5) -> tuple:
    """Split a total confidence budget beta into (ratio*beta, (1-ratio)*beta).

    The union bound makes the joint two-stage statement hold with
    confidence 1 - beta when each stage is certified at its own share.
    """
    beta = float(beta)
    ratio = float(ratio)
    if not 0.0 < beta < 1.0:
        raise ValueError("total confidence budget must lie in (0, 1)")
    if not 0.0 < ratio < 1.0:
        raise ValueError("split ratio must lie in (0, 1)")
    return beta * ratio, beta * (1.0 - ratio)


@dataclass(frozen=True)
class ConfidenceCertificate:
    """Joint probabilistic statement for the two chained scenario stages.

    With probability at least 1 - beta over the N1 + N2 draws, the returned
    pair (Lyapunov data, radius) violates the stage-one inequalities with
    probability at most eps1 and the stage-two containment with probability
    at most eps2, both under the recorded sampling measure.
    """

    sample_counts: tuple
    support_counts: tuple
    support_methods: tuple
    beta: float
    beta_shares: tuple
    eps: tuple
    measure: str
    seed: int
    degenerate: bool
    notes: dict = field(default_factory=dict)

    @property
    def eps1(self) -> float:
        return self.eps[0]

    @property
    def eps2(self) -> float:
        return self.eps[1]


def certify(
    sp1_count: int,
    sp1_support: int,
    sp2_count: int,
    sp2_support: int,
    beta: float,
    ratio: float = 0.5,
    measure: str = "box",
    seed: int = 0,
    support_methods=("screened", "screened"),
) -> ConfidenceCertificate:
    """Bundle per-stage violation levels into one joint certificate."""
    sample_counts = (int(sp1_count), int(sp2_count))
    support_counts = (int(sp1_support), int(sp2_support))
    parts = split_confidence(beta, ratio)
    eps = []
    degenerate = False
    for N, k, share in zip(sample_counts, support_counts, parts):
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            e = epsilon(N, k, share)
        if any(issubclass(w.category, DegenerateCountWarning) for w in rec):
            degenerate = True
            warnings.warn(
                f"stage with {N} samples has all-support count; certificate"
                " carries a degenerate bound of 1",
                DegenerateCountWarning,
                stacklevel=2,
            )
        eps.append(e)
    return ConfidenceCertificate(
        sample_counts=sample_counts,
        support_counts=support_counts,
        support_methods=tuple(support_methods),
        beta=float(beta),
        beta_shares=tuple(parts),
        eps=tuple(eps),
        measure=measure,
        seed=int(seed),
        degenerate=degenerate,
    )
