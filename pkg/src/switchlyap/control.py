"""Min-type switching law, closed-loop simulation, and set translation.

The controller picks, at each error state xi, the mode whose nominal
one-step image minimizes the certified quadratic function. The plant itself
may realize any matrices inside the intervals; the realization policy of a
simulation decides which.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .intervals import ErrorModel
from .sampling import STREAM_SIMULATION, stream_rng
from .synthesis import LyapunovCertificate

__all__ = [
    "REALIZATION_POLICIES",
    "lyapunov_value",
    "switching_law",
    "EllipsoidSet",
    "OutputRegion",
    "translate_invariant_set",
    "Trajectory",
    "simulate",
]

REALIZATION_POLICIES = (
    "nominal",
    "lower_bound",
    "upper_bound",
    "fixed_sample",
    "per_step_random",
)

ENTRY_TOL = 1e-9


def lyapunov_value(cert: LyapunovCertificate, xi) -> np.ndarray | float:
    """V(xi) = d + 2 h'xi + xi'F xi, vectorized over rows of xi."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    pts = np.atleast_2d(xi)
    vals = cert.d + 2.0 * pts @ cert.h + np.einsum("ki,ij,kj->k", pts, cert.F, pts)
    return float(vals[0]) if single else vals


def switching_law(error_model: ErrorModel, cert: LyapunovCertificate, xi) -> int:
    """Mode whose nominal successor minimizes V; ties break to the lowest index."""
    xi = np.asarray(xi, dtype=float)
    best_mode, best_val = 0, np.inf
    for p in range(error_model.mode_count):
        nxt = error_model.base.A_hat[p] @ xi + error_model.L_hat[p]
        val = lyapunov_value(cert, nxt)
        if val < best_val:
            best_mode, best_val = p, val
    return best_mode


@dataclass(frozen=True)
class EllipsoidSet:
    """{x : (x - center)' shape (x - center) <= 1} plus its bounding box."""

    center: np.ndarray
    shape: np.ndarray

    def contains(self, x, atol: float = 0.0) -> bool:
        r = np.asarray(x, dtype=float) - self.center
        return bool(r @ self.shape @ r <= 1.0 + atol)

    @property
    def bounding_box(self) -> tuple:
        """Axis-aligned (lower, upper) corners of the tightest enclosing box."""
        half = np.sqrt(np.diag(np.linalg.inv(self.shape)))
        return self.center - half, self.center + half

    @property
    def semi_axes(self) -> np.ndarray:
        return 1.0 / np.sqrt(np.linalg.eigvalsh(self.shape))


@dataclass(frozen=True)
class OutputRegion:
    """The certified set around the achieved operating point.

    ellipsoid is {V <= rho} translated into original coordinates around the
    achieved point. target is the desired operating point; when it falls
    outside the ellipsoid, box is the smallest axis-aligned box containing
    both, otherwise just the ellipsoid's own bounding box.
    """

    ellipsoid: EllipsoidSet
    target: np.ndarray
    target_inside: bool
    box: tuple


def translate_invariant_set(
    cert: LyapunovCertificate, rho: float, x_e_achieved, x_e_target=None
) -> OutputRegion:
    """Express {V <= rho} in original coordinates and relate it to a target.

    With d = h'F^-1 h the function is a pure square around xi_hat, so the
    set is (x - x_e_achieved - xi_hat)'(F / rho)(...) <= 1. The target
    (default: the achieved point itself) is flagged as inside when
    V(target - achieved) <= rho.
    """
    if rho <= 0:
        raise ValueError("the sublevel radius must be positive")
    achieved = np.asarray(x_e_achieved, dtype=float)
    target = achieved if x_e_target is None else np.asarray(x_e_target, dtype=float)
    ell = EllipsoidSet(center=achieved + cert.xi_hat, shape=cert.F / float(rho))
    inside = lyapunov_value(cert, target - achieved) <= rho + ENTRY_TOL
    lo, hi = ell.bounding_box
    if not inside:
        lo = np.minimum(lo, target)
        hi = np.maximum(hi, target)
    return OutputRegion(
        ellipsoid=ell, target=target, target_inside=bool(inside), box=(lo, hi)
    )


@dataclass(frozen=True)
class Trajectory:
    """Closed-loop run with per-step certificate bookkeeping.

    Arrays cover steps 0..T; modes[k] is the mode applied to move from step
    k to k + 1 (the last entry is the mode the law would pick there).
    """

    x: np.ndarray
    xi: np.ndarray
    modes: np.ndarray
    V: np.ndarray
    inside: np.ndarray
    rho: float
    x_e: np.ndarray
    policy: str
    seed: int

    @property
    def steps(self) -> int:
        return self.x.shape[0] - 1

    @property
    def entry_step(self) -> int | None:
        """First step index with V <= rho (within tolerance), if any."""
        hits = np.nonzero(self.inside)[0]
        return int(hits[0]) if hits.size else None

    @property
    def stays_inside_after_entry(self) -> bool:
        k = self.entry_step
        return k is not None and bool(np.all(self.inside[k:]))

    def to_csv(self, path):
        n = self.x.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["step"] + [f"x_{i + 1}" for i in range(n)] + ["mode", "V", "inside_omega"]
            )
            for k in range(self.x.shape[0]):
                writer.writerow(
                    [k]
                    + [f"{v:.17g}" for v in self.x[k]]
                    + [int(self.modes[k]), f"{self.V[k]:.17g}", int(self.inside[k])]
                )


def _realization(error_model: ErrorModel, policy: str, rng):
    """One (A, L) realization per mode under the given policy."""
    P = error_model.mode_count
    if policy == "nominal":
        return (
            [a.copy() for a in error_model.base.A_hat],
            [l.copy() for l in error_model.L_hat],
        )
    if policy == "lower_bound":
        return (
            [a.lower.copy() for a in error_model.base.A],
            [l.lower.copy() for l in error_model.L],
        )
    if policy == "upper_bound":
        return (
            [a.upper.copy() for a in error_model.base.A],
            [l.upper.copy() for l in error_model.L],
        )
    A, L = [], []
    for p in range(P):
        a_iv = error_model.base.A[p]
        l_iv = error_model.L[p]
        A.append(a_iv.lower + a_iv.width * rng.uniform(size=a_iv.shape))
        L.append(l_iv.lower + l_iv.width * rng.uniform(size=l_iv.shape))
    return A, L


def simulate(
    error_model: ErrorModel,
    cert: LyapunovCertificate,
    rho: float,
    x0=None,
    xi0=None,
    steps: int = 100,
    policy: str = "nominal",
    seed: int = 0,
) -> Trajectory:
    """Run the min-switching loop from x0 (original) or xi0 (error) coordinates.

    The controller always evaluates the nominal one-step images; the policy
    only governs the matrices the plant actually applies. "fixed_sample"
    draws one realization and holds it; "per_step_random" redraws each step.
    """
    if policy not in REALIZATION_POLICIES:
        raise ValueError(f"unknown realization policy {policy!r}")
    if (x0 is None) == (xi0 is None):
        raise ValueError("give exactly one of x0 and xi0")
    x_e = error_model.x_e
    xi = (np.asarray(x0, dtype=float) - x_e) if xi0 is None else np.asarray(xi0, dtype=float)
    rng = stream_rng(seed, STREAM_SIMULATION)
    redraw = policy == "per_step_random"
    A_real, L_real = _realization(error_model, policy, rng)

    xs = np.empty((steps + 1, error_model.n))
    modes = np.empty(steps + 1, dtype=int)
    vals = np.empty(steps + 1)
    for k in range(steps + 1):
        xs[k] = xi
        m = switching_law(error_model, cert, xi)
        modes[k] = m
        vals[k] = lyapunov_value(cert, xi)
        if k == steps:
            break
        if redraw:
            A_real, L_real = _realization(error_model, policy, rng)
        xi = A_real[m] @ xi + L_real[m]
    inside = vals <= rho + ENTRY_TOL
    return Trajectory(
        x=xs + x_e,
        xi=xs,
        modes=modes,
        V=vals,
        inside=inside,
        rho=float(rho),
        x_e=x_e,
        policy=policy,
        seed=int(seed),
    )
