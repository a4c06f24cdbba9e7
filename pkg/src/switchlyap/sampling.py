"""Scenario sampling for uncertain switched affine error models.

Two probability measures over realizations are supported:

* "box": every interval entry of A and L drawn independently and uniformly.
* "credal": one transition matrix P per mode drawn row-wise uniformly from
  the credal row polytope, A assembled as blockdiag(gamma_b * P), the reward
  part of B drawn from its box, and L recomputed as (A - I) x_e + B. This
  keeps A and L coupled the way the underlying stochastic model couples them.

Reproducibility: a batch is fully determined by (seed, stream, count,
measure). Independent pipeline stages use distinct stream indices so adding
draws to one stage never shifts another.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .intervals import ErrorModel, IntervalMatrix

__all__ = [
    "ScenarioBatch",
    "EmptyPolytope",
    "STREAM_SP1",
    "STREAM_SP2",
    "STREAM_VALIDATION",
    "STREAM_SIMULATION",
    "stream_rng",
    "sample_box",
    "sample_credal",
    "sample_stochastic_row",
    "sample_batch",
]

STREAM_SP1 = 0
STREAM_SP2 = 1
STREAM_VALIDATION = 2
STREAM_SIMULATION = 3


class EmptyPolytope(ValueError):
    """The row bounds admit no probability vector."""


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Generator for one of the independent per-stage sample streams."""
    children = np.random.SeedSequence(int(seed)).spawn(int(stream) + 1)
    return np.random.default_rng(children[int(stream)])


@dataclass(frozen=True)
class ScenarioBatch:
    """count independent realizations of all modes of an error model.

    A has shape (count, modes, n, n) and L has shape (count, modes, n).
    """

    A: np.ndarray
    L: np.ndarray
    seed: int
    stream: int
    measure: str

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "L", np.asarray(self.L, dtype=float))
        if self.A.ndim != 4 or self.L.ndim != 3 or self.A.shape[:2] != self.L.shape[:2]:
            raise ValueError("batch arrays have inconsistent shapes")

    @property
    def count(self) -> int:
        return self.A.shape[0]

    @property
    def mode_count(self) -> int:
        return self.A.shape[1]

    @property
    def n(self) -> int:
        return self.A.shape[2]

    def scenario(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.A[i], self.L[i]

    def subset(self, indices) -> "ScenarioBatch":
        idx = np.asarray(indices, dtype=int)
        return ScenarioBatch(
            A=self.A[idx], L=self.L[idx], seed=self.seed,
            stream=self.stream, measure=self.measure,
        )


def _uniform_interval(iv: IntervalMatrix, rng: np.random.Generator, count: int):
    u = rng.uniform(size=(count,) + iv.shape)
    return iv.lower + iv.width * u


def sample_box(error_model: ErrorModel, count: int, seed: int,
               stream: int = STREAM_SP1) -> ScenarioBatch:
    """Independent uniform draws of every A and L interval entry."""
    rng = stream_rng(seed, stream)
    n, P = error_model.n, error_model.mode_count
    A = np.empty((count, P, n, n))
    L = np.empty((count, P, n))
    for p in range(P):
        A[:, p] = _uniform_interval(error_model.base.A[p], rng, count)
    for p in range(P):
        L[:, p] = _uniform_interval(error_model.L[p], rng, count)
    return ScenarioBatch(A=A, L=L, seed=seed, stream=stream, measure="box")


def sample_stochastic_row(lower, upper, rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish draw of a probability vector with entrywise bounds.

    Draws each entry uniformly in its interval, then moves the normalization
    deficit onto the entries proportionally to their remaining slack. Raises
    EmptyPolytope when sum(lower) > 1 or sum(upper) < 1.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.sum() > 1.0 + 1e-12 or hi.sum() < 1.0 - 1e-12:
        raise EmptyPolytope("row bounds admit no probability vector")
    x = lo + (hi - lo) * rng.uniform(size=lo.shape)
    deficit = 1.0 - x.sum()
    for _ in range(64):
        if abs(deficit) < 1e-14:
            break
        slack = (hi - x) if deficit > 0 else (x - lo)
        total = slack.sum()
        if total <= 0:
            break
        x = x + deficit * slack / total
        x = np.clip(x, lo, hi)
        deficit = 1.0 - x.sum()
    x = np.clip(x, lo, hi)
    return x / x.sum()


def sample_credal(error_model: ErrorModel, count: int, seed: int,
                  stream: int = STREAM_SP1) -> ScenarioBatch:
    """Coupled (A, L) draws through the credal transition structure."""
    credal = error_model.base.credal
    if credal is None:
        raise ValueError("model carries no credal structure")
    rng = stream_rng(seed, stream)
    n, P = error_model.n, error_model.mode_count
    S = credal.base_states
    blocks = credal.blocks
    if n != S * blocks:
        raise ValueError("state dimension does not match credal block layout")
    x_e = error_model.x_e
    eye = np.eye(n)
    A = np.empty((count, P, n, n))
    L = np.empty((count, P, n))
    for i in range(count):
        for p in range(P):
            Pmat = np.empty((S, S))
            for r in range(S):
                Pmat[r] = sample_stochastic_row(
                    credal.P_lower[p][r], credal.P_upper[p][r], rng
                )
            Ai = np.zeros((n, n))
            for b, g in enumerate(credal.gammas):
                sl = slice(b * S, (b + 1) * S)
                Ai[sl, sl] = g * Pmat
            B_iv = error_model.base.B[p]
            Bi = B_iv.lower + B_iv.width * rng.uniform(size=(n,))
            A[i, p] = Ai
            L[i, p] = (Ai - eye) @ x_e + Bi
    return ScenarioBatch(A=A, L=L, seed=seed, stream=stream, measure="credal")


def sample_batch(error_model: ErrorModel, count: int, seed: int,
                 measure: str = "box", stream: int = STREAM_SP1) -> ScenarioBatch:
    if measure == "box":
        return sample_box(error_model, count, seed, stream)
    if measure == "credal":
        return sample_credal(error_model, count, seed, stream)
    raise ValueError(f"unknown sampling measure {measure!r}")
