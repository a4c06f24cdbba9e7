"""Interval-uncertain switched affine models and their error-coordinate form.

A model is a family of P modes, each an affine map x -> A x + B whose matrices
are only known to lie in entrywise intervals. Everything downstream works in
error coordinates xi = x - x_e around an operating point x_e that some convex
combination lambda of the nominal modes holds stationary.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "IntervalMatrix",
    "CredalStructure",
    "SwitchedAffineModel",
    "OperatingPoint",
    "ErrorModel",
    "ModelFormatError",
    "SingularSystem",
    "NotSchurStable",
    "nominal_midpoint",
    "mixed_nominal",
    "operating_point_residual",
    "is_schur_stable",
    "solve_operating_point",
    "project_operating_point",
    "build_error_model",
    "model_from_dict",
    "model_to_dict",
    "load_model",
]


class ModelFormatError(ValueError):
    """Raised when a model document is malformed."""


class SingularSystem(RuntimeError):
    """(A_hat_lambda - I) is numerically singular; no operating point."""


class NotSchurStable(RuntimeError):
    """A_hat_lambda has an eigenvalue on or outside the unit circle."""


@dataclass(frozen=True)
class IntervalMatrix:
    """Entrywise interval [lower, upper] of real matrices."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ModelFormatError(
                f"interval bound shapes differ: {lo.shape} vs {hi.shape}"
            )
        if not np.all(lo <= hi):
            i = np.unravel_index(int(np.argmax(lo - hi)), lo.shape)
            raise ModelFormatError(
                f"interval lower bound exceeds upper bound at entry {i}"
            )
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def shape(self):
        return self.lower.shape

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, value, atol: float = 0.0) -> bool:
        v = np.asarray(value, dtype=float)
        return bool(
            np.all(v >= self.lower - atol) and np.all(v <= self.upper + atol)
        )


def nominal_midpoint(interval: IntervalMatrix) -> np.ndarray:
    """Entrywise midpoint of the interval."""
    return interval.midpoint()


@dataclass(frozen=True)
class CredalStructure:
    """Row-stochastic structure underlying a value-iteration model.

    The A interval of each mode is blockdiag(gamma_b * P) over objective
    blocks b, with one shared transition matrix P per mode whose rows are
    probability vectors constrained to [P_lower, P_upper].
    """

    base_states: int
    gammas: tuple
    P_lower: tuple
    P_upper: tuple

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(
            self, "P_lower", tuple(np.asarray(p, dtype=float) for p in self.P_lower)
        )
        object.__setattr__(
            self, "P_upper", tuple(np.asarray(p, dtype=float) for p in self.P_upper)
        )
        s = self.base_states
        for g in self.gammas:
            if not 0.0 < g < 1.0:
                raise ModelFormatError(f"discount factor {g} outside (0, 1)")
        for m, (lo, hi) in enumerate(zip(self.P_lower, self.P_upper)):
            if lo.shape != (s, s) or hi.shape != (s, s):
                raise ModelFormatError(f"transition bounds of mode {m} are not {s}x{s}")
            row_lo = lo.sum(axis=1)
            row_hi = hi.sum(axis=1)
            bad = np.where((row_lo > 1.0 + 1e-12) | (row_hi < 1.0 - 1e-12))[0]
            if bad.size:
                raise ModelFormatError(
                    f"mode {m} row {bad[0]}: no probability vector fits the bounds"
                )

    @property
    def blocks(self) -> int:
        return len(self.gammas)


@dataclass(frozen=True)
class SwitchedAffineModel:
    """P interval modes (A, B) with a nominal realization per mode."""

    A: tuple
    B: tuple
    A_hat: tuple
    B_hat: tuple
    name: str = ""
    credal: CredalStructure | None = None

    def __post_init__(self):
        A = tuple(self.A)
        B = tuple(self.B)
        if len(A) == 0 or len(A) != len(B):
            raise ModelFormatError("model needs matching nonempty A and B mode lists")
        n = A[0].shape[0]
        for m, (a, b) in enumerate(zip(A, B)):
            if a.shape != (n, n):
                raise ModelFormatError(f"mode {m}: A interval is {a.shape}, expected ({n}, {n})")
            if b.shape != (n,):
                raise ModelFormatError(f"mode {m}: B interval is {b.shape}, expected ({n},)")
        A_hat = tuple(np.asarray(a, dtype=float) for a in self.A_hat)
        B_hat = tuple(np.asarray(b, dtype=float) for b in self.B_hat)
        for m, (a, ah) in enumerate(zip(A, A_hat)):
            if not a.contains(ah, atol=1e-12):
                raise ModelFormatError(f"mode {m}: nominal A outside its interval")
        for m, (b, bh) in enumerate(zip(B, B_hat)):
            if not b.contains(bh, atol=1e-12):
                raise ModelFormatError(f"mode {m}: nominal B outside its interval")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "A_hat", A_hat)
        object.__setattr__(self, "B_hat", B_hat)

    @property
    def n(self) -> int:
        return self.A[0].shape[0]

    @property
    def mode_count(self) -> int:
        return len(self.A)


def _check_simplex(lam, P):
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (P,):
        raise ModelFormatError(f"lambda has shape {lam.shape}, expected ({P},)")
    if np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-9:
        raise ModelFormatError("lambda must be nonnegative and sum to 1")
    return np.clip(lam, 0.0, None)


@dataclass(frozen=True)
class OperatingPoint:
    """A state x_e stationary under the lambda-mix of nominal modes."""

    x_e: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_e", np.asarray(self.x_e, dtype=float))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))


def mixed_nominal(model: SwitchedAffineModel, lam) -> tuple[np.ndarray, np.ndarray]:
    """lambda-weighted nominal (A_hat_lambda, B_hat_lambda)."""
    lam = _check_simplex(lam, model.mode_count)
    A = sum(l * a for l, a in zip(lam, model.A_hat))
    B = sum(l * b for l, b in zip(lam, model.B_hat))
    return A, B


def operating_point_residual(model: SwitchedAffineModel, lam, x_e) -> np.ndarray:
    """(A_hat_lambda - I) x_e + B_hat_lambda; zero iff x_e is stationary."""
    A, B = mixed_nominal(model, lam)
    x_e = np.asarray(x_e, dtype=float)
    return (A - np.eye(model.n)) @ x_e + B


def is_schur_stable(A: np.ndarray, tol_margin: float = 0.0) -> bool:
    """True iff every eigenvalue magnitude is < 1 - tol_margin."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    return bool(np.max(np.abs(np.linalg.eigvals(A))) < 1.0 - tol_margin)


def solve_operating_point(
    model: SwitchedAffineModel, lam, residual_tol: float = 1e-10
) -> OperatingPoint:
    """Solve (A_hat_lambda - I) x = -B_hat_lambda for the operating point."""
    lam = _check_simplex(lam, model.mode_count)
    A, B = mixed_nominal(model, lam)
    if not is_schur_stable(A):
        raise NotSchurStable(
            "the lambda-mixed nominal matrix has spectral radius >= 1"
        )
    M = A - np.eye(model.n)
    if np.linalg.cond(M) > 1e14:
        raise SingularSystem("(A_hat_lambda - I) is numerically singular")
    x_e = np.linalg.solve(M, -B)
    res = float(np.linalg.norm(operating_point_residual(model, lam, x_e)))
    if res > residual_tol:
        raise SingularSystem(f"operating point residual {res:.3e} above tolerance")
    return OperatingPoint(x_e=x_e, lam=lam)


def project_operating_point(
    model: SwitchedAffineModel, target, resolution: int = 20
) -> OperatingPoint:
    """Grid-search the simplex for the stationary point nearest to target.

    Enumerates lambda on a regular simplex grid with `resolution` subdivisions,
    keeps the Schur-stable mixes, and returns the operating point minimizing
    the Euclidean distance to `target`.
    """
    target = np.asarray(target, dtype=float)
    P = model.mode_count
    best = None
    for comp in itertools.product(range(resolution + 1), repeat=P - 1):
        if sum(comp) > resolution:
            continue
        lam = np.array(list(comp) + [resolution - sum(comp)], dtype=float)
        lam /= resolution
        try:
            op = solve_operating_point(model, lam)
        except (NotSchurStable, SingularSystem):
            continue
        dist = float(np.linalg.norm(op.x_e - target))
        if best is None or dist < best[0]:
            best = (dist, op)
    if best is None:
        raise NotSchurStable("no Schur-stable lambda on the search grid")
    return best[1]


@dataclass(frozen=True)
class ErrorModel:
    """The model rewritten in xi = x - x_e coordinates with affine terms L."""

    base: SwitchedAffineModel
    x_e: np.ndarray
    L: tuple
    L_hat: tuple
    lam: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def mode_count(self) -> int:
        return self.base.mode_count


def _interval_dot(A_iv: IntervalMatrix, x: np.ndarray):
    """Exact interval image of {A x : A in [lower, upper]} for a point x."""
    lo_term = A_iv.lower * x[None, :]
    hi_term = A_iv.upper * x[None, :]
    lo = np.minimum(lo_term, hi_term).sum(axis=1)
    hi = np.maximum(lo_term, hi_term).sum(axis=1)
    return lo, hi


def build_error_model(
    model: SwitchedAffineModel, op_point: OperatingPoint, mode: str = "endpoint"
) -> ErrorModel:
    """Form the error dynamics xi -> A xi + L with L = (A - I) x_e + B.

    mode="endpoint" plugs the interval endpoints of A and B straight into the
    formula; mode="interval_exact" computes the exact interval image under
    interval arithmetic, which is wider when x_e has negative entries.
    """
    if mode not in ("endpoint", "interval_exact"):
        raise ValueError(f"unknown L-interval mode {mode!r}")
    x_e = op_point.x_e
    eye = np.eye(model.n)
    L = []
    L_hat = []
    for A_iv, B_iv, A_h, B_h in zip(model.A, model.B, model.A_hat, model.B_hat):
        if mode == "endpoint":
            lo = (A_iv.lower - eye) @ x_e + B_iv.lower
            hi = (A_iv.upper - eye) @ x_e + B_iv.upper
            lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
        else:
            dot_lo, dot_hi = _interval_dot(A_iv, x_e)
            lo = dot_lo - x_e + B_iv.lower
            hi = dot_hi - x_e + B_iv.upper
        L.append(IntervalMatrix(lo, hi))
        L_hat.append((A_h - eye) @ x_e + B_h)
    return ErrorModel(
        base=model, x_e=x_e, L=tuple(L), L_hat=tuple(L_hat), lam=op_point.lam
    )


# ---------------------------------------------------------------------------
# model documents


def _matrix_field(doc, key, mode_index, expect_shape=None):
    try:
        raw = doc[key]
    except KeyError:
        raise ModelFormatError(f"mode {mode_index}: missing field {key!r}") from None
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"mode {mode_index}: field {key!r}: {exc}") from None
    if expect_shape is not None and arr.shape != expect_shape:
        raise ModelFormatError(
            f"mode {mode_index}: field {key!r} has shape {arr.shape},"
            f" expected {expect_shape}"
        )
    return arr


def model_from_dict(doc: dict) -> tuple[SwitchedAffineModel, dict]:
    """Parse a model document; returns (model, extras).

    Extras carries the optional run-level entries: lambda, x_e,
    residual_tol, nominal policy, measure.
    """
    if "n" not in doc or "modes" not in doc:
        raise ModelFormatError("model document needs 'n' and 'modes'")
    n = int(doc["n"])
    nominal = doc.get("nominal", "midpoint")
    if nominal not in ("midpoint", "lower", "upper", "explicit"):
        raise ModelFormatError(f"unknown nominal policy {nominal!r}")
    A, B, A_hat, B_hat = [], [], [], []
    for m, mode_doc in enumerate(doc["modes"]):
        A_iv = IntervalMatrix(
            _matrix_field(mode_doc, "A_lower", m, (n, n)),
            _matrix_field(mode_doc, "A_upper", m, (n, n)),
        )
        B_iv = IntervalMatrix(
            _matrix_field(mode_doc, "B_lower", m, (n,)),
            _matrix_field(mode_doc, "B_upper", m, (n,)),
        )
        A.append(A_iv)
        B.append(B_iv)
        if nominal == "explicit":
            A_hat.append(_matrix_field(mode_doc, "A_hat", m, (n, n)))
            B_hat.append(_matrix_field(mode_doc, "B_hat", m, (n,)))
        elif nominal == "midpoint":
            A_hat.append(A_iv.midpoint())
            B_hat.append(B_iv.midpoint())
        elif nominal == "lower":
            A_hat.append(A_iv.lower.copy())
            B_hat.append(B_iv.lower.copy())
        else:
            A_hat.append(A_iv.upper.copy())
            B_hat.append(B_iv.upper.copy())
    credal = None
    if "credal" in doc and doc["credal"] is not None:
        c = doc["credal"]
        credal = CredalStructure(
            base_states=int(c["base_states"]),
            gammas=tuple(c["gammas"]),
            P_lower=tuple(np.asarray(p, dtype=float) for p in c["P_lower"]),
            P_upper=tuple(np.asarray(p, dtype=float) for p in c["P_upper"]),
        )
    model = SwitchedAffineModel(
        A=tuple(A),
        B=tuple(B),
        A_hat=tuple(A_hat),
        B_hat=tuple(B_hat),
        name=str(doc.get("name", "")),
        credal=credal,
    )
    extras = {
        "lambda": doc.get("lambda"),
        "x_e": doc.get("x_e"),
        "residual_tol": doc.get("residual_tol", 1e-6),
        "nominal": nominal,
        "measure": doc.get("measure", "credal" if credal else "box"),
    }
    return model, extras


def model_to_dict(
    model: SwitchedAffineModel,
    lam=None,
    x_e=None,
    residual_tol=None,
    nominal: str = "explicit",
) -> dict:
    doc = {
        "name": model.name,
        "n": model.n,
        "nominal": "explicit",
        "modes": [
            {
                "A_lower": a.lower.tolist(),
                "A_upper": a.upper.tolist(),
                "B_lower": b.lower.tolist(),
                "B_upper": b.upper.tolist(),
                "A_hat": ah.tolist(),
                "B_hat": bh.tolist(),
            }
            for a, b, ah, bh in zip(model.A, model.B, model.A_hat, model.B_hat)
        ],
    }
    if model.credal is not None:
        doc["credal"] = {
            "base_states": model.credal.base_states,
            "gammas": list(model.credal.gammas),
            "P_lower": [p.tolist() for p in model.credal.P_lower],
            "P_upper": [p.tolist() for p in model.credal.P_upper],
        }
        doc["measure"] = "credal"
    if lam is not None:
        doc["lambda"] = list(np.asarray(lam, dtype=float))
    if x_e is not None:
        doc["x_e"] = list(np.asarray(x_e, dtype=float))
    if residual_tol is not None:
        doc["residual_tol"] = float(residual_tol)
    return doc


def load_model(path) -> tuple[SwitchedAffineModel, dict]:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: invalid JSON: {exc}") from None
    return model_from_dict(doc)
