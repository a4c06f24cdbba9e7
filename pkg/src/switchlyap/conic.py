"""Direct conic-form assembly and solving on top of the Clarabel solver.

Programs are stated in the solver's native geometry: minimize q'x subject to
s = b - A x with s in a product of zero, nonnegative, second-order, and PSD
triangle cones. PSD slices use the scaled upper-triangle vectorization
(column-stacked, off-diagonal entries times sqrt(2)); with that scaling the
Euclidean inner product of two vectorizations equals the trace inner product
of the matrices, which is what the solver expects.

Every cone carries a hashable tag. Dropping all cones with a given tag (to
re-solve without one scenario) is a row-slice of the assembled matrices, so
repeated reduced solves do not pay assembly cost again.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import clarabel
import numpy as np
import scipy.sparse as sp

__all__ = [
    "svec_dim",
    "sym_pairs",
    "svec",
    "unsvec",
    "sym_col_scale",
    "min_eigenvalue",
    "ConeSpec",
    "SolverSettings",
    "SolveReport",
    "ConicProgram",
    "attach_det_root_objective",
    "solve_maxdet",
    "solve_linear_sdp",
]

R2 = math.sqrt(2.0)


def svec_dim(m: int) -> int:
    return m * (m + 1) // 2


@lru_cache(maxsize=None)
def sym_pairs(m: int):
    """Upper-triangle index pairs in column-stacked order."""
    return tuple((i, j) for j in range(m) for i in range(j + 1))


@lru_cache(maxsize=None)
def _tri_arrays(m: int):
    pairs = sym_pairs(m)
    ii = np.array([p[0] for p in pairs])
    jj = np.array([p[1] for p in pairs])
    sc = np.where(ii == jj, 1.0, R2)
    return ii, jj, sc


@lru_cache(maxsize=None)
def _svec_index_map(m: int):
    return {pair: r for r, pair in enumerate(sym_pairs(m))}


def svec(M) -> np.ndarray:
    """Scaled upper-triangle vectorization; supports stacked matrices."""
    M = np.asarray(M, dtype=float)
    m = M.shape[-1]
    ii, jj, sc = _tri_arrays(m)
    return M[..., ii, jj] * sc


def unsvec(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    m = int((math.isqrt(8 * d + 1) - 1) // 2)
    if svec_dim(m) != d:
        raise ValueError(f"length {d} is not a triangular number")
    ii, jj, sc = _tri_arrays(m)
    out = np.zeros(v.shape[:-1] + (m, m))
    vals = v / sc
    out[..., ii, jj] = vals
    out[..., jj, ii] = vals
    return out


def sym_col_scale(m: int) -> np.ndarray:
    """Per-component scale of svec (1 on the diagonal, sqrt(2) off it).

    A coefficient computed against raw matrix entries must be divided by
    this vector before it multiplies a stored svec variable.
    """
    return _tri_arrays(m)[2]


def min_eigenvalue(M, sym_tol: float = 1e-8) -> float:
    """Smallest eigenvalue of a symmetric matrix; rejects asymmetric input."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.abs(M).max()))
    if float(np.abs(M - M.T).max()) > sym_tol * scale:
        raise ValueError("matrix is not symmetric to tolerance")
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


@dataclass(frozen=True)
class ConeSpec:
    kind: str  # zero | nonneg | soc | psd
    dim: int  # cone dimension; for psd, the matrix side length
    tag: tuple
    # Objective-side modeling cones (the determinant-root tower) set this
    # false: their slack bounds the objective value, not feasibility of the
    # returned point, so they are excluded from the acceptance gate.
    audit: bool = True

    @property
    def rows(self) -> int:
        return svec_dim(self.dim) if self.kind == "psd" else self.dim


@dataclass
class SolverSettings:
    verbose: bool = False
    max_iter: int | None = None
    time_limit: float | None = None
    tol_gap_abs: float | None = None
    tol_gap_rel: float | None = None
    tol_feas: float | None = None
    audit_tol: float = 1e-7


@dataclass
class SolveReport:
    status: str  # optimal | infeasible | unbounded | numerical_failure
    objective: float | None
    x: np.ndarray | None
    # Worst slack over audited (constraint) cones; slack_by_tag also lists
    # any objective-side modeling cones for diagnostics.
    worst_slack: float | None
    slack_by_tag: dict | None
    solver_status: str
    iterations: int
    solve_time: float
    extra: dict = field(default_factory=dict)


class ConicProgram:
    """Incrementally assembled conic program with tagged cones."""

    def __init__(self):
        self._vars: dict[str, tuple[str, int, int, int | None]] = {}
        self._nvar = 0
        self._rows = 0
        self._ti: list[np.ndarray] = []
        self._tj: list[np.ndarray] = []
        self._tv: list[np.ndarray] = []
        self._bparts: list[np.ndarray] = []
        self.cones: list[ConeSpec] = []
        self._qparts: dict[str, np.ndarray] = {}
        self._built = None
        self._csr = None
        self._frozen = False
        self._detroot = None

    # -- variables ---------------------------------------------------------

    def _add_var(self, name, kind, size, side=None):
        if self._frozen:
            raise RuntimeError("derived program is immutable")
        if name in self._vars:
            raise ValueError(f"variable {name!r} already declared")
        self._vars[name] = (kind, size, self._nvar, side)
        self._nvar += size
        self._built = None
        return name

    def add_scalar(self, name: str) -> str:
        return self._add_var(name, "scalar", 1)

    def add_vector(self, name: str, size: int) -> str:
        return self._add_var(name, "vec", int(size))

    def add_symmetric(self, name: str, side: int) -> str:
        """Symmetric matrix variable stored as its svec."""
        return self._add_var(name, "sym", svec_dim(side), side=int(side))

    @property
    def nvar(self) -> int:
        return self._nvar

    @property
    def nrows(self) -> int:
        return self._rows

    def var_slice(self, name: str) -> slice:
        _, size, off, _ = self._vars[name]
        return slice(off, off + size)

    def value(self, x: np.ndarray, name: str):
        kind, size, off, side = self._vars[name]
        piece = np.asarray(x, dtype=float)[off : off + size]
        if kind == "scalar":
            return float(piece[0])
        if kind == "sym":
            return unsvec(piece)
        return piece.copy()

    # -- constraints -------------------------------------------------------

    def _append(
        self, coeffs: dict, const: np.ndarray, kind: str, dim: int, tag,
        audit: bool = True,
    ):
        if self._frozen:
            raise RuntimeError("derived program is immutable")
        const = np.atleast_1d(np.asarray(const, dtype=float))
        rows = const.shape[0]
        base = self._rows
        for name, C in coeffs.items():
            kindv, size, off, _ = self._vars[name]
            C = np.asarray(C, dtype=float)
            if C.shape != (rows, size):
                raise ValueError(
                    f"coefficient for {name!r} has shape {C.shape},"
                    f" expected {(rows, size)}"
                )
            r, c = np.nonzero(C)
            if r.size:
                self._ti.append(base + r)
                self._tj.append(off + c)
                self._tv.append(C[r, c])
        self._bparts.append(const)
        self.cones.append(ConeSpec(kind, dim, tuple(tag), audit))
        self._rows += rows
        self._built = None
        self._csr = None

    def add_zero(self, coeffs: dict, const, tag):
        const = np.atleast_1d(np.asarray(const, dtype=float))
        self._append(coeffs, const, "zero", const.shape[0], tag)

    def add_nonneg(self, coeffs: dict, const, tag):
        const = np.atleast_1d(np.asarray(const, dtype=float))
        self._append(coeffs, const, "nonneg", const.shape[0], tag)

    def add_soc(self, coeffs: dict, const, tag, audit: bool = True):
        const = np.atleast_1d(np.asarray(const, dtype=float))
        self._append(coeffs, const, "soc", const.shape[0], tag, audit)

    def add_psd(self, side: int, coeffs: dict, const, tag, audit: bool = True):
        """One PSD block. Coefficients and the constant are given in svec
        components (constant may also be the (side, side) matrix itself)."""
        const = np.asarray(const, dtype=float)
        if const.ndim == 2:
            const = svec(const)
        if const.shape != (svec_dim(side),):
            raise ValueError("constant term does not match the block size")
        self._append(coeffs, const, "psd", side, tag, audit)

    def add_psd_batch(self, side: int, coeffs: dict, const: np.ndarray, tags):
        """N structurally identical PSD blocks in one call.

        coeffs maps a variable name to an (N, svec_dim(side), var_size)
        tensor; const is (N, svec_dim(side)); tags has length N.
        """
        if self._frozen:
            raise RuntimeError("derived program is immutable")
        const = np.asarray(const, dtype=float)
        tri = svec_dim(side)
        N = const.shape[0]
        if const.shape != (N, tri) or len(tags) != N:
            raise ValueError("batch constant or tag list has the wrong shape")
        base = self._rows
        for name, T in coeffs.items():
            kindv, size, off, _ = self._vars[name]
            T = np.asarray(T, dtype=float)
            if T.shape != (N, tri, size):
                raise ValueError(
                    f"batch coefficient for {name!r} has shape {T.shape},"
                    f" expected {(N, tri, size)}"
                )
            s, r, c = np.nonzero(T)
            if s.size:
                self._ti.append(base + s * tri + r)
                self._tj.append(off + c)
                self._tv.append(T[s, r, c])
        self._bparts.append(const.reshape(-1))
        for tag in tags:
            self.cones.append(ConeSpec("psd", side, tuple(tag)))
        self._rows += N * tri
        self._built = None
        self._csr = None

    def add_objective(self, coeffs: dict):
        """Accumulate linear objective terms (the solver minimizes)."""
        for name, arr in coeffs.items():
            kindv, size, off, _ = self._vars[name]
            arr = np.atleast_1d(np.asarray(arr, dtype=float))
            if arr.shape != (size,):
                raise ValueError(f"objective term for {name!r} has wrong size")
            self._qparts[name] = self._qparts.get(name, np.zeros(size)) + arr
        self._built = None

    # -- assembly / solving --------------------------------------------------

    def _build(self):
        if self._built is None:
            if self._ti:
                i = np.concatenate(self._ti)
                j = np.concatenate(self._tj)
                v = np.concatenate(self._tv)
            else:
                i = j = np.zeros(0, dtype=int)
                v = np.zeros(0)
            A = sp.csc_matrix((-v, (i, j)), shape=(self._rows, self._nvar))
            b = (
                np.concatenate(self._bparts)
                if self._bparts
                else np.zeros(0)
            )
            q = np.zeros(self._nvar)
            for name, arr in self._qparts.items():
                q[self.var_slice(name)] += arr
            self._built = (A, b, q)
        return self._built

    def _cone_row_slices(self):
        out = []
        pos = 0
        for c in self.cones:
            out.append((c, slice(pos, pos + c.rows)))
            pos += c.rows
        return out

    def without_tags(self, tags) -> "ConicProgram":
        """Copy of the program with every cone bearing one of `tags` removed."""
        drop = set(tuple(t) for t in tags)
        A, b, q = self._build()
        if self._csr is None:
            self._csr = A.tocsr()
        keep_rows = []
        kept_cones = []
        for cone, rows in self._cone_row_slices():
            if cone.tag in drop:
                continue
            keep_rows.append(np.arange(rows.start, rows.stop))
            kept_cones.append(cone)
        idx = (
            np.concatenate(keep_rows) if keep_rows else np.zeros(0, dtype=int)
        )
        sub = ConicProgram()
        sub._vars = dict(self._vars)
        sub._nvar = self._nvar
        sub._rows = int(idx.size)
        sub.cones = kept_cones
        sub._qparts = dict(self._qparts)
        sub._built = (self._csr[idx].tocsc(), b[idx], q.copy())
        sub._frozen = True
        sub._detroot = self._detroot
        return sub

    def _clarabel_cones(self):
        out = []
        for c in self.cones:
            if c.kind == "zero":
                out.append(clarabel.ZeroConeT(c.dim))
            elif c.kind == "nonneg":
                out.append(clarabel.NonnegativeConeT(c.dim))
            elif c.kind == "soc":
                out.append(clarabel.SecondOrderConeT(c.dim))
            elif c.kind == "psd":
                out.append(clarabel.PSDTriangleConeT(c.dim))
            else:
                raise ValueError(f"unknown cone kind {c.kind!r}")
        return out

    def audit(self, x) -> dict:
        """Worst slack per tag at the point x.

        PSD blocks report their smallest eigenvalue, nonnegative rows the
        smallest entry, second-order cones s0 - ||s_rest||, and zero cones
        minus the largest absolute residual; >= 0 means satisfied.
        """
        A, b, _ = self._build()
        s = b - A @ np.asarray(x, dtype=float)
        out: dict = {}
        for cone, rows in self._cone_row_slices():
            seg = s[rows]
            if cone.kind == "zero":
                v = -float(np.abs(seg).max()) if seg.size else 0.0
            elif cone.kind == "nonneg":
                v = float(seg.min()) if seg.size else 0.0
            elif cone.kind == "soc":
                v = float(seg[0] - np.linalg.norm(seg[1:]))
            else:
                v = float(np.linalg.eigvalsh(unsvec(seg))[0])
            if cone.tag in out:
                out[cone.tag] = min(out[cone.tag], v)
            else:
                out[cone.tag] = v
        return out

    def _tag_norms(self, z: np.ndarray) -> dict:
        """Euclidean norm of a dual vector restricted to each tag's rows."""
        out: dict = {}
        for cone, rows in self._cone_row_slices():
            v = float(np.linalg.norm(z[rows]))
            out[cone.tag] = out.get(cone.tag, 0.0) + v
        return out

    def solve(self, settings: SolverSettings | None = None) -> SolveReport:
        settings = settings or SolverSettings()
        A, b, q = self._build()
        P = sp.csc_matrix((self._nvar, self._nvar))
        st = clarabel.DefaultSettings()
        st.verbose = settings.verbose
        # The chordal pre-decomposition mangles this problem family; the
        # solver stalls at the first iterate with it on. Keep it off.
        st.chordal_decomposition_enable = False
        if settings.max_iter is not None:
            st.max_iter = settings.max_iter
        if settings.time_limit is not None:
            st.time_limit = settings.time_limit
        if settings.tol_gap_abs is not None:
            st.tol_gap_abs = settings.tol_gap_abs
        if settings.tol_gap_rel is not None:
            st.tol_gap_rel = settings.tol_gap_rel
        if settings.tol_feas is not None:
            st.tol_feas = settings.tol_feas
        solver = clarabel.DefaultSolver(P, q, A, b, self._clarabel_cones(), st)
        sol = solver.solve()
        raw = str(sol.status)
        S = clarabel.SolverStatus
        if sol.status in (S.PrimalInfeasible, S.AlmostPrimalInfeasible):
            extra = {}
            try:
                z = np.asarray(sol.z, dtype=float)
                if z.size == self._rows:
                    extra["dual_norm_by_tag"] = self._tag_norms(z)
            except (AttributeError, TypeError):
                pass
            return SolveReport(
                status="infeasible", objective=None, x=None, worst_slack=None,
                slack_by_tag=None, solver_status=raw,
                iterations=int(sol.iterations), solve_time=float(sol.solve_time),
                extra=extra,
            )
        if sol.status in (S.DualInfeasible, S.AlmostDualInfeasible):
            return SolveReport(
                status="unbounded", objective=None, x=None, worst_slack=None,
                slack_by_tag=None, solver_status=raw,
                iterations=int(sol.iterations), solve_time=float(sol.solve_time),
            )
        x = np.asarray(sol.x, dtype=float)
        slack_by_tag = self.audit(x)
        audited = {c.tag for c in self.cones if c.audit}
        gate = [v for t, v in slack_by_tag.items() if t in audited]
        worst = min(gate) if gate else 0.0
        if sol.status in (S.Solved, S.AlmostSolved) and worst >= -settings.audit_tol:
            status = "optimal"
        else:
            status = "numerical_failure"
        return SolveReport(
            status=status,
            objective=float(q @ x),
            x=x,
            worst_slack=worst,
            slack_by_tag=slack_by_tag,
            solver_status=raw,
            iterations=int(sol.iterations),
            solve_time=float(sol.solve_time),
        )

    def dump(self, path):
        """Write a plain-text, self-describing copy of the program."""
        A, b, q = self._build()
        coo = A.tocoo()
        with open(path, "w") as fh:
            fh.write("conic program: minimize q'x subject to b - A x in K\n")
            fh.write(f"variables: {self._nvar} scalar components\n")
            for name, (kind, size, off, side) in self._vars.items():
                extra = f" side={side}" if side else ""
                fh.write(f"  {name}: kind={kind} size={size} offset={off}{extra}\n")
            fh.write(f"cones: {len(self.cones)} blocks, {self._rows} rows\n")
            for cone, rows in self._cone_row_slices():
                fh.write(
                    f"  kind={cone.kind} dim={cone.dim}"
                    f" rows={rows.start}:{rows.stop} tag={cone.tag}\n"
                )
            fh.write("q nonzeros (index value):\n")
            for idx in np.nonzero(q)[0]:
                fh.write(f"  {idx} {q[idx]:.17g}\n")
            fh.write("b nonzeros (row value):\n")
            for idx in np.nonzero(b)[0]:
                fh.write(f"  {idx} {b[idx]:.17g}\n")
            fh.write(f"A nonzeros (row col value), {coo.nnz} entries:\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"  {r} {c} {v:.17g}\n")


# ---------------------------------------------------------------------------
# determinant-root objective


def _z_pairs(m: int):
    """Lower-triangle index pairs of the auxiliary factor, row-major."""
    return [(a, bcol) for a in range(m) for bcol in range(a + 1)]


def attach_det_root_objective(
    prog: ConicProgram, var: str, tag=("detroot",)
) -> str:
    """Add variables and cones so that maximizing the returned scalar
    maximizes det(var)^(1/m).

    Uses the lower-triangular factor characterization: det W is bounded by
    the product of the diagonal of any Z with [[W, Z], [Z', diag Z]] PSD,
    and the geometric mean of that diagonal is expressed as a binary tree
    of rotated second-order cones. This stays inside symmetric cones, which
    the solver handles far more reliably than power cones on this family.

    The tower cones are registered with audit=False: their slack only
    certifies the epigraph bound on the objective, never feasibility of the
    matrix variable itself, and solve_maxdet recomputes the achieved
    objective directly from the returned matrix.
    """
    kind, size, off, m = prog._vars[var]
    if kind != "sym":
        raise ValueError("determinant objective needs a symmetric variable")
    tag = tuple(tag)
    zname = f"_{var}_detZ"
    prog.add_vector(zname, svec_dim(m))
    zpairs = _z_pairs(m)
    zindex = {p: k for k, p in enumerate(zpairs)}

    side = 2 * m
    tri = svec_dim(side)
    CW = np.zeros((tri, svec_dim(m)))
    CZ = np.zeros((tri, svec_dim(m)))
    wmap = _svec_index_map(m)
    for r, (i, j) in enumerate(sym_pairs(side)):
        if j < m:
            CW[r, wmap[(i, j)]] = 1.0
        elif i < m <= j:
            a = i
            bcol = j - m
            if bcol <= a:
                CZ[r, zindex[(a, bcol)]] = R2
        else:
            if i == j:
                CZ[r, zindex[(i - m, i - m)]] = 1.0
    prog.add_psd(side, {var: CW, zname: CZ}, np.zeros(tri), tag, audit=False)

    diag_comps = [zindex[(a, a)] for a in range(m)]
    if m == 1:
        obj = np.zeros(svec_dim(m))
        obj[diag_comps[0]] = -1.0
        prog.add_objective({zname: obj})
        prog._detroot = (var, m, zname, diag_comps[0])
        return zname

    tname = f"_{var}_detroot"
    prog.add_scalar(tname)
    TSELF = ("t", 0)

    def emit(u, w, v):
        coeffs: dict = {}

        def bump(entry, row, val):
            name, comp = (tname, 0) if entry == TSELF else entry
            arr = coeffs.setdefault(
                name, np.zeros((3, prog._vars[name][1]))
            )
            arr[row, comp] += val

        bump(u, 0, 1.0)
        bump(w, 0, 1.0)
        bump(u, 1, 1.0)
        bump(w, 1, -1.0)
        bump(v, 2, 2.0)
        prog.add_soc(coeffs, np.zeros(3), tag, audit=False)

    level = [(zname, c) for c in diag_comps]
    depth = math.ceil(math.log2(len(level)))
    level += [TSELF] * (2**depth - len(level))
    aux_serial = 0
    while len(level) > 1:
        nxt = []
        for k in range(0, len(level), 2):
            u, w = level[k], level[k + 1]
            if u == TSELF and w == TSELF:
                nxt.append(TSELF)
                continue
            if len(level) == 2:
                node = TSELF
            else:
                aux = f"_{var}_gm{aux_serial}"
                aux_serial += 1
                prog.add_scalar(aux)
                node = (aux, 0)
            emit(u, w, node)
            nxt.append(node)
        level = nxt
    prog.add_objective({tname: np.array([-1.0])})
    prog._detroot = (var, m, tname, 0)
    return tname


def solve_maxdet(prog: ConicProgram, settings: SolverSettings | None = None) -> SolveReport:
    """Solve a program with a determinant-root objective attached.

    The reported objective is log det of the matrix variable, recomputed
    from the returned matrix itself so that it is exact for the iterate the
    caller receives. The tower's own epigraph value and the raw solver
    objective move to extra.
    """
    if prog._detroot is None:
        raise ValueError("no determinant-root objective attached")
    rep = prog.solve(settings)
    var, m, tname, tcomp = prog._detroot
    if rep.x is not None:
        kind, size, off, _ = prog._vars[tname]
        t = float(rep.x[off + tcomp])
        W = prog.value(rep.x, var)
        sign, logabs = np.linalg.slogdet(W)
        rep.extra["det_root"] = t
        rep.extra["log_det_tower"] = m * math.log(t) if t > 0 else -math.inf
        rep.extra["solver_objective"] = rep.objective
        rep.extra["log_det_direct"] = float(logabs) if sign > 0 else -math.inf
        rep.objective = rep.extra["log_det_direct"]
    return rep


def solve_linear_sdp(prog: ConicProgram, settings: SolverSettings | None = None) -> SolveReport:
    """Solve a program with an ordinary linear objective."""
    return prog.solve(settings)
