"""Block-diagonal conic programs in standard form, their solution, and SDPA files.

A :class:`ConicProgram` is

    max (or min)  <C, X>
    s.t.          <F_i, X> = b_i,   i = 1..m
                  X = diag(X_1, ..., X_K, diag(z)),  X_k PSD,  z >= 0

which is exactly the "dual" problem of the SDPA sparse format, so export is
a direct transcription.  Coefficient matrices are symmetric and stored by
their upper triangle: an off-diagonal value ``v`` at ``(i, j)`` stands for
``F_ij = F_ji = v`` and therefore contributes ``2 v X_ij`` to ``<F, X>``.
"""
from __future__ import annotations

import configparser
import logging
import os
import re
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import StructuralError

log = logging.getLogger(__name__)

SETTINGS_ENV = "RANDCERT_SOLVER_SETTINGS"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"


@dataclass(frozen=True, eq=False)
class ConicProgram:
    psd_dims: tuple[int, ...]
    nonneg_dim: int
    rhs: np.ndarray
    # constraint coefficients, COO over (row, block, i, j) with i <= j
    a_row: np.ndarray
    a_blk: np.ndarray
    a_i: np.ndarray
    a_j: np.ndarray
    a_val: np.ndarray
    c_blk: np.ndarray
    c_i: np.ndarray
    c_j: np.ndarray
    c_val: np.ndarray
    sense: str = "max"

    @property
    def n_rows(self) -> int:
        return int(self.rhs.size)

    @property
    def block_dims(self) -> tuple[int, ...]:
        """SDPA block structure: PSD sizes, then the nonnegative block as a negative size."""
        return self.psd_dims + ((-self.nonneg_dim,) if self.nonneg_dim else ())

    def __eq__(self, other):
        if not isinstance(other, ConicProgram):
            return NotImplemented
        return (self.psd_dims == other.psd_dims and self.nonneg_dim == other.nonneg_dim
                and self.sense == other.sense
                and all(np.array_equal(getattr(self, f.name), getattr(other, f.name))
                        for f in fields(self) if f.name.startswith(("a_", "c_", "rhs"))))

    __hash__ = None

    def objective_value(self, blocks: list[np.ndarray], z: np.ndarray | None = None) -> float:
        return _apply(self, self.c_blk, self.c_i, self.c_j, self.c_val, None, blocks, z, 1)[0]

    def row_values(self, blocks: list[np.ndarray], z: np.ndarray | None = None) -> np.ndarray:
        return _apply(self, self.a_blk, self.a_i, self.a_j, self.a_val, self.a_row, blocks, z, self.n_rows)


def _apply(prog, blk, ii, jj, vals, rows, blocks, z, n_out):
    out = np.zeros(n_out)
    rows = np.zeros(len(vals), dtype=int) if rows is None else rows
    k_lp = len(prog.psd_dims)
    for r, b, i, j, v in zip(rows, blk, ii, jj, vals):
        if b == k_lp:
            out[r] += v * z[i]
        else:
            out[r] += v * blocks[b][i, j] * (1 if i == j else 2)
    return out


class ProgramBuilder:
    """Accumulates rows of a :class:`ConicProgram`.

    ``add``/``add_objective`` take the coefficient of the variable ``X_ij``
    itself; ``add_raw`` takes the stored (halved off-diagonal) value.
    """

    def __init__(self, psd_dims=(), nonneg_dim: int = 0, sense: str = "max"):
        if sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        self.psd_dims = tuple(int(d) for d in psd_dims)
        self.nonneg_dim = int(nonneg_dim)
        self.sense = sense
        self.rhs: list[float] = []
        self._a: list[tuple[int, int, int, int, float]] = []
        self._c: list[tuple[int, int, int, float]] = []

    @property
    def lp_block(self) -> int:
        return len(self.psd_dims)

    def _check(self, blk, i, j):
        if blk < len(self.psd_dims):
            n = self.psd_dims[blk]
            if not (0 <= i < n and 0 <= j < n):
                raise StructuralError(f"entry ({i},{j}) outside PSD block {blk} of size {n}")
        elif blk == self.lp_block and self.nonneg_dim:
            if i != j or not 0 <= i < self.nonneg_dim:
                raise StructuralError(f"entry ({i},{j}) outside the nonnegative block")
        else:
            raise StructuralError(f"block {blk} does not exist")

    @staticmethod
    def _store(i, j, coef):
        if i > j:
            i, j = j, i
        return i, j, (coef if i == j else coef / 2.0)

    def new_row(self, rhs: float = 0.0) -> int:
        self.rhs.append(float(rhs))
        return len(self.rhs) - 1

    def add(self, row: int, blk: int, i: int, j: int, coef: float):
        self._check(blk, i, j)
        i, j, v = self._store(i, j, coef)
        self._a.append((row, blk, i, j, v))

    def add_raw(self, row: int, blk: int, i: int, j: int, value: float):
        self._check(blk, i, j)
        if i > j:
            i, j = j, i
        self._a.append((row, blk, i, j, value))

    def add_objective(self, blk: int, i: int, j: int, coef: float):
        self._check(blk, i, j)
        self._c.append((blk, *self._store(i, j, coef)))

    def add_objective_raw(self, blk: int, i: int, j: int, value: float):
        self._check(blk, i, j)
        if i > j:
            i, j = j, i
        self._c.append((blk, i, j, value))

    def build(self) -> ConicProgram:
        a = _merge(self._a, 4)
        c = _merge(self._c, 3)
        return ConicProgram(
            psd_dims=self.psd_dims, nonneg_dim=self.nonneg_dim, rhs=np.array(self.rhs, dtype=float),
            a_row=a[0], a_blk=a[1], a_i=a[2], a_j=a[3], a_val=a[4],
            c_blk=c[0], c_i=c[1], c_j=c[2], c_val=c[3], sense=self.sense,
        )


def _merge(entries, nkey):
    """Sort by key, sum duplicates, drop exact zeros; returns key arrays plus values."""
    acc: dict[tuple, float] = {}
    for e in entries:
        key = tuple(int(k) for k in e[:nkey])
        acc[key] = acc.get(key, 0.0) + float(e[nkey])
    keys = sorted(k for k, v in acc.items() if v != 0.0)
    cols = [np.array([k[t] for k in keys], dtype=np.int64) for t in range(nkey)]
    vals = np.array([acc[k] for k in keys], dtype=float)
    for arr in (*cols, vals):
        arr.setflags(write=False)
    return (*cols, vals)


# ----------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-6
    max_iter: int = 200
    verbose: bool = False
    presolve_rank_tol: float = 1e-10

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "SolverSettings":
        cp = configparser.ConfigParser()
        cp.read(path)
        if not cp.has_section("solver"):
            return cls()
        sec = cp["solver"]
        kwargs = {}
        for f in fields(cls):
            if f.name in sec:
                kwargs[f.name] = sec.getboolean(f.name) if f.type in ("bool", bool) else type(getattr(cls(), f.name))(sec[f.name])
        return cls(**kwargs)


def load_settings(**overrides) -> SolverSettings:
    """Defaults, then the INI file named by ``$RANDCERT_SOLVER_SETTINGS``, then keyword overrides."""
    path = os.environ.get(SETTINGS_ENV)
    base = SolverSettings.from_file(path) if path else SolverSettings()
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(base, **overrides)


@dataclass(eq=False)
class SolverReport:
    status: str
    primal_value: float
    dual_value: float
    blocks: list = field(repr=False)           # primal PSD blocks
    nonneg: np.ndarray = field(repr=False)     # primal nonnegative block
    multipliers: np.ndarray = field(repr=False)  # one per equality row
    dual_slack: list = field(repr=False)       # Z blocks (PSD part of the dual)
    dual_slack_nonneg: np.ndarray = field(repr=False)
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    gap: float = np.nan
    iterations: int = 0
    solve_time: float = 0.0
    dropped_rows: tuple = ()
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _var_layout(prog: ConicProgram):
    offsets, start = [], 0
    for n in prog.psd_dims:
        offsets.append(start)
        start += n * (n + 1) // 2
    lp_offset = start
    return offsets, lp_offset, start + prog.nonneg_dim


def _var_index(prog, offsets, lp_offset, blk, i, j):
    if blk == len(prog.psd_dims):
        return lp_offset + i
    # upper triangle, column-major: (0,0),(0,1),(1,1),(0,2),...
    return offsets[blk] + j * (j + 1) // 2 + i


def _entry_vectors(prog, offsets, lp_offset, blk, ii, jj, vals):
    k_lp = len(prog.psd_dims)
    cols = np.array([_var_index(prog, offsets, lp_offset, b, i, j) for b, i, j in zip(blk, ii, jj)], dtype=np.int64)
    scale = np.where((np.asarray(blk) != k_lp) & (np.asarray(ii) != np.asarray(jj)), 2.0, 1.0)
    return cols, np.asarray(vals) * scale


def _independent_rows(A: sp.csr_matrix, tol: float):
    """Split rows into an independent set and the dependent remainder.

    Rows owning a column no other row touches are independent of everything
    else; they are peeled off repeatedly, and only what remains goes through
    a pivoted QR.  Dependent rows are combinations of the QR basis rows alone,
    which are returned third.
    """
    m = A.shape[0]
    A = A.tocsr()
    Ac = A.tocsc()
    active = np.ones(m, dtype=bool)
    keep = []
    col_count = np.diff(Ac.indptr).astype(np.int64)
    changed = True
    while changed:
        changed = False
        for r in np.flatnonzero(active):
            cols = A.indices[A.indptr[r]:A.indptr[r + 1]]
            if np.any(col_count[cols] == 1):
                active[r] = False
                keep.append(r)
                col_count[cols] -= 1
                changed = True
    rest = np.flatnonzero(active)
    dropped, basis = [], []
    if rest.size:
        sub = A[rest].toarray()
        _, R, piv = scipy.linalg.qr(sub.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > tol * max(1.0, diag[0] if diag.size else 1.0)))
        basis = rest[piv[:rank]].tolist()
        keep.extend(basis)
        dropped = rest[piv[rank:]].tolist()
    as_idx = lambda v: np.array(sorted(v), dtype=np.int64)
    return as_idx(keep), as_idx(dropped), as_idx(basis)


def solve(prog: ConicProgram, tol: float | None = None, settings: SolverSettings | None = None) -> SolverReport:
    """Solve ``prog`` with the Clarabel interior-point method.

    Linearly dependent equality rows are removed first (their multipliers are
    reported as zero); if their right-hand sides are inconsistent with the
    kept rows the program is reported infeasible without calling the solver.
    """
    import clarabel

    settings = settings or load_settings()
    tol = settings.tol if tol is None else tol
    t0 = time.perf_counter()
    offsets, lp_offset, nvar = _var_layout(prog)
    m = prog.n_rows

    cols, vals = _entry_vectors(prog, offsets, lp_offset, prog.a_blk, prog.a_i, prog.a_j, prog.a_val)
    A_eq = sp.csr_matrix((vals, (prog.a_row, cols)), shape=(m, nvar))
    ccols, cvals = _entry_vectors(prog, offsets, lp_offset, prog.c_blk, prog.c_i, prog.c_j, prog.c_val)
    c = np.zeros(nvar)
    np.add.at(c, ccols, cvals)
    b = prog.rhs

    none = np.zeros(0, dtype=np.int64)
    keep, dropped, basis = _independent_rows(A_eq, settings.presolve_rank_tol) if m else (none, none, none)
    empty = _empty_report(prog, dropped)
    if dropped.size:
        Ak = A_eq[basis].toarray()
        Ad = A_eq[dropped].toarray()
        W, *_ = np.linalg.lstsq(Ak.T, Ad.T, rcond=None)
        inconsistency = np.max(np.abs(b[dropped] - W.T @ b[basis]))
        if inconsistency > max(tol * 1e-2, 1e-9) * max(1.0, np.max(np.abs(b))):
            empty.status = INFEASIBLE
            empty.message = f"equality constraints are inconsistent (residual {inconsistency:.3g})"
            empty.solve_time = time.perf_counter() - t0
            return empty

    # Clarabel form: min q'x  s.t.  A x + s = b,  s in K
    q = -c if prog.sense == "max" else c
    cone_rows = [A_eq[keep]]
    cone_rhs = [b[keep]]
    cones = [clarabel.ZeroConeT(int(keep.size))] if keep.size else []
    for k, n in enumerate(prog.psd_dims):
        nt = n * (n + 1) // 2
        jj = np.concatenate([np.full(j + 1, j) for j in range(n)])
        ii = np.concatenate([np.arange(j + 1) for j in range(n)])
        scale = np.where(ii == jj, 1.0, np.sqrt(2.0))
        cone_rows.append(sp.csr_matrix((-scale, (np.arange(nt), offsets[k] + np.arange(nt))), shape=(nt, nvar)))
        cone_rhs.append(np.zeros(nt))
        cones.append(clarabel.PSDTriangleConeT(n))
    if prog.nonneg_dim:
        nz = prog.nonneg_dim
        cone_rows.append(sp.csr_matrix((-np.ones(nz), (np.arange(nz), lp_offset + np.arange(nz))), shape=(nz, nvar)))
        cone_rhs.append(np.zeros(nz))
        cones.append(clarabel.NonnegativeConeT(nz))
    A = sp.vstack(cone_rows).tocsc()
    bb = np.concatenate(cone_rhs)

    attempts = []
    for extra in _RETRY_LADDER:
        rep = _run_clarabel(prog, A, bb, q, cones, keep, offsets, lp_offset, settings, tol, extra, _copy_report(empty))
        attempts.append(rep)
        if rep.status != NUMERICAL_FAILURE:
            break
    report = rep if rep.status != NUMERICAL_FAILURE else min(attempts, key=_badness)
    report.iterations = sum(r.iterations for r in attempts)
    report.solve_time = time.perf_counter() - t0
    if report.status == NUMERICAL_FAILURE:
        log.warning("solver finished with %s (gap %.2g, primal res %.2g, dual res %.2g)",
                    report.message, report.gap, report.primal_residual, report.dual_residual)
    return report


# Programs built from boundary behaviors usually have no strictly feasible
# point; KKT regularization above Clarabel's default gets through those and
# costs nothing on well-posed programs.
_RETRY_LADDER = (
    {"static_regularization_constant": 1e-7},
    {"static_regularization_constant": 1e-6, "max_step_fraction": 0.95},
    {},
)


def _copy_report(r: SolverReport) -> SolverReport:
    return replace(r, blocks=[], dual_slack=[])


def _badness(r: SolverReport) -> float:
    vals = [r.gap, r.primal_residual, r.dual_residual]
    return np.inf if any(np.isnan(vals)) else max(vals)


def _run_clarabel(prog, A, bb, q, cones, keep, offsets, lp_offset, settings, tol, extra, report):
    import clarabel

    cs = clarabel.DefaultSettings()
    inner = min(1e-8, tol * 1e-2)
    cs.tol_gap_abs = cs.tol_gap_rel = cs.tol_feas = inner
    cs.max_iter = settings.max_iter
    cs.verbose = settings.verbose
    cs.max_threads = 1
    for k, v in extra.items():
        setattr(cs, k, v)
    nvar = A.shape[1]
    solver = clarabel.DefaultSolver(sp.csc_matrix((nvar, nvar)), q, A, bb, cones, cs)
    res = solver.solve()

    status_name = str(res.status)
    x = np.asarray(res.x)
    z = np.asarray(res.z)
    report.iterations = int(res.iterations)
    report.message = status_name
    if status_name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        report.status = INFEASIBLE
        return report
    if status_name in ("DualInfeasible", "AlmostDualInfeasible"):
        report.status = UNBOUNDED
        return report

    m = prog.n_rows
    b = prog.rhs
    y = np.zeros(m)
    sign = 1.0 if prog.sense == "max" else -1.0
    y[keep] = sign * z[:keep.size]
    blocks = []
    for k, n in enumerate(prog.psd_dims):
        X = np.zeros((n, n))
        iu = np.triu_indices(n)
        # triu_indices is row-major; map each (i, j) to its column-major slot
        X[iu] = x[offsets[k] + iu[1] * (iu[1] + 1) // 2 + iu[0]]
        blocks.append(X + np.triu(X, 1).T)
    nonneg = x[lp_offset:lp_offset + prog.nonneg_dim].copy()

    # dual slack recomputed from the multipliers: sign*(A^T y - C)
    dual_blocks, dual_lp = _dual_slack(prog, y)
    primal = prog.objective_value(blocks, nonneg)
    dual = float(b @ y)
    pres = float(np.max(np.abs(prog.row_values(blocks, nonneg) - b))) if m else 0.0
    pres = max(pres, _neg_part(blocks, nonneg))
    dres = _neg_part(dual_blocks, dual_lp)
    gap = abs(primal - dual)

    report.primal_value = primal
    report.dual_value = dual
    report.blocks = blocks
    report.nonneg = nonneg
    report.multipliers = y
    report.dual_slack = dual_blocks
    report.dual_slack_nonneg = dual_lp
    report.primal_residual = pres
    report.dual_residual = dres
    report.gap = gap
    good = gap <= tol and pres <= 10 * tol and dres <= 10 * tol
    report.status = OPTIMAL if status_name in ("Solved", "AlmostSolved") and good else NUMERICAL_FAILURE
    return report


def _empty_report(prog, dropped) -> SolverReport:
    return SolverReport(
        status=NUMERICAL_FAILURE, primal_value=np.nan, dual_value=np.nan,
        blocks=[], nonneg=np.zeros(0), multipliers=np.zeros(prog.n_rows),
        dual_slack=[], dual_slack_nonneg=np.zeros(0), dropped_rows=tuple(int(r) for r in dropped),
    )


def _neg_part(blocks, lp) -> float:
    worst = 0.0
    for X in blocks:
        if X.size:
            worst = max(worst, -float(np.linalg.eigvalsh(X)[0]))
    if lp is not None and lp.size:
        worst = max(worst, -float(lp.min()))
    return worst


def _dual_slack(prog: ConicProgram, y: np.ndarray):
    """``A^T y - C`` for max problems, ``C - A^T y`` for min problems; PSD at dual feasibility."""
    sign = 1.0 if prog.sense == "max" else -1.0
    k_lp = len(prog.psd_dims)
    Z = [np.zeros((n, n)) for n in prog.psd_dims]
    zl = np.zeros(prog.nonneg_dim)

    def put(blk, i, j, v):
        if blk == k_lp:
            zl[i] += v
        else:
            Z[blk][i, j] += v
            if i != j:
                Z[blk][j, i] += v

    for r, blk, i, j, v in zip(prog.a_row, prog.a_blk, prog.a_i, prog.a_j, prog.a_val):
        put(blk, i, j, sign * y[r] * v)
    for blk, i, j, v in zip(prog.c_blk, prog.c_i, prog.c_j, prog.c_val):
        put(blk, i, j, -sign * v)
    return Z, zl


# ----------------------------------------------------------------------------
# SDPA sparse format


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def export_sdpa(prog: ConicProgram) -> str:
    """SDPA sparse (``.dat-s``) text.

    SDPA maximizes ``<F0, Y>``; a minimization program is written with
    ``F0 = -C`` and flagged in the leading comment so that import restores it.
    """
    lines = [f"* sense: {'maximize' if prog.sense == 'max' else 'minimize'}"]
    lines.append(str(prog.n_rows))
    dims = prog.block_dims
    lines.append(str(len(dims)))
    lines.append(" ".join(str(d) for d in dims))
    lines.append(" ".join(_fmt(v) for v in prog.rhs))
    sgn = 1.0 if prog.sense == "max" else -1.0
    for blk, i, j, v in zip(prog.c_blk, prog.c_i, prog.c_j, prog.c_val):
        lines.append(f"0 {blk + 1} {i + 1} {j + 1} {_fmt(sgn * v)}")
    for r, blk, i, j, v in zip(prog.a_row, prog.a_blk, prog.a_i, prog.a_j, prog.a_val):
        lines.append(f"{r + 1} {blk + 1} {i + 1} {j + 1} {_fmt(v)}")
    return "\n".join(lines) + "\n"


_SPLIT = re.compile(r"[\s,{}()]+")


def import_sdpa(text: str) -> ConicProgram:
    sense = "max"
    body = []
    for line in text.splitlines():
        s = line.strip()
        if not body and (s.startswith('"') or s.startswith("*")):
            if "sense:" in s and "minimize" in s:
                sense = "min"
            continue
        body.append(line)
    tokens = [t for t in _SPLIT.split(" ".join(body)) if t]
    pos = 0

    def take(n=1):
        nonlocal pos
        out = tokens[pos:pos + n]
        if len(out) < n:
            raise StructuralError("truncated SDPA file")
        pos += n
        return out

    m = int(take()[0])
    nblock = int(take()[0])
    dims = [int(float(t)) for t in take(nblock)]
    psd = tuple(d for d in dims if d > 0)
    lp = [d for d in dims if d < 0]
    if len(lp) > 1 or (lp and dims[-1] > 0):
        raise StructuralError("only a single trailing nonnegative block is supported")
    b = ProgramBuilder(psd, -lp[0] if lp else 0, sense)
    for v in take(m):
        b.new_row(float(v))
    sgn = 1.0 if sense == "max" else -1.0
    while pos < len(tokens):
        mat, blk, i, j = (int(t) for t in take(4))
        val = float(take()[0])
        if mat == 0:
            b.add_objective_raw(blk - 1, i - 1, j - 1, sgn * val)
        else:
            b.add_raw(mat - 1, blk - 1, i - 1, j - 1, val)
    return b.build()
