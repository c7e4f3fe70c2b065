"""Numerical kernels: sparse linear solve and LP solve.

Both kernels are thin, contract-checked fronts over scipy: sparse LU for the
linear systems that power flow assembles, and HiGHS dual simplex for every LP
in the pipeline.  The simplex backend matters: it returns vertex solutions,
which is what makes assignment-polytope LPs come back integral, and it is
deterministic for a fixed input, which the reproducible-build contract needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linprog

from .errors import NumericalError, ValidationError

LINEAR_RESIDUAL_TOL = 1e-8
LP_FEASIBILITY_TOL = 1e-7
PIVOT_TOL = 1e-12


@dataclass
class SparseMatrix:
    """Square sparse matrix in COO form with deduplicated coordinates."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @classmethod
    def from_entries(cls, n: int, entries) -> "SparseMatrix":
        """Build from (row, col, value) triplets; duplicates are summed."""
        if not entries:
            raise ValidationError("sparse matrix needs at least one entry")
        rows, cols, vals = (np.asarray(a) for a in zip(*entries))
        vals = vals.astype(float)
        if not np.all(np.isfinite(vals)):
            raise ValidationError("sparse matrix entries must be finite")
        if rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n:
            raise ValidationError("sparse matrix entry out of range")
        coo = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
        csr = coo.tocsr()
        csr.sum_duplicates()
        back = csr.tocoo()
        return cls(n=n, rows=back.row, cols=back.col, vals=back.data)

    def to_csc(self) -> sp.csc_matrix:
        return sp.coo_matrix((self.vals, (self.rows, self.cols)), shape=(self.n, self.n)).tocsc()


def solve_linear(A, b: np.ndarray) -> np.ndarray:
    """Solve A x = b by sparse LU with a residual guarantee.

    Accepts a SparseMatrix or any scipy sparse matrix.  Raises NumericalError
    when the factorization breaks down or leaves a pivot below tolerance,
    naming the offending pivot index.
    """
    mat = A.to_csc() if isinstance(A, SparseMatrix) else sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if mat.shape[0] != mat.shape[1]:
        raise ValidationError("solve_linear requires a square matrix")
    if mat.shape[0] != b.shape[0]:
        raise ValidationError("dimension mismatch between matrix and rhs")
    try:
        lu = spla.splu(mat)
    except RuntimeError as exc:
        raise NumericalError(f"sparse factorization failed: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    scale = diag.max() if diag.size else 0.0
    bad = np.where(diag <= PIVOT_TOL * max(scale, 1.0))[0]
    if bad.size:
        raise NumericalError(f"matrix singular or indefinite at pivot index {int(bad[0])}")
    x = lu.solve(b)
    residual = np.abs(mat @ x - b).max() if b.size else 0.0
    bound = LINEAR_RESIDUAL_TOL * (1.0 + np.abs(b).max() if b.size else 1.0)
    if not np.isfinite(residual) or residual > bound:
        raise NumericalError(f"linear solve residual {residual:.3e} exceeds bound {bound:.3e}")
    return x


class LinearProgram:
    """Incrementally assembled LP: min c.x subject to rows with <=, >=, = senses.

    Rows are stored as sparse triplets; bounds default to [0, +inf).
    """

    def __init__(self, num_vars: int, objective=None):
        self.n = num_vars
        self.c = np.zeros(num_vars)
        if objective is not None:
            obj = np.asarray(objective, dtype=float)
            if obj.shape != (num_vars,):
                raise ValidationError("objective length does not match variable count")
            self.c[:] = obj
        self.lo = np.zeros(num_vars)
        self.hi = np.full(num_vars, np.inf)
        self._rows: list[tuple[str, list[tuple[int, float]], float]] = []

    def set_bounds(self, j: int, lo: float, hi: float):
        if lo > hi:
            raise ValidationError(f"variable {j}: lower bound {lo} above upper {hi}")
        self.lo[j] = lo
        self.hi[j] = hi

    def set_objective(self, j: int, coeff: float):
        self.c[j] = coeff

    def _add(self, sense: str, coeffs, rhs: float):
        coeffs = [(int(j), float(v)) for j, v in coeffs if v != 0.0]
        for j, _ in coeffs:
            if not 0 <= j < self.n:
                raise ValidationError(f"row references unknown variable {j}")
        self._rows.append((sense, coeffs, float(rhs)))

    def add_eq(self, coeffs, rhs: float):
        self._add("=", coeffs, rhs)

    def add_le(self, coeffs, rhs: float):
        self._add("<", coeffs, rhs)

    def add_ge(self, coeffs, rhs: float):
        self._add(">", coeffs, rhs)

    # -- assembly for scipy ------------------------------------------------

    def _assemble(self):
        eq_r, eq_c, eq_v, eq_b = [], [], [], []
        ub_r, ub_c, ub_v, ub_b = [], [], [], []
        for sense, coeffs, rhs in self._rows:
            if sense == "=":
                row = len(eq_b)
                for j, v in coeffs:
                    eq_r.append(row)
                    eq_c.append(j)
                    eq_v.append(v)
                eq_b.append(rhs)
            else:
                flip = -1.0 if sense == ">" else 1.0
                row = len(ub_b)
                for j, v in coeffs:
                    ub_r.append(row)
                    ub_c.append(j)
                    ub_v.append(flip * v)
                ub_b.append(flip * rhs)
        A_eq = sp.csr_matrix((eq_v, (eq_r, eq_c)), shape=(len(eq_b), self.n)) if eq_b else None
        A_ub = sp.csr_matrix((ub_v, (ub_r, ub_c)), shape=(len(ub_b), self.n)) if ub_b else None
        return A_eq, np.array(eq_b), A_ub, np.array(ub_b)


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    objective: float | None = None
    dual_objective: float | None = None
    eq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ub_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lower_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    upper_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve_lp(lp: LinearProgram) -> LPResult:
    """Solve an LP, certifying feasibility and the primal/dual objective match.

    Infeasible and unbounded instances are reported distinctly via the result
    status rather than raised, since several callers branch on them.
    """
    A_eq, b_eq, A_ub, b_ub = lp._assemble()
    bounds = list(zip(lp.lo, lp.hi))
    res = linprog(lp.c, A_ub=A_ub, b_ub=b_ub if A_ub is not None else None,
                  A_eq=A_eq, b_eq=b_eq if A_eq is not None else None,
                  bounds=bounds, method="highs-ds")
    if res.status == 2:
        return LPResult(status="infeasible")
    if res.status == 3:
        return LPResult(status="unbounded")
    if res.status != 0:
        raise NumericalError(f"LP solver failed: {res.message}")

    x = np.asarray(res.x)
    scale = 1.0 + (np.abs(b_eq).max() if b_eq.size else 0.0) + (np.abs(b_ub).max() if b_ub.size else 0.0)
    if A_eq is not None and b_eq.size:
        gap = np.abs(A_eq @ x - b_eq).max()
        if gap > LP_FEASIBILITY_TOL * scale:
            raise NumericalError(f"LP equality residual {gap:.3e} beyond tolerance")
    if A_ub is not None and b_ub.size:
        gap = (A_ub @ x - b_ub).max()
        if gap > LP_FEASIBILITY_TOL * scale:
            raise NumericalError(f"LP inequality violation {gap:.3e} beyond tolerance")
    if (x - lp.lo).min() < -LP_FEASIBILITY_TOL or (lp.hi - x).min() < -LP_FEASIBILITY_TOL:
        raise NumericalError("LP bound violation beyond tolerance")

    lower = np.asarray(res.lower.marginals)
    upper = np.asarray(res.upper.marginals)
    eq_duals = np.asarray(res.eqlin.marginals) if A_eq is not None else np.zeros(0)
    ub_duals = np.asarray(res.ineqlin.marginals) if A_ub is not None else np.zeros(0)
    dual = 0.0
    if A_eq is not None and b_eq.size:
        dual += float(b_eq @ eq_duals)
    if A_ub is not None and b_ub.size:
        dual += float(b_ub @ ub_duals)
    finite_lo = np.isfinite(lp.lo)
    finite_hi = np.isfinite(lp.hi)
    dual += float(lp.lo[finite_lo] @ lower[finite_lo])
    dual += float(lp.hi[finite_hi] @ upper[finite_hi])

    return LPResult(
        status="optimal",
        x=x,
        objective=float(res.fun),
        dual_objective=dual,
        eq_duals=eq_duals,
        ub_duals=ub_duals,
        lower_duals=lower,
        upper_duals=upper,
    )
