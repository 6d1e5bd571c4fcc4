"""Linear programs: a dense two-phase simplex and a sparse HiGHS backend.

Problems are stated as::

    minimize    c @ v
    subject to  A_ub @ v <= b_ub
                A_eq @ v == b_eq
                lb <= v <= ub          (entries may be infinite)

``solve`` dispatches small problems to the in-house tableau simplex and large
or sparse ones to scipy's HiGHS.  Either way the returned point is checked
against the feasibility tolerances below before it is reported optimal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
BOUND_TOL = 1e-9
PIVOT_TOL = 1e-9
DEFAULT_MAX_PIVOTS = 10**6
BLAND_AFTER = 50
# tableau entries above which "auto" hands the problem to HiGHS
DENSE_LIMIT = 400_000


class LPStalled(RuntimeError):
    """The solver hit its pivot cap or could not certify its answer."""


class LPShapeError(ValueError):
    pass


def _as_matrix(A, ncols: int):
    if A is None:
        return np.zeros((0, ncols))
    if sp.issparse(A):
        return A.tocsr()
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return np.zeros((0, ncols))
    return A


@dataclass
class LPProblem:
    c: np.ndarray
    A_ub: object = None
    b_ub: np.ndarray | None = None
    A_eq: object = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    names: list[str] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub = _as_matrix(self.A_ub, n)
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_ub = np.asarray(self.b_ub if self.b_ub is not None else [], dtype=float).ravel()
        self.b_eq = np.asarray(self.b_eq if self.b_eq is not None else [], dtype=float).ravel()
        self.lb = np.full(n, 0.0) if self.lb is None else np.broadcast_to(
            np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.broadcast_to(
            np.asarray(self.ub, dtype=float), (n,)).copy()
        if self.A_ub.shape[1] != n or self.A_eq.shape[1] != n:
            raise LPShapeError(
                f"constraint matrices have {self.A_ub.shape[1]} / {self.A_eq.shape[1]} "
                f"columns but the objective has {n}"
            )
        if self.A_ub.shape[0] != self.b_ub.size or self.A_eq.shape[0] != self.b_eq.size:
            raise LPShapeError("right-hand sides do not match the constraint row counts")
        if not (np.all(np.isfinite(self.b_ub)) and np.all(np.isfinite(self.b_eq))):
            raise LPShapeError("right-hand sides must be finite")
        if np.any(self.lb > self.ub):
            raise LPShapeError("a lower bound exceeds its upper bound")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A_ub.shape[0] + self.A_eq.shape[0]

    def violation(self, v: np.ndarray) -> tuple[float, float, float]:
        """Largest (inequality, equality, bound) violation at ``v``."""
        ineq = float(np.max(self.A_ub @ v - self.b_ub, initial=0.0))
        eq = float(np.max(np.abs(self.A_eq @ v - self.b_eq), initial=0.0))
        bnd = float(max(np.max(self.lb - v, initial=0.0), np.max(v - self.ub, initial=0.0)))
        return ineq, eq, bnd

    def is_feasible(self, v: np.ndarray) -> bool:
        ineq, eq, bnd = self.violation(v)
        scale = 1.0 + float(np.max(np.abs(self.b_ub), initial=0.0))
        return ineq <= FEAS_TOL * scale and eq <= FEAS_TOL and bnd <= BOUND_TOL


@dataclass
class LPSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    objective: float = float("nan")
    pivots: int = 0
    method: str = ""
    # objective sensitivities to b_eq / b_ub (HiGHS only)
    eq_marginals: np.ndarray | None = field(default=None, repr=False)
    ub_marginals: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# --- dense simplex --------------------------------------------------------


class _Tableau:
    """Dense tableau for ``min c@x, A@x (<=|>=) b, x >= 0`` with b >= 0 rows."""

    def __init__(self, A: np.ndarray, b: np.ndarray, max_pivots: int):
        m, n = A.shape
        negative = b < 0
        A = np.where(negative[:, None], -A, A)
        b = np.abs(b)
        n_art = int(negative.sum())
        # columns: structural | slack/surplus | artificial | rhs
        self.n, self.m, self.n_art = n, m, n_art
        T = np.zeros((m + 1, n + m + n_art + 1))
        T[:m, :n] = A
        T[np.arange(m), n + np.arange(m)] = np.where(negative, -1.0, 1.0)
        art_rows = np.flatnonzero(negative)
        T[art_rows, n + m + np.arange(n_art)] = 1.0
        T[:m, -1] = b
        self.T = T
        self.basis = n + np.arange(m)
        self.basis[art_rows] = n + m + np.arange(n_art)
        self.pivots = 0
        self.max_pivots = max_pivots

    def _price(self, cost_row: np.ndarray, allowed: int, bland: bool) -> int:
        reduced = cost_row[:allowed]
        if bland:
            cand = np.flatnonzero(reduced < -PIVOT_TOL)
            return int(cand[0]) if cand.size else -1
        j = int(np.argmin(reduced))
        return j if reduced[j] < -PIVOT_TOL else -1

    def _ratio(self, col: int, bland: bool) -> int:
        a = self.T[: self.m, col]
        pos = a > PIVOT_TOL
        if not pos.any():
            return -1
        ratios = np.full(self.m, np.inf)
        ratios[pos] = self.T[: self.m, -1][pos] / a[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * (1.0 + abs(best)))
        if bland or ties.size == 1:
            # smallest basic variable index among the tied rows
            return int(ties[np.argmin(self.basis[ties])])
        return int(ties[np.argmax(a[ties])])

    def _pivot(self, row: int, col: int) -> None:
        T = self.T
        T[row] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])
        T[:, col] = 0.0
        T[row, col] = 1.0
        self.basis[row] = col
        self.pivots += 1
        if self.pivots > self.max_pivots:
            raise LPStalled(f"simplex exceeded {self.max_pivots} pivots")

    def run(self, allowed: int) -> str:
        """Pivot to optimality on the objective stored in the last row."""
        degenerate = 0
        while True:
            bland = degenerate >= BLAND_AFTER
            col = self._price(self.T[-1], allowed, bland)
            if col < 0:
                return "optimal"
            row = self._ratio(col, bland)
            if row < 0:
                return "unbounded"
            step = self.T[row, -1]
            self._pivot(row, col)
            degenerate = degenerate + 1 if step <= PIVOT_TOL else 0

    def set_objective(self, c_full: np.ndarray) -> None:
        # express the objective in terms of the nonbasic variables
        row = np.zeros(self.T.shape[1])
        row[: c_full.size] = c_full
        cb = row[self.basis].copy()
        row -= cb @ self.T[: self.m]
        self.T[-1] = row


def _to_standard(problem: LPProblem):
    """Rewrite bounds as shifts, splits, and rows; equalities as two rows."""
    n = problem.n_vars
    A_ub = problem.A_ub.toarray() if sp.issparse(problem.A_ub) else problem.A_ub
    A_eq = problem.A_eq.toarray() if sp.issparse(problem.A_eq) else problem.A_eq
    A = np.vstack([A_ub, A_eq, -A_eq])
    b = np.concatenate([problem.b_ub, problem.b_eq, -problem.b_eq])
    lb, ub = problem.lb, problem.ub

    # v = offset + M @ w with w >= 0
    cols, offset = [], np.zeros(n)
    extra_rows = []
    for i in range(n):
        if np.isfinite(lb[i]):
            offset[i] = lb[i]
            cols.append((i, 1.0))
            if np.isfinite(ub[i]):
                extra_rows.append((len(cols) - 1, ub[i] - lb[i]))
        elif np.isfinite(ub[i]):
            offset[i] = ub[i]
            cols.append((i, -1.0))
        else:
            cols.append((i, 1.0))
            cols.append((i, -1.0))
    M = np.zeros((n, len(cols)))
    for k, (i, s) in enumerate(cols):
        M[i, k] = s
    A_std = A @ M
    b_std = b - A @ offset
    if extra_rows:
        B = np.zeros((len(extra_rows), len(cols)))
        for r, (k, cap) in enumerate(extra_rows):
            B[r, k] = 1.0
        A_std = np.vstack([A_std, B])
        b_std = np.concatenate([b_std, [cap for _, cap in extra_rows]])
    return A_std, b_std, problem.c @ M, problem.c @ offset, M, offset


def _simplex(problem: LPProblem, max_pivots: int) -> LPSolution:
    A, b, c, c0, M, offset = _to_standard(problem)
    m, n = A.shape
    if m == 0:
        if np.any(c < -PIVOT_TOL):
            return LPSolution("unbounded", method="simplex")
        x = offset + M @ np.zeros(n)
        return LPSolution("optimal", x, float(problem.c @ x), 0, "simplex")
    tab = _Tableau(A, b, max_pivots)
    n_slack = n + m
    if tab.n_art:
        phase1 = np.zeros(tab.T.shape[1] - 1)
        phase1[n_slack:] = 1.0
        tab.set_objective(phase1)
        tab.run(allowed=tab.T.shape[1] - 1)
        scale = 1.0 + float(np.max(np.abs(b)))
        if -tab.T[-1, -1] > FEAS_TOL * scale:
            return LPSolution("infeasible", pivots=tab.pivots, method="simplex")
        # drive remaining artificials out of the basis
        for row in range(m):
            if tab.basis[row] >= n_slack:
                nz = np.flatnonzero(np.abs(tab.T[row, :n_slack]) > PIVOT_TOL)
                if nz.size:
                    tab._pivot(row, int(nz[0]))
        # columns of artificials stay but are never priced again
    cost = np.zeros(tab.T.shape[1] - 1)
    cost[:n] = c
    tab.set_objective(cost)
    status = tab.run(allowed=n_slack)
    if status == "unbounded":
        return LPSolution("unbounded", pivots=tab.pivots, method="simplex")
    w = np.zeros(tab.T.shape[1] - 1)
    w[tab.basis] = tab.T[:m, -1]
    x = offset + M @ np.clip(w[:n], 0.0, None)
    return LPSolution("optimal", x, float(problem.c @ x), tab.pivots, "simplex")


# --- HiGHS backend --------------------------------------------------------


def _highs(problem: LPProblem, max_pivots: int) -> LPSolution:
    from scipy.optimize import linprog

    res = linprog(
        problem.c,
        A_ub=problem.A_ub if problem.A_ub.shape[0] else None,
        b_ub=problem.b_ub if problem.b_ub.size else None,
        A_eq=problem.A_eq if problem.A_eq.shape[0] else None,
        b_eq=problem.b_eq if problem.b_eq.size else None,
        bounds=np.column_stack([
            np.where(np.isfinite(problem.lb), problem.lb, -np.inf),
            np.where(np.isfinite(problem.ub), problem.ub, np.inf),
        ]),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9},
    )
    nit = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        x = np.clip(res.x, problem.lb, problem.ub)
        eq = np.asarray(res.eqlin.marginals) if problem.A_eq.shape[0] else None
        ub = np.asarray(res.ineqlin.marginals) if problem.A_ub.shape[0] else None
        return LPSolution("optimal", x, float(problem.c @ x), nit, "highs", eq, ub)
    if res.status == 2:
        return LPSolution("infeasible", pivots=nit, method="highs")
    if res.status == 3:
        return LPSolution("unbounded", pivots=nit, method="highs")
    raise LPStalled(f"HiGHS stopped without an answer: {res.message}")


def solve(problem: LPProblem, method: str = "auto", max_pivots: int = DEFAULT_MAX_PIVOTS) -> LPSolution:
    if method == "auto":
        sparse = sp.issparse(problem.A_ub) or sp.issparse(problem.A_eq)
        size = (problem.n_rows + problem.A_eq.shape[0]) * problem.n_vars
        method = "highs" if sparse or size > DENSE_LIMIT else "simplex"
    if method == "simplex":
        sol = _simplex(problem, max_pivots)
    elif method == "highs":
        sol = _highs(problem, max_pivots)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    if sol.optimal and not problem.is_feasible(sol.x):
        raise LPStalled(
            f"{sol.method} returned a point violating the constraints by "
            f"{problem.violation(sol.x)}"
        )
    return sol


def feasibility(problem: LPProblem, **kwargs) -> LPSolution:
    """Find any feasible point: :func:`solve` with the objective zeroed."""
    zeroed = LPProblem(
        np.zeros(problem.n_vars),
        problem.A_ub, problem.b_ub, problem.A_eq, problem.b_eq, problem.lb, problem.ub,
        problem.names,
    )
    return solve(zeroed, **kwargs)


# --- debug dump -----------------------------------------------------------


def _fmt_row(coefs, names) -> str:
    terms = []
    for j in np.flatnonzero(coefs):
        a = float(coefs[j])
        terms.append(f"{'-' if a < 0 else '+'} {abs(a)!r} {names[j]}")
    return " ".join(terms) if terms else "0 " + names[0]


def to_lp_text(problem: LPProblem) -> str:
    """Render the problem in CPLEX LP format for cross-checking elsewhere."""
    names = problem.names or [f"v{j}" for j in range(problem.n_vars)]
    A_ub = problem.A_ub.toarray() if sp.issparse(problem.A_ub) else problem.A_ub
    A_eq = problem.A_eq.toarray() if sp.issparse(problem.A_eq) else problem.A_eq
    lines = ["Minimize", " obj: " + _fmt_row(problem.c, names), "Subject To"]
    for i, (row, rhs) in enumerate(zip(A_ub, problem.b_ub)):
        lines.append(f" u{i}: {_fmt_row(row, names)} <= {float(rhs)!r}")
    for i, (row, rhs) in enumerate(zip(A_eq, problem.b_eq)):
        lines.append(f" e{i}: {_fmt_row(row, names)} = {float(rhs)!r}")
    lines.append("Bounds")
    for j, name in enumerate(names):
        lo, hi = problem.lb[j], problem.ub[j]
        lo_s = "-inf" if not np.isfinite(lo) else repr(float(lo))
        hi_s = "+inf" if not np.isfinite(hi) else repr(float(hi))
        lines.append(f" {lo_s} <= {name} <= {hi_s}")
    lines.append("End")
    return "\n".join(lines) + "\n"
