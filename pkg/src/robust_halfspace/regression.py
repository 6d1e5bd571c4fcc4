"""L1 polynomial regression under noise-sensitivity and isolation constraints.

Each round solves

    minimize   sum_j |p(x_j) - y_j|
    subject to mean_j phi_j(p)             <= ns_cap
               mean_j 10 max(0, phi_j(p) - 0.6) <= psi_cap

where ``phi_j(p) = mean_l |p(x_j) - p(x_j + eta z_l)| / 2`` over a fresh
perturbation set.  The explicit linear program carries one slack per
(sample, perturbation) pair.  :func:`solve_regression` gets the same optimum
from a much smaller program by adding sign-pattern cuts on demand:
``sum_l |a_l . v| = max over signs of sum_l s_l a_l . v``, so the cut family is
finite and the loop stops once no constraint is violated.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import rng as rng_mod
from .lpsolve import LPProblem, LPStalled, solve
from .poly import Polynomial, make_basis, shift_adjoint
from .sensitivity import PSI_KNEE, PSI_SLOPE, PerturbationSet, perturbed_values

log = logging.getLogger(__name__)

EXPLICIT_LIMIT = 20_000  # n_samples * m above which "auto" switches to cuts
CUT_TOL = 1e-8
MAX_CUT_ROUNDS = 500


@dataclass(frozen=True)
class RegressionConfig:
    degree: int = 3
    r: float = 0.05
    eps: float = 0.1
    delta: float = 0.1
    ns_cap: float | None = None  # default 100 r + eps
    psi_cap: float | None = None  # default eps
    n_samples: int = 4000
    m: int = 256
    rounds: int | None = None  # default ceil(log2(1/delta))
    seed: int = 0
    solver: str = "auto"  # "auto" | "explicit" | "cuts"

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.ns_cap is None:
            object.__setattr__(self, "ns_cap", 100 * self.r + self.eps)
        if self.psi_cap is None:
            object.__setattr__(self, "psi_cap", self.eps)
        if self.rounds is None:
            object.__setattr__(self, "rounds", max(1, math.ceil(math.log2(1 / self.delta))))
        if self.ns_cap <= 0 or self.psi_cap <= 0:
            raise ValueError("constraint caps must be positive")
        if self.rounds < 1:
            raise ValueError("need at least one boosting round")
        if self.solver not in ("auto", "explicit", "cuts"):
            raise ValueError(f"unknown regression solver {self.solver!r}")

    @property
    def eta(self) -> float:
        return 10 * self.r


@dataclass
class RoundResult:
    round: int
    poly: Polynomial
    objective: float
    halved_l1: float
    ns_value: float
    psi_value: float
    pivots: int
    cuts: int
    seconds: float
    perturbation_seed: int
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)


# --- the explicit program ---------------------------------------------------


def build_regression_lp(X, y, T: PerturbationSet, cfg: RegressionConfig, basis=None) -> LPProblem:
    """The full LP: variables (v, s_j, u_jl, h_j) in that order.

    ``s_j`` bounds the residual, ``u_jl`` bounds half the change of p under
    perturbation ``l`` at sample ``j``, and ``h_j`` is the hinge slack for the
    isolation relaxation.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 1:
        raise ValueError("need at least one sample")
    basis = basis or make_basis(X.shape[1], cfg.degree)
    nb, m = len(basis), T.m
    FX = basis.features(X)
    shift = T.eta * T.vectors
    FP = basis.features((X[:, None, :] + shift[None, :, :]).reshape(-1, X.shape[1]))
    D = 0.5 * (np.repeat(FX, m, axis=0) - FP)  # row j*m + l

    n_vars = nb + n + n * m + n
    iv = slice(0, nb)
    i_s = nb
    i_u = nb + n
    i_h = nb + n + n * m
    eye_n = sp.identity(n, format="csr")
    eye_u = sp.identity(n * m, format="csr")
    blocks = [
        # +-(Phi v - y) <= s
        sp.hstack([sp.csr_matrix(FX), -eye_n, sp.csr_matrix((n, n * m + n))]),
        sp.hstack([sp.csr_matrix(-FX), -eye_n, sp.csr_matrix((n, n * m + n))]),
        # +-D v <= u
        sp.hstack([sp.csr_matrix(D), sp.csr_matrix((n * m, n)), -eye_u, sp.csr_matrix((n * m, n))]),
        sp.hstack([sp.csr_matrix(-D), sp.csr_matrix((n * m, n)), -eye_u, sp.csr_matrix((n * m, n))]),
    ]
    rhs = [y, -y, np.zeros(n * m), np.zeros(n * m)]
    # mean_j mean_l u_jl <= ns_cap
    row = np.zeros(n_vars)
    row[i_u:i_h] = 1.0 / (n * m)
    blocks.append(sp.csr_matrix(row))
    rhs.append([cfg.ns_cap])
    # 10 (mean_l u_jl - 0.6) <= h_j
    avg = sp.kron(sp.identity(n), np.full((1, m), PSI_SLOPE / m), format="csr")
    blocks.append(sp.hstack([sp.csr_matrix((n, nb + n)), avg, -eye_n]))
    rhs.append(np.full(n, PSI_SLOPE * PSI_KNEE))
    # mean_j h_j <= psi_cap
    row = np.zeros(n_vars)
    row[i_h:] = 1.0 / n
    blocks.append(sp.csr_matrix(row))
    rhs.append([cfg.psi_cap])

    c = np.zeros(n_vars)
    c[i_s:i_u] = 1.0
    lb = np.zeros(n_vars)
    lb[iv] = -np.inf
    names = (
        [f"v{j}" for j in range(nb)]
        + [f"s{j}" for j in range(n)]
        + [f"u{j}_{l}" for j in range(n) for l in range(m)]
        + [f"h{j}" for j in range(n)]
    )
    A = sp.vstack(blocks, format="csr")
    if A.shape[0] * n_vars <= 200_000:
        A = A.toarray()
    return LPProblem(c, A, np.concatenate([np.ravel(r) for r in rhs]), lb=lb, names=names)


# --- constraint values recomputed from scratch ------------------------------


def constraint_values(p: Polynomial, X, T: PerturbationSet) -> tuple[float, float, np.ndarray]:
    """(mean phi, mean psi, per-sample phi) for the real-valued ``p``."""
    base, vals = perturbed_values(p, T, X)
    phi = np.mean(np.abs(vals - base[:, None]), axis=1) / 2
    psi = PSI_SLOPE * np.maximum(0.0, phi - PSI_KNEE)
    return float(np.mean(phi)), float(np.mean(psi)), phi


# --- cutting-plane solver ---------------------------------------------------


class _CutSolver:
    """Cutting planes on the regression program, solved through its dual.

    With cuts ``g_k . v <= ns_cap`` (noise sensitivity) and
    ``g_k . v - h_j <= 6`` (isolation hinge of sample j), the dual reads

        maximize   y . lam - sum_k q_k mu_k - psi_cap * nu
        subject to Phi^T lam = sum_k g_k mu_k
                   sum_{k on sample j} mu_k <= nu / n      for each cut sample j
                   -1 <= lam <= 1,  mu, nu >= 0

    which has one row per monomial plus one per cut sample, instead of two
    rows per sample.  The coefficient vector is read off the equality duals.
    """

    def __init__(self, X, y, T: PerturbationSet, cfg: RegressionConfig, basis):
        self.X, self.y, self.T, self.cfg, self.basis = X, y.astype(float), T, cfg, basis
        self.n, self.nb = X.shape[0], len(basis)
        self.FX = basis.features(X)
        self.FZ = T.features(basis)
        self.cut_rows: list[np.ndarray] = []
        self.cut_rhs: list[float] = []
        self.cut_sample: list[int] = []  # -1 for noise-sensitivity cuts
        self.pivots = 0

    @property
    def n_cuts(self) -> int:
        return len(self.cut_rows)

    def _dual_problem(self) -> LPProblem:
        n, K = self.n, self.n_cuts
        G = np.vstack(self.cut_rows) if K else np.zeros((0, self.nb))
        owners = np.asarray(self.cut_sample, dtype=int)
        samples = np.unique(owners[owners >= 0])
        # columns: lam (n) | mu (K) | nu
        A_eq = np.hstack([self.FX.T, -G.T, np.zeros((self.nb, 1))])
        A_ub = np.zeros((samples.size, n + K + 1))
        for r, j in enumerate(samples):
            A_ub[r, n + np.flatnonzero(owners == j)] = 1.0
        A_ub[:, -1] = -1.0 / n
        c = np.concatenate([-self.y, np.asarray(self.cut_rhs, dtype=float), [self.cfg.psi_cap]])
        lb = np.concatenate([-np.ones(n), np.zeros(K + 1)])
        ub = np.concatenate([np.ones(n), np.full(K + 1, np.inf)])
        return LPProblem(c, sp.csr_matrix(A_ub), np.zeros(samples.size),
                         sp.csr_matrix(A_eq), np.zeros(self.nb), lb, ub)

    def _hinges(self, v: np.ndarray) -> np.ndarray:
        h = np.zeros(self.n)
        for row, rhs, j in zip(self.cut_rows, self.cut_rhs, self.cut_sample):
            if j >= 0:
                h[j] = max(h[j], row @ v - rhs)
        return h

    def _separate(self, v: np.ndarray, h: np.ndarray) -> int:
        """Append violated cuts at (v, h); returns how many were added."""
        p = Polynomial(self.basis, v)
        base, vals = perturbed_values(p, self.T, self.X)
        diff = base[:, None] - vals  # 2 * (D_jl . v)
        phi = np.mean(np.abs(diff), axis=1) / 2
        sigma = np.where(diff >= 0, 1.0, -1.0)
        m, n = self.T.m, self.n
        added = 0
        tol = CUT_TOL * (1.0 + self.cfg.ns_cap)
        if np.mean(phi) > self.cfg.ns_cap + tol:
            # g = mean_jl sigma_jl D_jl
            total = sigma.sum(axis=1) @ self.FX - shift_adjoint(
                self.basis, self.FX, sigma @ self.FZ, self.T.eta
            )
            self.cut_rows.append(total / (2 * n * m))
            self.cut_rhs.append(self.cfg.ns_cap)
            self.cut_sample.append(-1)
            added += 1
        need = PSI_SLOPE * (phi - PSI_KNEE)
        bad = np.flatnonzero(need > h + CUT_TOL * (1.0 + np.abs(h)))
        if bad.size:
            sg = sigma[bad]
            G = sg.sum(axis=1)[:, None] * self.FX[bad] - shift_adjoint(
                self.basis, self.FX[bad], sg @ self.FZ, self.T.eta, per_row=True
            )
            self.cut_rows.extend((PSI_SLOPE / (2 * m)) * G)
            self.cut_rhs.extend([PSI_SLOPE * PSI_KNEE] * bad.size)
            self.cut_sample.extend(bad.tolist())
            added += bad.size
        return added

    def run(self) -> tuple[np.ndarray, float]:
        for _ in range(MAX_CUT_ROUNDS):
            sol = solve(self._dual_problem(), method="highs")
            self.pivots += sol.pivots
            if not sol.optimal:
                raise LPStalled(f"regression dual LP came back {sol.status}")
            v = -sol.eq_marginals
            if self._separate(v, self._hinges(v)) == 0:
                return v, float(np.sum(np.abs(self.FX @ v - self.y)))
        raise LPStalled(f"cutting planes did not converge in {MAX_CUT_ROUNDS} rounds")


def solve_regression(X, y, T: PerturbationSet, cfg: RegressionConfig):
    """Solve one round's program; returns (polynomial, objective, pivots, cuts)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    if X.shape[0] < 1:
        raise ValueError("need at least one sample")
    basis = make_basis(X.shape[1], cfg.degree)
    mode = cfg.solver
    if mode == "auto":
        mode = "explicit" if X.shape[0] * T.m <= EXPLICIT_LIMIT else "cuts"
    if mode == "explicit":
        lp = build_regression_lp(X, y, T, cfg, basis)
        sol = solve(lp, method="highs")
        if not sol.optimal:
            raise LPStalled(f"regression LP came back {sol.status}")
        return Polynomial(basis, sol.x[: len(basis)]), sol.objective, sol.pivots, 0
    cs = _CutSolver(X, y, T, cfg, basis)
    v, obj = cs.run()
    return Polynomial(basis, v), obj, cs.pivots, cs.n_cuts


# --- boosting over independent rounds ---------------------------------------


def regression_rounds(source, cfg: RegressionConfig) -> list[RoundResult]:
    results = []
    for i in range(cfg.rounds):
        t0 = time.perf_counter()
        X, y = source.draw(cfg.n_samples)
        seed = rng_mod.derive_seed(cfg.seed, "regression", i)
        T = PerturbationSet(seed, cfg.m, X.shape[1], cfg.eta)
        p, obj, pivots, cuts = solve_regression(X, y, T, cfg)
        ns, psi, _ = constraint_values(p, X, T)
        halved = float(np.mean(np.abs(p(X) - y)) / 2)
        res = RoundResult(i, p, obj, halved, ns, psi, pivots, cuts,
                          time.perf_counter() - t0, seed, X, y)
        log.info(
            "regression round %d: objective %.4f, halved L1 %.4f, ns %.4f, psi %.4f, %d cuts, %.1fs",
            i, obj, halved, ns, psi, cuts, res.seconds,
        )
        results.append(res)
    return results


def select_round(results: list[RoundResult]) -> RoundResult:
    # min() keeps the first of equal keys, i.e. the smallest round index
    return min(results, key=lambda r: r.halved_l1)


def learn_real_valued(source, cfg: RegressionConfig, diagnostics: list | None = None) -> Polynomial:
    results = regression_rounds(source, cfg)
    if diagnostics is not None:
        diagnostics.extend(results)
    return select_round(results).poly


DIAGNOSTIC_COLUMNS = ["round", "objective", "constraint1", "constraint2", "pivots", "cuts", "seconds"]


def write_diagnostics(path, results: list[RoundResult]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTIC_COLUMNS)
        for r in results:
            w.writerow([r.round, f"{r.objective:.10g}", f"{r.ns_value:.10g}", f"{r.psi_value:.10g}",
                        r.pivots, r.cuts, f"{r.seconds:.3f}"])


__all__ = [
    "RegressionConfig",
    "RoundResult",
    "build_regression_lp",
    "constraint_values",
    "learn_real_valued",
    "regression_rounds",
    "select_round",
    "solve_regression",
    "write_diagnostics",
]
