"""Choosing four rounding thresholds and mixing weights for a real polynomial.

Random thresholds ``t`` in [-1, 1] each give a point ``q_t = (err, NS, iso)``
in [0, 1]^3.  The equal mixture of a batch satisfies the target constraints
with good probability; by Caratheodory's theorem some mixture of at most four
batch points then does too, and that mixture is what gets returned.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .corrector import FLIP_THRESHOLD
from .errors import TrainingFailure
from .lpsolve import LPProblem, feasibility, solve
from .poly import Polynomial, sign
from .sensitivity import PerturbationSet, ThresholdSweep

log = logging.getLogger(__name__)

TOP_PER_CRITERION = 12
FULL_ENUMERATION_MAX = 40
RANDOM_TUPLES = 2000
WEIGHT_TOL = 1e-9


class NoMixtureFound(TrainingFailure):
    """No feasible four-threshold mixture in any attempted batch."""

    def __init__(self, message: str):
        super().__init__("rounding", message)


@dataclass(frozen=True)
class ThresholdStats:
    t: float
    err: float
    ns: float
    iso: float

    def __post_init__(self):
        for name in ("err", "ns", "iso"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def q(self) -> np.ndarray:
        return np.array([self.err, self.ns, self.iso])


@dataclass(frozen=True)
class Mixture:
    thresholds: tuple[float, float, float, float]
    weights: tuple[float, float, float, float]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.thresholds) != 4 or w.shape != (4,):
            raise ValueError("a mixture has exactly four thresholds and weights")
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights must be a probability vector, got {self.weights}")
        if any(not -1.0 <= t <= 1.0 for t in self.thresholds):
            raise ValueError("thresholds must lie in [-1, 1]")
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        object.__setattr__(self, "weights", tuple(float(v) for v in w))


@dataclass(frozen=True)
class RoundingConfig:
    r: float = 0.05
    eps: float = 0.1
    delta: float = 0.1
    slack: float = 4.0  # the constant C in the targets
    n_thresholds: int | None = None  # default min(ceil(100 / eps^2), 400)
    n_eval: int = 2000
    attempts: int | None = None  # default ceil(log2(1/delta))
    seed: int = 0

    def __post_init__(self):
        if self.n_thresholds is None:
            object.__setattr__(self, "n_thresholds", min(math.ceil(100 / self.eps**2), 400))
        if self.attempts is None:
            object.__setattr__(self, "attempts", max(1, math.ceil(math.log2(1 / self.delta))))

    def bounds(self, opt_hat: float) -> np.ndarray:
        """Upper bounds on the mixed (err, NS, iso)."""
        c = self.slack * self.eps
        return np.array([opt_hat + c, 200 * self.r + c, c])


# --- statistics ----------------------------------------------------------


def threshold_stats_many(p: Polynomial, ts, X, y, T: PerturbationSet) -> list[ThresholdStats]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("need a nonempty evaluation set")
    y = np.asarray(y)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    sweep = ThresholdSweep(p, T, X)
    phi = sweep.phi_matrix(ts)
    out = []
    for k, t in enumerate(ts):
        err = float(np.mean(sign(sweep.base - t) != y))
        out.append(ThresholdStats(
            float(t), err, float(np.mean(phi[:, k])),
            float(np.mean(phi[:, k] >= FLIP_THRESHOLD)),
        ))
    return out


def threshold_stats(p: Polynomial, t: float, X, y, T: PerturbationSet) -> ThresholdStats:
    return threshold_stats_many(p, [t], X, y, T)[0]


# --- four-point mixtures ------------------------------------------------------


def _tuple_lp(Q: np.ndarray, bounds: np.ndarray) -> LPProblem:
    # rows: mixed statistic <= bound; weights sum to one
    return LPProblem(np.zeros(Q.shape[0]), A_ub=Q.T, b_ub=bounds,
                     A_eq=np.ones((1, Q.shape[0])), b_eq=[1.0])


def _clean(w: np.ndarray) -> np.ndarray:
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def _tuple_weights(Q: np.ndarray, idx, bounds: np.ndarray) -> np.ndarray | None:
    sol = feasibility(_tuple_lp(Q[list(idx)], bounds), method="simplex")
    return _clean(sol.x) if sol.optimal else None


def _carathéodory_vertex(Q: np.ndarray, bounds: np.ndarray):
    """Vertex of the mixture polytope over the whole batch; support <= 4."""
    sol = solve(_tuple_lp(Q, bounds), method="simplex")
    if not sol.optimal:
        return None
    support = np.flatnonzero(sol.x > WEIGHT_TOL)
    if support.size > 4:  # degenerate numerics; let later stages try
        return None
    idx = list(support) + [i for i in range(Q.shape[0]) if i not in support][: 4 - support.size]
    return idx


def find_mixture(Q, bounds, rng: np.random.Generator | None = None, full: bool = False):
    """Find indices ``i1..i4`` and weights with ``w @ Q[idx] <= bounds``.

    An infeasible all-points mixture LP settles the question at once.
    Otherwise the search order is: tuples among the 12 best points for each
    criterion; then a vertex of the all-points mixture LP (at most four
    nonzero weights, so this stage succeeds whenever any mixture of the
    batch is feasible); then random tuples; then full enumeration for
    batches of at most 40.
    ``full=True`` runs only the enumeration.  Returns ``None`` when nothing
    is feasible.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    bounds = np.asarray(bounds, dtype=float)
    n = Q.shape[0]
    if n == 0:
        return None
    if n < 4:
        # pad by repeating points; equal points change nothing
        Q = np.vstack([Q, np.repeat(Q[-1:], 4 - n, axis=0)])
    if full:
        return _enumerate(Q, bounds, n)

    if not solve(_tuple_lp(Q, bounds), method="simplex").optimal:
        return None  # no mixture of the batch works, so no 4-tuple does
    tried = set()
    for col in range(Q.shape[1]):
        top = np.argsort(Q[:, col], kind="stable")[:TOP_PER_CRITERION]
        for idx in itertools.combinations(sorted(top.tolist()), 4):
            if idx in tried:
                continue
            tried.add(idx)
            w = _tuple_weights(Q, idx, bounds)
            if w is not None:
                return _fold(idx, w, n)

    idx = _carathéodory_vertex(Q, bounds)
    if idx is not None:
        w = _tuple_weights(Q, idx, bounds)
        if w is not None:
            return _fold(tuple(idx), w, n)

    rng = rng or np.random.default_rng(0)
    for _ in range(RANDOM_TUPLES if Q.shape[0] > 4 else 0):
        idx = tuple(sorted(rng.choice(Q.shape[0], 4, replace=False).tolist()))
        w = _tuple_weights(Q, idx, bounds)
        if w is not None:
            return _fold(idx, w, n)

    if Q.shape[0] <= FULL_ENUMERATION_MAX:
        return _enumerate(Q, bounds, n)
    return None


def _enumerate(Q, bounds, n):
    for idx in itertools.combinations(range(Q.shape[0]), 4):
        w = _tuple_weights(Q, idx, bounds)
        if w is not None:
            return _fold(idx, w, n)
    return None


def _fold(idx, w, n):
    # map padded indices back onto real points
    return tuple(min(i, n - 1) for i in idx), tuple(float(v) for v in w)


# --- the stage driver -------------------------------------------------------


@dataclass
class RoundingResult:
    mixture: Mixture
    stats: list[ThresholdStats]
    chosen: tuple[int, int, int, int]
    opt_hat: float
    bounds: np.ndarray


def compute_rounding_thresholds(p: Polynomial, source, T: PerturbationSet,
                                cfg: RoundingConfig) -> RoundingResult:
    X, y = source.draw(cfg.n_eval)
    sweep = ThresholdSweep(p, T, X)
    stats: list[ThresholdStats] = []
    for attempt in range(cfg.attempts):
        stats = []
        ts = rng_mod.substream(cfg.seed, rng_mod.THRESHOLDS, attempt).uniform(
            -1.0, 1.0, cfg.n_thresholds
        )
        phi = sweep.phi_matrix(ts)
        for k, t in enumerate(ts):
            stats.append(ThresholdStats(
                float(t), float(np.mean(sign(sweep.base - t) != y)),
                float(np.mean(phi[:, k])), float(np.mean(phi[:, k] >= FLIP_THRESHOLD)),
            ))
        Q = np.array([s.q for s in stats])
        opt_hat = float(np.mean(Q[:, 0]))
        bounds = cfg.bounds(opt_hat)
        found = find_mixture(Q, bounds, rng_mod.substream(cfg.seed, "tuples", attempt))
        log.info("rounding attempt %d: %d thresholds, opt_hat %.4f, found=%s",
                 attempt, len(stats), opt_hat, found is not None)
        if found is not None:
            idx, w = found
            mix = Mixture(tuple(stats[i].t for i in idx), w)
            return RoundingResult(mix, stats, idx, opt_hat, bounds)
    raise NoMixtureFound(f"no feasible mixture after {cfg.attempts} threshold batches")


def write_diagnostics(path, result: RoundingResult) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "t", "err", "ns", "iso", "weight"])
        for s in result.stats:
            w.writerow(["threshold", repr(s.t), repr(s.err), repr(s.ns), repr(s.iso), ""])
        q = np.array([result.stats[i].q for i in result.chosen])
        mixed = np.asarray(result.mixture.weights) @ q
        w.writerow(["mixture", "", repr(mixed[0]), repr(mixed[1]), repr(mixed[2]),
                    " ".join(repr(v) for v in result.mixture.weights)])
