"""Turning a real polynomial plus a threshold mixture into a classifier.

The four corrected PTFs ``h_i = LCA(sign(p - t_i))`` are stitched together
along a random direction ``u``: the line is cut into intervals ``J_i`` whose
standard-Gaussian masses are the mixture weights, and a point is labelled by
the ``h_i`` whose interval contains ``<x, u>``.  Intervals are right-closed,
so a point exactly on ``c_j`` belongs to the lower interval.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import rng as rng_mod
from .corrector import FLIP_THRESHOLD, ROBUST_THRESHOLD
from .dist import gaussian_cdf, gaussian_quantile
from .errors import HypothesisValidationError, TrainingFailure
from .poly import DimensionError, Polynomial, basis_size, make_basis, sign
from .rounding import Mixture, RoundingConfig, compute_rounding_thresholds
from .sensitivity import DEFAULT_M, PerturbationSet, ThresholdSweep, ptf_phi_hat

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
CUM_CLAMP = 1e-12
GS_DROP_TOL = 1e-10
MASS_TOL = 1e-8
UNIT_TOL = 1e-9


class ComplementEmpty(ValueError):
    """The mean vectors span the whole space."""


class PartitionFailed(TrainingFailure):
    def __init__(self, message: str):
        super().__init__("partition", message)


# --- geometry ----------------------------------------------------------------


def boundaries_from_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (4,) or np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"need four nonnegative weights summing to 1, got {weights}")
    cum = np.clip(np.cumsum(np.clip(w, 0.0, None))[:3], CUM_CLAMP, 1.0 - CUM_CLAMP)
    return np.asarray(gaussian_quantile(cum), dtype=float)


def interval_index(proj, boundaries) -> np.ndarray:
    """0-based index of the right-closed interval holding each projection."""
    return np.searchsorted(np.asarray(boundaries, dtype=float), np.asarray(proj), side="left")


def interval_masses(boundaries) -> np.ndarray:
    cdf = np.concatenate([[0.0], gaussian_cdf(np.asarray(boundaries, dtype=float)), [1.0]])
    return np.diff(cdf)


def _orthonormalize(vectors, d: int) -> np.ndarray:
    """Modified Gram-Schmidt; vectors whose residual is below 1e-10 are dropped."""
    basis: list[np.ndarray] = []
    for v in vectors:
        v = np.array(v, dtype=float).reshape(d)
        for q in basis:
            v -= (q @ v) * q
        nrm = np.linalg.norm(v)
        if nrm > GS_DROP_TOL:
            basis.append(v / nrm)
    return np.array(basis).reshape(len(basis), d)


def orthonormal_complement_direction(means, rng: np.random.Generator, d: int | None = None) -> np.ndarray:
    """Uniform random unit vector orthogonal to every vector in ``means``."""
    means = [np.asarray(m, dtype=float) for m in means]
    if d is None:
        if not means:
            raise ValueError("dimension is needed when no mean vectors are given")
        d = means[0].shape[0]
    Q = _orthonormalize(means, d)
    if Q.shape[0] >= d:
        raise ComplementEmpty(f"{len(means)} mean vectors span all of R^{d}")
    g = rng.standard_normal(d)
    for _ in range(2):  # second pass mops up rounding error
        g -= Q.T @ (Q @ g)
    return g / np.linalg.norm(g)


def _direction_avoiding(means, rng, d):
    # Largest subset (by norm) whose complement is nonempty.  Only needed
    # when d is at most the number of means.
    order = sorted(range(len(means)), key=lambda i: -float(np.linalg.norm(means[i])))
    keep = list(order)
    while True:
        try:
            return orthonormal_complement_direction([means[i] for i in keep], rng, d), keep
        except ComplementEmpty:
            dropped = keep.pop()
            log.warning("mean vectors span R^%d; dropping mean %d (norm %.3g)",
                        d, dropped, float(np.linalg.norm(means[dropped])))


# --- the packaged hypothesis ----------------------------------------------------


@dataclass(frozen=True)
class HypothesisData:
    d: int
    k: int
    coefficients: tuple
    thresholds: tuple
    weights: tuple
    direction: tuple
    boundaries: tuple
    r: float
    phi_seed: int
    phi_m: int
    version: int = FORMAT_VERSION

    def __post_init__(self):
        for name in ("coefficients", "thresholds", "weights", "direction", "boundaries"):
            try:
                vals = tuple(float(v) for v in getattr(self, name))
            except (TypeError, ValueError) as exc:
                raise HypothesisValidationError(name, f"not a list of numbers ({exc})") from None
            object.__setattr__(self, name, vals)
        self.validate()

    def validate(self) -> None:
        def bad(name, msg):
            raise HypothesisValidationError(name, msg)

        if self.version != FORMAT_VERSION:
            bad("version", f"unsupported format version {self.version}")
        if int(self.d) != self.d or self.d < 1:
            bad("d", f"must be a positive integer, got {self.d}")
        if int(self.k) != self.k or self.k < 1:
            bad("k", f"must be a positive integer, got {self.k}")
        if len(self.coefficients) != basis_size(self.d, self.k):
            bad("coefficients", f"need {basis_size(self.d, self.k)} values, got {len(self.coefficients)}")
        if not np.all(np.isfinite(self.coefficients)):
            bad("coefficients", "must be finite")
        if len(self.thresholds) != 4 or any(not -1.0 <= t <= 1.0 for t in self.thresholds):
            bad("thresholds", "need four values in [-1, 1]")
        w = np.array(self.weights)
        if w.shape != (4,) or np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
            bad("weights", "need a probability vector of length 4")
        u = np.array(self.direction)
        if u.shape != (self.d,) or not np.all(np.isfinite(u)):
            bad("direction", f"need {self.d} finite values")
        if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
            bad("direction", f"norm {np.linalg.norm(u):.12g} is not 1")
        c = np.array(self.boundaries)
        if c.shape != (3,) or not np.all(np.isfinite(c)) or np.any(np.diff(c) < 0):
            bad("boundaries", "need three finite nondecreasing values")
        if np.max(np.abs(interval_masses(c) - w)) > MASS_TOL:
            bad("boundaries", "interval masses do not match the weights")
        if not 0.0 < self.r < 1.0:
            bad("r", f"radius must lie in (0, 1), got {self.r}")
        if int(self.phi_seed) != self.phi_seed or not 0 <= self.phi_seed < 2**64:
            bad("phi_seed", "must be an unsigned 64-bit integer")
        if int(self.phi_m) != self.phi_m or self.phi_m < 1:
            bad("phi_m", "must be a positive integer")

    # derived objects, built lazily; eta = 10 r is implied, never stored
    @cached_property
    def poly(self) -> Polynomial:
        return Polynomial(make_basis(self.d, self.k), self.coefficients)

    @cached_property
    def perturbations(self) -> PerturbationSet:
        return PerturbationSet.for_radius(self.phi_seed, self.phi_m, self.d, self.r)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "d": self.d,
            "k": self.k,
            "coefficients": list(self.coefficients),
            "thresholds": list(self.thresholds),
            "weights": list(self.weights),
            "direction": list(self.direction),
            "boundaries": list(self.boundaries),
            "r": self.r,
            "phi_seed": self.phi_seed,
            "phi_m": self.phi_m,
        }

    def to_json(self) -> str:
        """Canonical serialization: fixed key order, shortest round-trip floats."""
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "HypothesisData":
        required = ["d", "k", "coefficients", "thresholds", "weights", "direction",
                    "boundaries", "r", "phi_seed", "phi_m"]
        for key in required:
            if key not in obj:
                raise HypothesisValidationError(key, "missing")
        return cls(
            d=obj["d"], k=obj["k"], coefficients=obj["coefficients"],
            thresholds=obj["thresholds"], weights=obj["weights"],
            direction=obj["direction"], boundaries=obj["boundaries"],
            r=float(obj["r"]), phi_seed=obj["phi_seed"], phi_m=obj["phi_m"],
            version=obj.get("version", FORMAT_VERSION),
        )

    @classmethod
    def from_json(cls, text: str) -> "HypothesisData":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "HypothesisData":
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass
class Evaluation:
    labels: np.ndarray  # corrected labels in {-1, +1}
    interval: np.ndarray  # 0-based index i of J_i
    projection: np.ndarray
    phi: np.ndarray  # sensitivity of the active sign(p - t_i)
    values: np.ndarray  # p(x)


def evaluate_detail(data: HypothesisData, X) -> Evaluation:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != data.d:
        raise DimensionError(f"hypothesis expects dimension {data.d}, got {X.shape[1]}")
    proj = X @ np.asarray(data.direction)
    idx = interval_index(proj, data.boundaries)
    t = np.asarray(data.thresholds)[idx]
    phi, base = ptf_phi_hat(data.poly, t, data.perturbations, X)
    raw = sign(base - t)
    labels = np.where(phi > FLIP_THRESHOLD, -raw, raw).astype(np.int8)
    return Evaluation(labels, idx, proj, phi, base)


def predict(data: HypothesisData, X) -> np.ndarray:
    return evaluate_detail(data, X).labels


def hypothesis_eval(data: HypothesisData, x) -> int:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError("hypothesis_eval takes a single point")
    return int(predict(data, x[None, :])[0])


# --- training-time estimates -----------------------------------------------------


def _indicators(p: Polynomial, mixture: Mixture, T: PerturbationSet, X, y):
    """Boolean (n, 4) matrices Ind[y != h_i(x)] and Ind[phi_i(x) <= 0.1]."""
    sweep = ThresholdSweep(p, T, X)
    ts = np.asarray(mixture.thresholds)
    phi = sweep.phi_matrix(ts)
    raw = np.where(sweep.base[:, None] >= ts[None, :], 1, -1)
    h = np.where(phi > FLIP_THRESHOLD, -raw, raw)
    return h != np.asarray(y)[:, None], phi <= ROBUST_THRESHOLD


def estimate_indicator_means(p: Polynomial, mixture: Mixture, X, y, T: PerturbationSet):
    """Mean of ``x * Ind`` for the misclassification and robustness indicators.

    Returns two (4, d) arrays.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("need a nonempty sample")
    mis, rob = _indicators(p, mixture, T, X, y)
    n = X.shape[0]
    return mis.T.astype(float) @ X / n, rob.T.astype(float) @ X / n


def indicator_mean(X, indicator) -> np.ndarray:
    """Mean of ``x * indicator(x)`` over the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("need a nonempty sample")
    return np.asarray(indicator, dtype=float) @ X / X.shape[0]


def partition_discrepancy(direction, boundaries, weights, indicators, X) -> np.ndarray:
    """For each indicator column i: Pr[ind_i and <x,u> in J_i] - w_i Pr[ind_i]."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ind = np.asarray(indicators, dtype=bool)
    idx = interval_index(X @ np.asarray(direction), boundaries)
    inside = idx[:, None] == np.arange(ind.shape[1])[None, :]
    w = np.asarray(weights, dtype=float)
    return np.mean(ind & inside, axis=0) - w * np.mean(ind, axis=0)


def validate_partition(direction, boundaries, mixture: Mixture, p: Polynomial,
                       T: PerturbationSet, X, y, tol: float) -> bool:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("need a nonempty test sample")
    mis, rob = _indicators(p, mixture, T, X, y)
    gaps = [partition_discrepancy(direction, boundaries, mixture.weights, ind, X)
            for ind in (mis, rob)]
    return bool(np.max(np.abs(np.concatenate(gaps))) <= tol)


# --- the stage driver ------------------------------------------------------------


@dataclass(frozen=True)
class ClassifierConfig:
    r: float = 0.05
    eps: float = 0.1
    delta: float = 0.1
    slack: float = 4.0  # C in the rounding targets
    partition_slack: float = 4.0  # C' in the partition check
    n_thresholds: int | None = None
    n_eval: int = 2000  # |M| for threshold statistics
    n_mean: int | None = None  # default 10 d^3 for d <= 12, else 20000
    n_test: int = 4000
    phi_m: int = DEFAULT_M
    seed: int = 0

    def attempts(self) -> int:
        return max(1, math.ceil(math.log2(1 / self.delta)))

    def mean_sample_size(self, d: int) -> int:
        if self.n_mean is not None:
            return self.n_mean
        return 10 * d**3 if d <= 12 else 20000

    def rounding(self) -> RoundingConfig:
        return RoundingConfig(r=self.r, eps=self.eps, delta=self.delta, slack=self.slack,
                              n_thresholds=self.n_thresholds, n_eval=self.n_eval,
                              seed=rng_mod.derive_seed(self.seed, "rounding"))


def compute_classifier(p: Polynomial, source, cfg: ClassifierConfig,
                       diagnostics: dict | None = None) -> HypothesisData:
    d = p.dimension
    phi_seed = rng_mod.derive_seed(cfg.seed, "phi")
    T = PerturbationSet.for_radius(phi_seed, cfg.phi_m, d, cfg.r)
    rounding = compute_rounding_thresholds(p, source, T, cfg.rounding())
    mix = rounding.mixture
    c = boundaries_from_weights(mix.weights)
    active = [i for i in range(4) if mix.weights[i] > 0]
    tol = cfg.partition_slack * cfg.eps
    attempts = cfg.attempts()
    log.info("partition stage: up to %d attempts, weights %s", attempts, mix.weights)
    record = {"rounding": rounding, "attempts": []}
    if diagnostics is not None:
        diagnostics.update(record)
    for a in range(attempts):
        Xm, ym = source.draw(cfg.mean_sample_size(d))
        mis_mu, rob_mu = estimate_indicator_means(p, mix, Xm, ym, T)
        # means of zero-weight components only touch empty intervals
        means = [mis_mu[i] for i in active] + [rob_mu[i] for i in active]
        u, kept = _direction_avoiding(means, rng_mod.substream(cfg.seed, rng_mod.DIRECTIONS, a), d)
        Xt, yt = source.draw(cfg.n_test)
        ok = validate_partition(u, c, mix, p, T, Xt, yt, tol)
        record["attempts"].append({"attempt": a, "valid": ok, "means_used": len(kept)})
        log.info("partition attempt %d: valid=%s", a, ok)
        if ok:
            return HypothesisData(
                d=d, k=p.degree, coefficients=p.coefficients.tolist(),
                thresholds=mix.thresholds, weights=mix.weights,
                direction=u.tolist(), boundaries=c.tolist(), r=cfg.r,
                phi_seed=phi_seed, phi_m=cfg.phi_m,
            )
    raise PartitionFailed(f"no valid partition after {attempts} attempts")
