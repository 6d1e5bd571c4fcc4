"""Synthetic marginals, planted halfspace labels, and 1-D Gaussian utilities."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import rng as rng_mod

MARGINALS = ("standard_gaussian", "isotropic_cube")
NOISE_MODELS = ("random_flip", "margin_adversarial")
SQRT3 = math.sqrt(3.0)
# bracket for quantile bisection; Phi(-40) underflows to 0 in double precision
_QUANTILE_LO, _QUANTILE_HI = -40.0, 40.0
_QUANTILE_ITERS = 60


def gaussian_cdf(z):
    """Standard normal CDF.  Accepts scalars or arrays."""
    out = ndtr(np.asarray(z, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def gaussian_quantile(q):
    """Inverse of :func:`gaussian_cdf` by 60 rounds of bisection on [-40, 40].

    Vectorized over ``q``; every entry must lie strictly inside (0, 1).  The
    search runs on the lower tail min(q, 1 - q), where the CDF keeps full
    relative precision, and is mirrored for q > 1/2; this makes the result
    exactly odd under q -> 1 - q.
    """
    qa = np.asarray(q, dtype=float)
    if not np.all((qa > 0.0) & (qa < 1.0)):
        raise ValueError("gaussian_quantile needs probabilities strictly inside (0, 1)")
    upper = qa > 0.5
    tail = np.where(upper, 1.0 - qa, qa)  # exact for q >= 1/2 (Sterbenz)
    lo = np.full(qa.shape, _QUANTILE_LO)
    hi = np.full(qa.shape, _QUANTILE_HI)
    for _ in range(_QUANTILE_ITERS):
        mid = 0.5 * (lo + hi)
        below = ndtr(mid) < tail
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    z = 0.5 * (lo + hi)
    z = np.where(upper, -z, z)
    return float(z) if z.ndim == 0 else z


@dataclass(frozen=True)
class Halfspace:
    direction: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        u = np.array(self.direction, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise ValueError(f"halfspace direction must be unit norm, got {np.linalg.norm(u)}")
        u.setflags(write=False)
        object.__setattr__(self, "direction", u)
        object.__setattr__(self, "offset", float(self.offset))

    def margin(self, X) -> np.ndarray:
        return np.atleast_2d(X) @ self.direction - self.offset

    def __call__(self, X) -> np.ndarray:
        return np.where(self.margin(X) >= 0, 1, -1).astype(np.int8)

    @classmethod
    def random(cls, d: int, seed: int, offset: float = 0.0) -> "Halfspace":
        g = rng_mod.substream(seed, "planted").standard_normal(d)
        return cls(g / np.linalg.norm(g), offset)


@dataclass(frozen=True)
class DataSpec:
    """A distribution over R^d x {-1, +1}: marginal, planted halfspace, label noise.

    ``margin_adversarial`` is this package's own choice of adversarial label
    model: it flips the points closest to the planted boundary.
    """

    d: int
    halfspace: Halfspace
    marginal: str = "standard_gaussian"
    noise: str = "random_flip"
    rho: float = 0.0
    seed: int = 0
    _margin: float = field(default=0.0, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.marginal not in MARGINALS:
            raise ValueError(f"unknown marginal {self.marginal!r}; pick one of {MARGINALS}")
        if self.noise not in NOISE_MODELS:
            raise ValueError(f"unknown noise model {self.noise!r}; pick one of {NOISE_MODELS}")
        if not 0.0 <= self.rho < 0.5:
            raise ValueError(f"noise rate must lie in [0, 0.5), got {self.rho}")
        if self.halfspace.direction.shape != (self.d,):
            raise ValueError("planted halfspace dimension does not match d")
        if self.noise == "margin_adversarial" and self.rho > 0:
            object.__setattr__(self, "_margin", _calibrate_margin(self))

    @property
    def flip_margin(self) -> float:
        """Boundary distance below which margin_adversarial flips labels."""
        return self._margin

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "marginal": self.marginal,
            "noise": self.noise,
            "rho": self.rho,
            "seed": self.seed,
            "direction": [float(v) for v in self.halfspace.direction],
            "offset": self.halfspace.offset,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DataSpec":
        d = int(obj["d"])
        seed = int(obj.get("seed", 0))
        if obj.get("direction") is not None:
            hs = Halfspace(obj["direction"], obj.get("offset", 0.0))
        else:
            hs = Halfspace.random(d, seed, obj.get("offset", 0.0))
        return cls(
            d=d,
            halfspace=hs,
            marginal=obj.get("marginal", "standard_gaussian"),
            noise=obj.get("noise", "random_flip"),
            rho=float(obj.get("rho", 0.0)),
            seed=seed,
        )


def _calibrate_margin(spec: DataSpec) -> float:
    tau, rho = spec.halfspace.offset, spec.rho
    if spec.marginal == "standard_gaussian":
        # u.x ~ N(0, 1): solve Phi(tau + m) - Phi(tau - m) = rho by bisection
        lo, hi = 0.0, 40.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if gaussian_cdf(tau + mid) - gaussian_cdf(tau - mid) < rho:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
    # no closed form for projections of the cube; use an empirical quantile
    g = rng_mod.substream(spec.seed, "margin-calibration")
    Z = g.uniform(-SQRT3, SQRT3, size=(200_000, spec.d))
    return float(np.quantile(np.abs(Z @ spec.halfspace.direction - tau), rho))


def sample_marginal(spec: DataSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    if spec.marginal == "standard_gaussian":
        return rng.standard_normal((n, spec.d))
    return rng.uniform(-SQRT3, SQRT3, size=(n, spec.d))


def label(spec: DataSpec, X, rng: np.random.Generator) -> np.ndarray:
    """Noisy labels for the rows of ``X``; ``rng`` drives random flips only."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.d:
        raise ValueError(f"expected dimension {spec.d}, got {X.shape[1]}")
    y = spec.halfspace(X)
    if spec.rho == 0:
        return y
    if spec.noise == "random_flip":
        flip = rng.random(X.shape[0]) < spec.rho
    else:
        flip = np.abs(spec.halfspace.margin(X)) < spec.flip_margin
    return np.where(flip, -y, y).astype(np.int8)


def sample(spec: DataSpec, n: int, rng: np.random.Generator):
    X = sample_marginal(spec, n, rng)
    return X, label(spec, X, rng)


class PlantedSource:
    """Sample access to a :class:`DataSpec`: every ``draw`` is fresh and i.i.d."""

    def __init__(self, spec: DataSpec, seed: int, stream: str = rng_mod.DATA):
        self.spec = spec
        self._rng = rng_mod.substream(seed, stream)

    @property
    def d(self) -> int:
        return self.spec.d

    def draw(self, n: int):
        return sample(self.spec, n, self._rng)


class ArraySource:
    """Sample access backed by a finite dataset.

    Draws without replacement from a seeded permutation and reshuffles once the
    data is used up, so successive draws are disjoint while data lasts.
    """

    def __init__(self, X, y, seed: int = 0):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y).astype(np.int8)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0] or self.X.shape[0] == 0:
            raise ValueError("ArraySource needs a nonempty 2-D X with matching y")
        self._rng = rng_mod.substream(seed, rng_mod.DATA, "array")
        self._order = self._rng.permutation(self.X.shape[0])
        self._pos = 0

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def draw(self, n: int):
        idx = []
        while n > 0:
            if self._pos == len(self._order):
                self._order = self._rng.permutation(self.X.shape[0])
                self._pos = 0
            take = self._order[self._pos : self._pos + n]
            self._pos += len(take)
            n -= len(take)
            idx.append(take)
        idx = np.concatenate(idx)
        return self.X[idx], self.y[idx]


def save_csv(path, X, y) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(X.shape[1])] + ["y"])
        for row, lab in zip(X, y):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


def load_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :-1], data[:, -1].astype(np.int8)


__all__ = [
    "ArraySource",
    "DataSpec",
    "Halfspace",
    "PlantedSource",
    "gaussian_cdf",
    "gaussian_quantile",
    "label",
    "load_csv",
    "sample",
    "sample_marginal",
    "save_csv",
]
