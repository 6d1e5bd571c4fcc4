"""Monte-Carlo local noise sensitivity over a fixed, seeded perturbation set.

For a Boolean ``f`` the estimate at ``x`` is the fraction of perturbations
``z`` in ``T`` with ``f(x) != f(x + eta z)``; for a real-valued polynomial it is
the mean of ``|p(x) - p(x + eta z)| / 2``.  Sharing one ``T`` across every
query makes each estimator a deterministic function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import rng as rng_mod
from .poly import PTF, DimensionError, MonomialBasis, Polynomial, shift_matrix, sign

DEFAULT_M = 4096
# a point is treated as isolated above this sensitivity in the psi relaxation
PSI_KNEE = 0.6
PSI_SLOPE = 10.0
# cap on the (points x perturbations) block materialized at once
_BLOCK_ELEMS = 2**21

BooleanFn = Callable[[np.ndarray], np.ndarray]
Function = Union[PTF, Polynomial, BooleanFn]


@dataclass(frozen=True)
class PerturbationSet:
    seed: int
    m: int
    d: int
    eta: float
    vectors: np.ndarray = field(init=False, repr=False, compare=False)
    _features: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if self.m < 1 or self.d < 1:
            raise ValueError("perturbation count and dimension must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        Z = rng_mod.substream(self.seed, rng_mod.PERTURBATIONS).standard_normal(
            (self.m, self.d)
        )
        Z.setflags(write=False)
        object.__setattr__(self, "vectors", Z)

    @classmethod
    def for_radius(cls, seed: int, m: int, d: int, r: float) -> "PerturbationSet":
        """The pipeline convention: noise scale is ten times the radius."""
        return cls(seed, m, d, 10.0 * r)

    def features(self, basis: MonomialBasis) -> np.ndarray:
        """Monomial features of the raw perturbations (m, len(basis)), cached."""
        key = (basis.dimension, basis.degree)
        if key not in self._features:
            F = basis.features(self.vectors)
            F.setflags(write=False)
            self._features[key] = F
        return self._features[key]

    def descriptor(self) -> dict:
        return {"phi_seed": int(self.seed), "phi_m": int(self.m), "eta": float(self.eta)}


def _check_dim(T: PerturbationSet, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != T.d:
        raise DimensionError(f"points have dimension {X.shape[1]}, perturbations {T.d}")
    return X


def _block_rows(T: PerturbationSet) -> int:
    return max(1, _BLOCK_ELEMS // T.m)


def perturbed_values(f, T: PerturbationSet, X) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(f(X), F)`` with ``F[j, l] = f(X[j] + eta * z_l)``.

    Polynomials (and PTFs, through their polynomial) take a fast path: the
    Taylor shift of ``p`` to each ``X[j]`` is contracted against the cached
    features of ``T`` in one matrix product.  Other callables are evaluated
    point by point.  Memory is O(len(X) * m).
    """
    X = _check_dim(T, X)
    poly = f.poly if isinstance(f, PTF) else f
    if isinstance(poly, Polynomial):
        W = shift_matrix(poly, T.eta)
        FZ = T.features(poly.basis)
        FX = poly.basis.features(X)
        vals = (FX @ W) @ FZ.T
        base = FX @ poly.coefficients
        if isinstance(f, PTF):
            return (
                sign(base - f.threshold).astype(float),
                sign(vals - f.threshold).astype(float),
            )
        return base, vals
    base = np.asarray(f(X), dtype=float)
    out = np.empty((X.shape[0], T.m))
    step = _block_rows(T)
    shift = T.eta * T.vectors
    for s in range(0, X.shape[0], step):
        blk = X[s : s + step]
        pts = (blk[:, None, :] + shift[None, :, :]).reshape(-1, T.d)
        out[s : s + step] = np.asarray(f(pts), dtype=float).reshape(len(blk), T.m)
    return base, out


def phi_hat_many(f: Function, T: PerturbationSet, X) -> np.ndarray:
    """Vectorized :func:`phi_hat` over the rows of ``X``."""
    X = _check_dim(T, X)
    out = np.empty(X.shape[0])
    step = _block_rows(T)
    for s in range(0, X.shape[0], step):
        base, vals = perturbed_values(f, T, X[s : s + step])
        if isinstance(f, Polynomial):
            out[s : s + step] = np.mean(np.abs(vals - base[:, None]), axis=1) / 2
        else:
            out[s : s + step] = np.mean(vals != base[:, None], axis=1)
    return out


def phi_hat(f: Function, T: PerturbationSet, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError("phi_hat takes a single point; use phi_hat_many for batches")
    return float(phi_hat_many(f, T, x[None, :])[0])


def ptf_phi_hat(poly: Polynomial, thresholds, T: PerturbationSet, X) -> np.ndarray:
    """Sensitivity of ``sign(poly - t_j)`` at ``X[j]``, one threshold per point.

    ``thresholds`` may be a scalar.  Returns ``(phi, poly(X))``.
    """
    X = _check_dim(T, X)
    t = np.broadcast_to(np.asarray(thresholds, dtype=float), (X.shape[0],))
    phi = np.empty(X.shape[0])
    base = np.empty(X.shape[0])
    step = _block_rows(T)
    for s in range(0, X.shape[0], step):
        b, vals = perturbed_values(poly, T, X[s : s + step])
        tt = t[s : s + step, None]
        phi[s : s + step] = np.mean((vals >= tt) != (b[:, None] >= tt), axis=1)
        base[s : s + step] = b
    return phi, base


class ThresholdSweep:
    """Boolean sensitivities of ``sign(p - t)`` for many thresholds ``t``.

    ``p(x + eta z)`` does not depend on ``t``, so the perturbed values are
    computed once and sorted per point; each threshold then costs a binary
    search per point.
    """

    def __init__(self, poly: Polynomial, T: PerturbationSet, X):
        self.poly = poly
        self.T = T
        self.base, vals = perturbed_values(poly, T, X)
        vals.sort(axis=1)
        self.sorted_values = vals

    def phi_matrix(self, thresholds) -> np.ndarray:
        """Sensitivities, shape (n_points, n_thresholds)."""
        ts = np.atleast_1d(np.asarray(thresholds, dtype=float))
        # perturbed values strictly below t are labelled -1
        below = np.stack(
            [np.searchsorted(row, ts, side="left") for row in self.sorted_values]
        )
        above = self.T.m - below
        return np.where(self.base[:, None] >= ts[None, :], below, above) / self.T.m

    def phi(self, t: float) -> np.ndarray:
        return self.phi_matrix([t])[:, 0]

    def labels(self, t: float) -> np.ndarray:
        return sign(self.base - t)


def _mean(values: np.ndarray) -> float:
    if values.size == 0:
        raise ValueError("need a nonempty point set")
    # numpy's pairwise summation fixes the reduction order
    return float(np.mean(values))


def ns_hat(f: Function, T: PerturbationSet, S) -> float:
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] == 0:
        raise ValueError("need a nonempty point set")
    return _mean(phi_hat_many(f, T, S))


def iso_hat(f: Function, T: PerturbationSet, S, threshold: float) -> float:
    if not 0.0 < threshold < 1.0:
        raise ValueError("isolation threshold must lie in (0, 1)")
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] == 0:
        raise ValueError("need a nonempty point set")
    return _mean((phi_hat_many(f, T, S) > threshold).astype(float))


def psi_from_phi(phi: np.ndarray) -> np.ndarray:
    return PSI_SLOPE * np.maximum(0.0, np.asarray(phi) - PSI_KNEE)


def psi_hat(f: Function, T: PerturbationSet, S) -> float:
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] == 0:
        raise ValueError("need a nonempty point set")
    return _mean(psi_from_phi(phi_hat_many(f, T, S)))
