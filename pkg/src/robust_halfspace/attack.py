"""Searching for label flips within an l2 ball around a point.

Three kinds of straight-line probes, each capped at length ``r``:

* along the polynomial gradient toward the active threshold ``t_i``;
* along ``+-u`` toward the nearest interval boundary ``c_j``;
* ``restarts`` uniformly random directions.

Every probe is scanned on a grid of ``steps`` points with the full
hypothesis (corrector included), plus the exact crossing of the raw PTF or
boundary found by cheap bisection on ``p`` or the projection.  The first flip
found is refined by bisection toward ``x`` and re-checked before it is
reported.  The search is a heuristic: finding nothing proves nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod
from .partition import HypothesisData, evaluate_detail, predict
from .poly import DimensionError

RAW_BISECT = 60
NORM_SLACK = 1e-9


@dataclass(frozen=True)
class AttackBudget:
    restarts: int = 16
    steps: int = 8
    refine: int = 20

    def __post_init__(self):
        if self.restarts < 0 or self.steps < 1 or self.refine < 0:
            raise ValueError("attack budget must be nonnegative with at least one step")


def _unit(V):
    n = np.linalg.norm(V, axis=-1, keepdims=True)
    return V / np.where(n > 0, n, 1.0)


def _raw_crossing(data: HypothesisData, X, D, t, r):
    """Smallest s in (0, r] with sign(p(x + s d) - t) != sign(p(x) - t), else nan.

    Scans a fine grid then bisects; exact up to the grid's resolution of
    multiple crossings.
    """
    p = data.poly
    side = p(X) >= t
    grid = np.linspace(0.0, r, 33)[1:]
    vals = np.stack([p(X + s * D) >= t for s in grid], axis=1) != side[:, None]
    hit = vals.any(axis=1)
    first = np.argmax(vals, axis=1)
    lo = np.where(first > 0, grid[np.maximum(first - 1, 0)], 0.0)
    hi = grid[first]
    for _ in range(RAW_BISECT):
        mid = 0.5 * (lo + hi)
        flipped = (p(X + mid[:, None] * D) >= t) != side
        hi = np.where(flipped, mid, hi)
        lo = np.where(flipped, lo, mid)
    return np.where(hit, hi, np.nan)


def attack_many(data: HypothesisData, X, r: float, budget: AttackBudget = AttackBudget(),
                seed: int = 0):
    """Attack each row of ``X``.  Returns ``(found, X_adv)``; rows of ``X_adv``
    without a flip are nan."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if d != data.d:
        raise DimensionError(f"hypothesis expects dimension {data.d}, got {d}")
    ev = evaluate_detail(data, X)
    label = ev.labels
    t = np.asarray(data.thresholds)[ev.interval]
    u = np.asarray(data.direction)
    c = np.asarray(data.boundaries)

    # probe directions, shape (n, n_dir, d)
    grad = data.poly.gradient(X)
    toward_t = -np.where(ev.values >= t, 1.0, -1.0)[:, None] * grad
    nearest = c[np.argmin(np.abs(ev.projection[:, None] - c[None, :]), axis=1)]
    toward_c = np.where(nearest >= ev.projection, 1.0, -1.0)[:, None] * u[None, :]
    rng = rng_mod.substream(seed, "attack")
    rand = rng.standard_normal((n, budget.restarts, d))
    D = _unit(np.concatenate([toward_t[:, None], toward_c[:, None], rand], axis=1))
    n_dir = D.shape[1]

    # step lengths per (point, direction): grid plus exact crossings
    S = np.broadcast_to(np.linspace(0.0, r, budget.steps + 1)[1:], (n, n_dir, budget.steps))
    cross = np.full((n, n_dir), np.nan)
    cross[:, 0] = _raw_crossing(data, X, D[:, 0], t, r)
    gap = np.abs(nearest - ev.projection)
    cross[:, 1] = np.where(gap < r, np.minimum(r, gap * (1 + 1e-12) + 1e-12), np.nan)
    S = np.concatenate([np.where(np.isnan(cross), r, cross)[..., None], S], axis=2)
    n_s = S.shape[2]

    cand = X[:, None, None, :] + S[..., None] * D[:, :, None, :]
    flips = predict(data, cand.reshape(-1, d)).reshape(n, n_dir, n_s) != label[:, None, None]

    found = flips.reshape(n, -1).any(axis=1)
    X_adv = np.full((n, d), np.nan)
    if not found.any():
        return found, X_adv
    idx = np.flatnonzero(found)
    flat = np.argmax(flips[idx].reshape(len(idx), -1), axis=1)
    j, k = np.unravel_index(flat, (n_dir, n_s))
    dirs = D[idx, j]
    hi = S[idx, j, k]
    lo = np.zeros_like(hi)
    # shrink toward x while keeping a flip at hi
    for _ in range(budget.refine):
        mid = 0.5 * (lo + hi)
        f = predict(data, X[idx] + mid[:, None] * dirs) != label[idx]
        hi = np.where(f, mid, hi)
        lo = np.where(f, lo, mid)
    adv = X[idx] + hi[:, None] * dirs
    ok = (predict(data, adv) != label[idx]) & (np.linalg.norm(adv - X[idx], axis=1) <= r + NORM_SLACK)
    found[idx[~ok]] = False
    X_adv[idx[ok]] = adv[ok]
    return found, X_adv


def attack(data: HypothesisData, x, r: float, budget: AttackBudget = AttackBudget(), seed: int = 0):
    """Adversarial ``x'`` with ``||x' - x|| <= r`` and a different label, or None."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError("attack takes a single point")
    found, adv = attack_many(data, x[None, :], r, budget, seed)
    return adv[0] if found[0] else None
