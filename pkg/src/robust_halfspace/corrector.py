"""Local smoothing corrector for polynomial threshold functions.

A point whose estimated local noise sensitivity exceeds 0.8 is isolated:
almost every nearby perturbation disagrees with it, so its label is flipped.
Points with sensitivity at most 0.1 are robust: no point within the radius can
change the corrected label.  Both constants are fixed.
"""

from __future__ import annotations

import numpy as np

from .poly import PTF, sign
from .sensitivity import PerturbationSet, ptf_phi_hat

FLIP_THRESHOLD = 0.8
ROBUST_THRESHOLD = 0.1


class RadiusMismatch(ValueError):
    """The perturbation set's noise scale is not ten times the radius."""


def check_radius(T: PerturbationSet, r: float) -> None:
    if abs(T.eta - 10.0 * r) > 1e-12 * max(1.0, T.eta):
        raise RadiusMismatch(f"perturbation scale {T.eta} does not equal 10 * r = {10.0 * r}")


def lca_labels(X, g: PTF, r: float, T: PerturbationSet, phi: np.ndarray | None = None) -> np.ndarray:
    """Corrected labels of ``g`` at each row of ``X``."""
    check_radius(T, r)
    if phi is None:
        phi, base = ptf_phi_hat(g.poly, g.threshold, T, X)
    else:
        base = g.poly(X)
    labels = sign(base - g.threshold)
    return np.where(phi > FLIP_THRESHOLD, -labels, labels).astype(np.int8)


def lca_label(x, g: PTF, r: float, T: PerturbationSet) -> int:
    return int(lca_labels(np.asarray(x, dtype=float)[None, :], g, r, T)[0])


def robust_indicators(X, g: PTF, r: float, T: PerturbationSet, margin: float = 0.0) -> np.ndarray:
    check_radius(T, r)
    phi, _ = ptf_phi_hat(g.poly, g.threshold, T, X)
    return phi <= ROBUST_THRESHOLD - margin


def robust_indicator(x, g: PTF, r: float, T: PerturbationSet, margin: float = 0.0) -> bool:
    return bool(robust_indicators(np.asarray(x, dtype=float)[None, :], g, r, T, margin)[0])
