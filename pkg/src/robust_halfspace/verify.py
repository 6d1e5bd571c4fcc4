"""Per-point robustness verification against a trusted hypothesis package.

A hypothesis is fully determined by its :class:`HypothesisData`, so checking
that a deployed model "is" the template amounts to comparing packages field
by field.  Acceptance at ``x`` then needs two local facts: the active PTF is
insensitive at ``x`` (phi-hat at most 0.1 - eps) and ``<x, u>`` is more than
``r`` from every interval boundary.  The guarantee is conditional on the
fixed-seed phi-hat being accurate at the queried points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .corrector import ROBUST_THRESHOLD
from .partition import HypothesisData, evaluate_detail, predict
from .poly import PTF, DimensionError

ACCEPT = "accept"
REJECT = "reject"
REASONS = ("template", "sensitivity", "boundary")


@dataclass(frozen=True)
class Compiled:
    data: HypothesisData
    ptfs: tuple[PTF, PTF, PTF, PTF]
    evaluate: Callable[[np.ndarray], np.ndarray]


def _as_data(data) -> HypothesisData:
    if isinstance(data, HypothesisData):
        return data
    if isinstance(data, str):
        return HypothesisData.from_json(data)
    return HypothesisData.from_dict(data)


def compile(data) -> Compiled:
    """Build the evaluator and the four PTFs; invalid packages raise
    :class:`HypothesisValidationError` naming the offending field."""
    data = _as_data(data)
    ptfs = tuple(PTF(data.poly, t) for t in data.thresholds)

    def evaluate(X):
        return predict(data, X)

    return Compiled(data, ptfs, evaluate)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str | None
    phi: float
    boundary_distance: float

    @property
    def verdict(self) -> str:
        return ACCEPT if self.accepted else REJECT


def same_template(g_data, trusted) -> bool:
    """Exact field-by-field equality; floats are compared bit for bit."""
    try:
        g = _as_data(g_data)
    except ValueError:
        return False
    return g.to_dict() == _as_data(trusted).to_dict()


def verify_points(g_data, trusted, X, eps: float) -> list[Verdict]:
    trusted = _as_data(trusted)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != trusted.d:
        raise DimensionError(f"hypothesis expects dimension {trusted.d}, got {X.shape[1]}")
    if not same_template(g_data, trusted):
        return [Verdict(False, "template", float("nan"), float("nan"))] * X.shape[0]
    ev = evaluate_detail(trusted, X)
    dist = np.min(np.abs(ev.projection[:, None] - np.asarray(trusted.boundaries)[None, :]), axis=1)
    out = []
    for phi, bd in zip(ev.phi, dist):
        if phi > ROBUST_THRESHOLD - eps:
            reason = "sensitivity"
        elif bd <= trusted.r:
            reason = "boundary"
        else:
            reason = None
        out.append(Verdict(reason is None, reason, float(phi), float(bd)))
    return out


def verify_point(g_data, trusted, x, eps: float) -> Verdict:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError("verify_point takes a single point")
    return verify_points(g_data, trusted, x[None, :], eps)[0]


def accepted_mask(verdicts: list[Verdict]) -> np.ndarray:
    return np.array([v.accepted for v in verdicts], dtype=bool)


VERDICT_COLUMNS = ["index", "verdict", "reason", "phi", "boundary_distance"]


def write_verdicts(path, verdicts: list[Verdict]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(VERDICT_COLUMNS)
        for i, v in enumerate(verdicts):
            w.writerow([i, v.verdict, v.reason or "", repr(v.phi), repr(v.boundary_distance)])
