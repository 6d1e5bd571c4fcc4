"""End-to-end training and evaluation."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attack import attack_many
from .config import ExperimentConfig
from .errors import TrainingFailure
from .partition import HypothesisData, compute_classifier, predict
from .regression import learn_real_valued
from .verify import accepted_mask, verify_points

log = logging.getLogger(__name__)


def robust_learn(cfg: ExperimentConfig, source=None, diagnostics: dict | None = None) -> HypothesisData:
    """Regression, then the classifier stage; the latter is retried once with
    a fresh derived seed if it fails."""
    source = cfg.train_source() if source is None else source
    rounds: list = []
    p = learn_real_valued(source, cfg.regression(), rounds)
    if diagnostics is not None:
        diagnostics["regression"] = rounds
    for attempt in range(2):
        stage: dict = {}
        try:
            data = compute_classifier(p, source, cfg.classifier(attempt), stage)
        except TrainingFailure as exc:
            log.warning("classifier stage attempt %d failed: %s", attempt, exc)
            last = exc
            continue
        finally:
            if diagnostics is not None:
                diagnostics.setdefault("classifier", []).append(stage)
        return data
    raise last


def classification_error(data: HypothesisData, X, y) -> float:
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("need a nonempty evaluation set")
    return float(np.mean(predict(data, X) != y))


REPORT_COLUMNS = ["seed", "d", "k", "r", "eps", "rho", "err", "opt_ref",
                  "certified_frac", "attack_frac", "train_secs", "eval_secs"]


@dataclass
class MetricsReport:
    seed: int
    d: int
    k: int
    r: float
    eps: float
    rho: float
    err: float
    opt_ref: float
    certified_frac: float
    attack_frac: float
    train_secs: float = 0.0
    eval_secs: float = 0.0
    # not part of the CSV
    soundness_violations: int = 0
    n_points: int = 0
    details: dict = field(default_factory=dict, repr=False)

    @property
    def adv_rob_upper(self) -> float:
        return 1.0 - self.certified_frac

    @property
    def adv_rob_lower(self) -> float:
        return self.attack_frac

    def row(self) -> list[str]:
        out = []
        for name in REPORT_COLUMNS:
            v = getattr(self, name)
            out.append(str(v) if isinstance(v, int) else repr(float(v)))
        return out

    def to_csv(self) -> str:
        return ",".join(REPORT_COLUMNS) + "\n" + ",".join(self.row()) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())


def read_reports(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k in ("seed", "d", "k") else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def opt_reference(cfg: ExperimentConfig, X, y) -> float:
    """Planted model's error: rho for random flips, measured otherwise."""
    if cfg.noise == "random_flip":
        return cfg.rho
    return float(np.mean(cfg.data_spec().halfspace(X) != y))


def evaluate(data: HypothesisData, cfg: ExperimentConfig, source=None, train_secs: float = 0.0) -> MetricsReport:
    t0 = time.perf_counter()
    source = cfg.eval_source() if source is None else source
    X, y = source.draw(cfg.n_eval)
    err = classification_error(data, X, y)
    verdicts = verify_points(data, data, X, cfg.verify_margin)
    acc = accepted_mask(verdicts)
    found, X_adv = attack_many(data, X, data.r, cfg.attack_budget(),
                               seed=cfg.eval_seed if cfg.eval_seed is not None else cfg.seed)
    bad = acc & found
    if bad.any():
        log.error("soundness violation: %d certified points were flipped", int(bad.sum()))
    secs = time.perf_counter() - t0
    return MetricsReport(
        seed=cfg.seed, d=data.d, k=data.k, r=data.r, eps=cfg.eps, rho=cfg.rho,
        err=err, opt_ref=opt_reference(cfg, X, y),
        certified_frac=float(acc.mean()), attack_frac=float(found.mean()),
        train_secs=train_secs if cfg.record_timings else 0.0,
        eval_secs=secs if cfg.record_timings else 0.0,
        soundness_violations=int(bad.sum()), n_points=len(y),
        details={"X": X, "y": y, "verdicts": verdicts, "attacked": found, "X_adv": X_adv},
    )


def run_experiment(cfg: ExperimentConfig, diagnostics: dict | None = None):
    t0 = time.perf_counter()
    data = robust_learn(cfg, diagnostics=diagnostics)
    train_secs = time.perf_counter() - t0
    return data, evaluate(data, cfg, train_secs=train_secs)
