"""Command-line interface.

Exit codes: 0 success, 2 training failed, 3 a certified point was flipped.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .attack import attack_many
from .config import ConfigError, ExperimentConfig
from .dist import load_csv, save_csv
from .errors import HypothesisValidationError, TrainingFailure
from .learn import evaluate, robust_learn
from .partition import HypothesisData
from .regression import write_diagnostics as write_regression_diagnostics
from .report import render
from .rounding import write_diagnostics as write_rounding_diagnostics
from .verify import accepted_mask, verify_points, write_verdicts

EXIT_OK = 0
EXIT_TRAINING_FAILED = 2
EXIT_SOUNDNESS = 3

log = logging.getLogger("robust_halfspace")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.out is not None:
        cfg = cfg.replace(out_dir=args.out)
    return cfg


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _points(args, cfg: ExperimentConfig, d: int):
    if getattr(args, "data", None):
        return load_csv(args.data)
    n = args.points if args.points is not None else cfg.n_eval
    X, y = cfg.eval_source().draw(n)
    if X.shape[1] != d:
        raise ConfigError(f"config dimension {X.shape[1]} does not match the model's {d}")
    return X, y


def _model(args) -> HypothesisData:
    if not args.model:
        raise ConfigError("--model is required")
    return HypothesisData.load(args.model)


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    n = args.points if args.points is not None else cfg.n_samples
    X, y = cfg.train_source().draw(n)
    path = _out(cfg) / "data.csv"
    save_csv(path, X, y)
    print(path)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    source = None
    if args.data:
        from .dist import ArraySource

        X, y = load_csv(args.data)
        source = ArraySource(X, y, seed=rng_mod.derive_seed(cfg.seed, "train"))
    diag: dict = {}
    t0 = time.perf_counter()
    try:
        data = robust_learn(cfg, source, diag)
    except TrainingFailure as exc:
        log.error("training failed: %s", exc)
        return EXIT_TRAINING_FAILED
    finally:
        if diag.get("regression"):
            write_regression_diagnostics(out / "regression.csv", diag["regression"])
    secs = time.perf_counter() - t0
    stage = diag["classifier"][-1]
    write_rounding_diagnostics(out / "rounding.csv", stage["rounding"])
    data.save(out / "model.json")
    (out / "train_meta.json").write_text(json.dumps({"train_secs": secs if cfg.record_timings else 0.0}) + "\n")
    print(out / "model.json")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    data = _model(args)
    meta = Path(args.model).with_name("train_meta.json")
    train_secs = json.loads(meta.read_text())["train_secs"] if meta.exists() else 0.0
    if args.points is not None:
        cfg = cfg.replace(n_eval=args.points)
    report = evaluate(data, cfg, train_secs=train_secs)
    report.save(out / "metrics.csv")
    write_verdicts(out / "verdicts.csv", report.details["verdicts"])
    sys.stdout.write(report.to_csv())
    if report.soundness_violations:
        log.error("%d certified points were attacked", report.soundness_violations)
        return EXIT_SOUNDNESS
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    trusted = _model(args)
    candidate = HypothesisData.load(args.candidate) if args.candidate else trusted
    X, _ = _points(args, cfg, trusted.d)
    verdicts = verify_points(candidate, trusted, X, cfg.verify_margin)
    path = _out(cfg) / "verdicts.csv"
    write_verdicts(path, verdicts)
    print(f"{int(accepted_mask(verdicts).sum())}/{len(verdicts)} accepted; verdicts in {path}")
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _config(args)
    data = _model(args)
    r = args.radius if args.radius is not None else data.r
    X, _ = _points(args, cfg, data.d)
    found, X_adv = attack_many(data, X, r, cfg.attack_budget(), seed=cfg.seed)
    acc = accepted_mask(verify_points(data, data, X, cfg.verify_margin))
    path = _out(cfg) / "attacks.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "certified", "attacked", "perturbation_norm"])
        norms = np.linalg.norm(X_adv - X, axis=1)
        for i in range(len(X)):
            w.writerow([i, int(acc[i]), int(found[i]), repr(float(norms[i])) if found[i] else ""])
    print(f"{int(found.sum())}/{len(X)} attacked at r={r:g}; results in {path}")
    # the verifier's guarantee is for the model's own radius
    if r <= data.r and (acc & found).any():
        log.error("%d certified points were attacked", int((acc & found).sum()))
        return EXIT_SOUNDNESS
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    paths = args.metrics or sorted(out.glob("**/metrics.csv"))
    if not paths:
        raise ConfigError("no metrics CSV files given or found")
    path = out / "report.svg"
    render(paths, path)
    print(path)
    return EXIT_OK


COMMANDS = {
    "gen-data": (cmd_gen_data, "sample a labelled dataset from the configured distribution"),
    "train": (cmd_train, "train a hypothesis and write model.json"),
    "evaluate": (cmd_evaluate, "measure error, certified and attacked fractions"),
    "verify": (cmd_verify, "run the per-point verifier"),
    "attack": (cmd_attack, "search for label flips within radius r"),
    "report": (cmd_report, "plot metrics CSVs as SVG"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-halfspace", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="TOML or JSON experiment config")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--model", help="hypothesis JSON")
        p.add_argument("--points", type=int, help="number of points")
        p.add_argument("--radius", type=float, help="attack radius")
        if name in ("train", "verify", "attack"):
            p.add_argument("--data", help="CSV of points (features then label)")
        if name == "verify":
            p.add_argument("--candidate", help="hypothesis JSON to check against --model")
        if name == "report":
            p.add_argument("metrics", nargs="*", help="metrics CSV files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except (ConfigError, HypothesisValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
