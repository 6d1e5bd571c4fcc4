"""Render metrics CSVs as SVG plots of error and robustness against r."""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .learn import read_reports  # noqa: E402


def summarize(rows: list[dict]) -> dict:
    """Mean of each metric per radius, radii sorted."""
    by_r = defaultdict(list)
    for row in rows:
        by_r[row["r"]].append(row)
    out = {"r": sorted(by_r)}
    for key in ("err", "opt_ref", "certified_frac", "attack_frac"):
        out[key] = [float(np.mean([row[key] for row in by_r[r]])) for r in out["r"]]
    out["adv_rob_upper"] = [1.0 - c for c in out["certified_frac"]]
    return out


def render(paths, out_path) -> dict:
    rows = [row for p in paths for row in read_reports(p)]
    if not rows:
        raise ValueError("no metrics rows to plot")
    s = summarize(rows)
    with plt.rc_context({"svg.hashsalt": "robust-halfspace"}):
        _draw(s, out_path)
    return s


def _draw(s: dict, out_path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    x = np.arange(len(s["r"]))
    labels = [f"{r:g}" for r in s["r"]]
    if len(x) == 1:
        ax1.bar([0, 1], [s["err"][0], s["opt_ref"][0]], tick_label=["err", "opt ref"])
        ax2.bar([0, 1], [s["attack_frac"][0], s["adv_rob_upper"][0]],
                tick_label=["attacked (lower)", "uncertified (upper)"])
        ax1.set_title(f"error, r = {labels[0]}")
        ax2.set_title(f"boundary volume bounds, r = {labels[0]}")
    else:
        ax1.plot(s["r"], s["err"], "o-", label="err")
        ax1.plot(s["r"], s["opt_ref"], "s--", label="opt ref")
        ax2.plot(s["r"], s["attack_frac"], "o-", label="attacked (lower)")
        ax2.plot(s["r"], s["adv_rob_upper"], "s-", label="uncertified (upper)")
        for ax in (ax1, ax2):
            ax.set_xlabel("r")
            ax.legend()
        ax1.set_title("error vs r")
        ax2.set_title("boundary volume bounds vs r")
    for ax in (ax1, ax2):
        ax.set_ylim(0, 1)
    fig.tight_layout()
    # fixed metadata and id salt keep the SVG bytes reproducible
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
