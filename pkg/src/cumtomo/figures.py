"""Render campaign summary figures from the long-format CSV reports.

Figures are written next to the CSVs with fixed metadata so repeated runs
produce byte-identical files.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = ["render_campaign_figures"]

_SAVE_KW = dict(dpi=120, metadata={"Software": "cumtomo"})


def _read_rows(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _boxes(ax, groups: dict, ylabel: str, title: str) -> None:
    labels = sorted(groups)
    data = [groups[k] for k in labels]
    ax.boxplot(data, tick_labels=[str(k) for k in labels], showmeans=False)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)


def f1_figure(cases_csv: Path, out_path: Path) -> bool:
    rows = [r for r in _read_rows(cases_csv) if r["metric"] == "f1"]
    if not rows:
        return False
    by_n = defaultdict(lambda: defaultdict(list))
    for r in rows:
        by_n[int(r["N"])][int(r["i_max"])].append(float(r["value"]))
    sizes = sorted(by_n)
    fig, axes = plt.subplots(1, len(sizes), figsize=(4 * len(sizes), 3.2), squeeze=False)
    for ax, N in zip(axes[0], sizes):
        _boxes(ax, by_n[N], "F1 (geometric)", f"N = {N:,}")
        ax.set_xlabel("max cumulant order")
        ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)
    return True


def stage1_figure(stage1_csv: Path, out_path: Path) -> bool:
    rows = _read_rows(stage1_csv)
    if not rows:
        return False
    metrics = ("precision", "recall")
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    for ax, metric in zip(axes, metrics):
        groups = defaultdict(list)
        for r in rows:
            if r["metric"] == metric:
                groups[int(r["order"])].append(float(r["value"]))
        _boxes(ax, groups, metric, f"support estimate {metric}")
        ax.set_xlabel("cumulant order")
        ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)
    return True


def sparsity_figure(sparsity_csv: Path, out_path: Path) -> bool:
    rows = _read_rows(sparsity_csv)
    if not rows:
        return False
    metrics = ("supp_g_size", "supp_f_size", "density", "largest_set")
    titles = {
        "supp_g_size": "nonzero inverted entries",
        "supp_f_size": "nonzero sum entries",
        "density": "sum-entry density",
        "largest_set": "largest supported set",
    }
    fig, axes = plt.subplots(2, 2, figsize=(8, 6))
    for ax, metric in zip(axes.flat, metrics):
        groups = defaultdict(list)
        for r in rows:
            if r["metric"] == metric:
                groups[int(r["order"])].append(float(r["value"]))
        _boxes(ax, groups, metric, titles[metric])
        ax.set_xlabel("cumulant order")
        if metric in ("supp_f_size", "density"):
            ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)
    return True


def render_campaign_figures(out_dir) -> list[Path]:
    """Render all available figures for a campaign output directory."""
    out = Path(out_dir)
    rendered = []
    for builder, src, name in (
        (f1_figure, "cases.csv", "f1_scores.png"),
        (stage1_figure, "stage1.csv", "stage1_accuracy.png"),
        (sparsity_figure, "sparsity.csv", "sparsity_metrics.png"),
    ):
        target = out / name
        if builder(out / src, target):
            rendered.append(target)
    return rendered
