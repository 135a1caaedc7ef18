"""Scoring recovered routing matrices, hyperparameter grid search, and the
campaign harness that sweeps scenarios and writes long-format CSV reports.
"""
from __future__ import annotations

import copy
import csv
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .netmodel import (
    Topology,
    generate_scenario,
    random_topology,
    sample_delays,
    sparsity_report,
    true_common_support,
)
from .sparse import (
    PipelineConfig,
    PreparedPipeline,
    finish_pipeline,
    prepare_pipeline,
)

__all__ = [
    "ScoreReport",
    "score",
    "GridResult",
    "grid_search",
    "default_lambda_grid",
    "default_exponent_grid",
    "CampaignConfig",
    "run_campaign",
]


def _columns(matrix) -> list[tuple[int, ...]]:
    arr = getattr(matrix, "routing_matrix", None)
    if callable(arr):
        arr = arr()
    elif hasattr(matrix, "matrix"):
        arr = matrix.matrix
    else:
        arr = matrix
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D routing matrix")
    return [tuple(int(v) for v in arr[:, c]) for c in range(arr.shape[1])]


@dataclass
class ScoreReport:
    """Column precision/recall of a recovered routing matrix.

    The f1 field is the geometric mean of precision and recall; the
    conventional harmonic mean is reported alongside for external
    comparison.
    """

    precision: float
    recall: float
    f1: float
    f1_harmonic: float
    matched: list[tuple[int, ...]]
    missed: list[tuple[int, ...]]
    spurious: list[tuple[int, ...]]

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "f1_harmonic": self.f1_harmonic,
            "matched": [list(c) for c in self.matched],
            "missed": [list(c) for c in self.missed],
            "spurious": [list(c) for c in self.spurious],
        }


def _directional(cols_a: set, cols_b: set) -> float:
    """Fraction of cols_a that appear in cols_b; 1.0 when both sides are
    empty, 0.0 when only cols_a is empty while cols_b is not."""
    if not cols_a:
        return 1.0 if not cols_b else 0.0
    return len(cols_a & cols_b) / len(cols_a)


def score(R_hat, R_true) -> ScoreReport:
    """Compare column sets (after deduplication) of estimate vs truth."""
    cols_hat = _columns(R_hat)
    cols_true = _columns(R_true)
    if cols_hat and cols_true and len(cols_hat[0]) != len(cols_true[0]):
        raise ValueError("row dimensions differ")
    set_hat = set(cols_hat)
    set_true = set(cols_true)
    precision = _directional(set_hat, set_true)
    recall = _directional(set_true, set_hat)
    f1 = math.sqrt(precision * recall)
    harmonic = (
        0.0
        if precision + recall == 0
        else 2 * precision * recall / (precision + recall)
    )
    return ScoreReport(
        precision=precision,
        recall=recall,
        f1=f1,
        f1_harmonic=harmonic,
        matched=sorted(set_hat & set_true),
        missed=sorted(set_true - set_hat),
        spurious=sorted(set_hat - set_true),
    )


def default_lambda_grid() -> list[float]:
    return [round(0.2 * k, 10) for k in range(21)]  # 0.0 .. 4.0


def default_exponent_grid() -> list[float]:
    return [round(0.1 * k, 10) for k in range(11)]  # 0.0 .. 1.0


@dataclass
class GridResult:
    best_lam: float
    best_b: float
    best_mean_f1: float
    table: list[dict]  # one row per (lam, b) with mean_f1


def grid_search(
    prepared: Sequence[tuple[PreparedPipeline, object]],
    lam_grid: Sequence[float] | None = None,
    b_grid: Sequence[float] | None = None,
    i_max: int | None = None,
) -> GridResult:
    """Exhaustive sweep of (lam, b); argmax of mean F1 across scenarios.

    `prepared` pairs a prepared pipeline with the ground-truth routing
    matrix for that scenario. Ties break toward smaller lam, then smaller
    b, so results are reproducible.
    """
    if not prepared:
        raise ValueError("grid search needs at least one scenario")
    lam_grid = default_lambda_grid() if lam_grid is None else list(lam_grid)
    b_grid = default_exponent_grid() if b_grid is None else list(b_grid)
    table = []
    best = None
    for lam in lam_grid:
        for b in b_grid:
            f1s = []
            for prep, truth in prepared:
                out = finish_pipeline(prep, lam=lam, weight_exponent=b, i_max=i_max)
                f1s.append(score(out.result, truth).f1)
            mean_f1 = float(np.mean(f1s))
            table.append({"lam": lam, "b": b, "mean_f1": mean_f1})
            key = (-mean_f1, lam, b)
            if best is None or key < best[0]:
                best = (key, lam, b, mean_f1)
    assert best is not None
    return GridResult(
        best_lam=best[1], best_b=best[2], best_mean_f1=best[3], table=table
    )


@dataclass
class CampaignConfig:
    """Sweep definition: topology x monitor counts x sample sizes x seeds."""

    topology: dict  # {"file": path} or {"random": {"nodes", "avg_degree", "seed"}}
    monitor_counts: list[int]
    sample_sizes: list[int]
    scenario_seeds: list[int]
    i_max_values: list[int]
    pipeline: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, obj: dict) -> "CampaignConfig":
        return cls(
            topology=obj["topology"],
            monitor_counts=[int(v) for v in obj["monitor_counts"]],
            sample_sizes=[int(v) for v in obj["sample_sizes"]],
            scenario_seeds=[int(v) for v in obj["scenario_seeds"]],
            i_max_values=[int(v) for v in obj.get("i_max_values", [3])],
            pipeline=obj.get("pipeline", {}),
        )

    def load_topology(self, base: Path | None = None) -> tuple[str, Topology]:
        if "file" in self.topology:
            path = Path(self.topology["file"])
            if base is not None and not path.is_absolute():
                path = base / path
            return path.stem, Topology.load(path)
        if "random" in self.topology:
            spec = self.topology["random"]
            topo = random_topology(
                int(spec["nodes"]),
                float(spec.get("avg_degree", 4.0)),
                int(spec.get("seed", 0)),
            )
            return f"random{spec['nodes']}", topo
        raise ValueError("topology must specify 'file' or 'random'")

    def cases(self) -> list[dict]:
        out = []
        for monitors in self.monitor_counts:
            for N in self.sample_sizes:
                for seed in self.scenario_seeds:
                    out.append(
                        {"monitors": monitors, "N": N, "seed": seed}
                    )
        return out


def _sample_seed(scenario_seed: int) -> int:
    return 100_000 + scenario_seed


def _run_case(args: tuple) -> dict:
    """One campaign case; module-level so process pools can dispatch it."""
    topo_json, topo_name, case, i_max_values, pipeline_overrides = args
    topo = Topology.from_json(topo_json)
    case_id = f"{topo_name}-m{case['monitors']}-N{case['N']}-s{case['seed']}"
    try:
        scenario = generate_scenario(topo, case["monitors"], seed=case["seed"])
        sample = sample_delays(scenario, case["N"], seed=_sample_seed(case["seed"]))
        # deep copy: the per-case seed must not leak into the shared config
        overrides = copy.deepcopy(pipeline_overrides)
        overrides.setdefault("test", {}).setdefault("rng_seed", case["seed"])
        config = PipelineConfig.from_json(overrides)
        links = scenario.link_distributions()
        n_paths = scenario.routing.n

        sparsity_rows = []
        for i in range(2, config.i_f + 1):
            rep = sparsity_report(scenario.routing, links, i)
            for metric, value in (
                ("supp_g_size", rep.supp_g_size),
                ("supp_f_size", rep.supp_f_size),
                ("density", rep.density),
                ("largest_set", rep.largest_set),
            ):
                sparsity_rows.append(
                    {"case": case_id, "order": i, "metric": metric, "value": value}
                )

        prepared = prepare_pipeline(sample, config, scenario=scenario)
        stage1_rows = []
        for i, B in sorted(prepared.history.items()):
            truth = true_common_support(scenario.routing, links, i)
            est = set(B.support_estimate())
            tp = len(est & truth)
            precision = tp / len(est) if est else (1.0 if not truth else 0.0)
            recall = tp / len(truth) if truth else 1.0
            stage1_rows.append(
                {"case": case_id, "order": i, "metric": "precision", "value": precision}
            )
            stage1_rows.append(
                {"case": case_id, "order": i, "metric": "recall", "value": recall}
            )

        case_rows = []
        results = {}
        for i_max in i_max_values:
            out = finish_pipeline(prepared, i_max=i_max)
            rep = score(out.result, scenario.routing)
            for metric, value in (
                ("precision", rep.precision),
                ("recall", rep.recall),
                ("f1", rep.f1),
                ("f1_harmonic", rep.f1_harmonic),
            ):
                case_rows.append(
                    {
                        "case": case_id,
                        "monitors": case["monitors"],
                        "n_paths": n_paths,
                        "N": case["N"],
                        "seed": case["seed"],
                        "i_max": i_max,
                        "metric": metric,
                        "value": value,
                    }
                )
            results[i_max] = {
                "score": rep.to_json(),
                "result": out.result.to_json(),
                "bounding": out.bounding.to_json(),
            }
        return {
            "case": case_id,
            "ok": True,
            "rows": case_rows,
            "stage1": stage1_rows,
            "sparsity": sparsity_rows,
            "bundle": {
                "case": case_id,
                "monitors": case["monitors"],
                "n_paths": n_paths,
                "N": case["N"],
                "seed": case["seed"],
                "results": results,
            },
        }
    except Exception as exc:  # recorded, campaign continues
        return {
            "case": case_id,
            "ok": False,
            "error": f"{type(exc).__name__}: {exc}",
            "trace": traceback.format_exc(),
        }


def _write_long_csv(path: Path, rows: list[dict], headers: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=headers)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def run_campaign(
    config: CampaignConfig,
    out_dir,
    jobs: int = 1,
    base: Path | None = None,
    render_figures: bool = True,
) -> dict:
    """Run every case, write cases.csv / stage1.csv / sparsity.csv, one JSON
    bundle per case, and (optionally) the summary figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    topo_name, topo = config.load_topology(base)
    topo_json = topo.to_json()
    tasks = [
        (topo_json, topo_name, case, config.i_max_values, config.pipeline)
        for case in config.cases()
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_case, tasks))
    else:
        outcomes = [_run_case(t) for t in tasks]
    outcomes.sort(key=lambda o: o["case"])

    case_rows, stage1_rows, sparsity_rows, errors = [], [], [], []
    bundles_dir = out / "cases"
    bundles_dir.mkdir(exist_ok=True)
    for outcome in outcomes:
        if not outcome["ok"]:
            errors.append({"case": outcome["case"], "error": outcome["error"]})
            continue
        case_rows.extend(outcome["rows"])
        stage1_rows.extend(outcome["stage1"])
        sparsity_rows.extend(outcome["sparsity"])
        with open(bundles_dir / f"{outcome['case']}.json", "w") as fh:
            json.dump(outcome["bundle"], fh, indent=2, sort_keys=True)
            fh.write("\n")

    _write_long_csv(
        out / "cases.csv",
        case_rows,
        ["case", "monitors", "n_paths", "N", "seed", "i_max", "metric", "value"],
    )
    _write_long_csv(out / "stage1.csv", stage1_rows, ["case", "order", "metric", "value"])
    _write_long_csv(
        out / "sparsity.csv", sparsity_rows, ["case", "order", "metric", "value"]
    )
    if errors:
        with open(out / "errors.json", "w") as fh:
            json.dump(errors, fh, indent=2, sort_keys=True)
            fh.write("\n")
    figure_paths = []
    if render_figures:
        from . import figures

        figure_paths = figures.render_campaign_figures(out)
    return {
        "cases": len(tasks),
        "failed": len(errors),
        "csv": ["cases.csv", "stage1.csv", "sparsity.csv"],
        "figures": [str(p.name) for p in figure_paths],
    }
