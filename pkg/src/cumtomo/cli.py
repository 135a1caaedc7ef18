"""Command-line front end: generate scenarios, run the inference modes,
score results, and drive campaigns and grid searches.

Every command is a pure function of (input files, flags, seed); re-running
with the same inputs reproduces byte-identical outputs apart from the
manifest timestamp. Exit codes: 0 on success, 1 on runtime failure, 2 on
usage or configuration errors.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .cumulants import DelaySample, NonzeroTestConfig
from .evaluate import CampaignConfig, grid_search, run_campaign, score
from .inference import (
    InferenceResult,
    infer_routing_exact,
    infer_routing_from_sample,
    oracle_from_ground_truth,
)
from .netmodel import Scenario, Topology, generate_scenario, sample_delays
from .sparse import PipelineConfig, prepare_pipeline, run_sparse_pipeline

SEED_ENV = "CUMTOMO_SEED"


class ConfigError(Exception):
    """Bad usage or configuration; maps to exit code 2."""


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}")


def _read_json(path: Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")


def _digest(paths: list[Path], args: dict) -> str:
    h = hashlib.sha256()
    for path in paths:
        h.update(str(path.name).encode())
        try:
            h.update(path.read_bytes())
        except FileNotFoundError:
            raise ConfigError(f"file not found: {path}")
    h.update(json.dumps(args, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _write_manifest(
    out_dir: Path, command: str, inputs: list[Path], args: dict, outputs: list[str]
) -> None:
    # the digest covers input file bytes and the flags that shape results;
    # output locations and internal callables stay out of it
    shown = {
        k: str(v) for k, v in sorted(args.items()) if k not in ("func",)
    }
    digest_args = {k: v for k, v in shown.items() if k != "out"}
    manifest = {
        "command": command,
        "version": __version__,
        "config_digest": _digest(inputs, digest_args),
        "args": shown,
        "outputs": sorted(outputs),
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(raw: str) -> Path:
    out = Path(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_generate(args: argparse.Namespace) -> int:
    topo_path = Path(args.topology)
    if not topo_path.exists():
        raise ConfigError(f"file not found: {topo_path}")
    obj = _read_json(topo_path)
    if "routing_matrix" not in obj and args.monitors is None:
        raise ConfigError("--monitors is required for a topology input")
    out = _out_dir(args.out)
    try:
        if "routing_matrix" in obj:
            # a ready scenario file: keep its paths, only draw the sample
            scenario = Scenario.from_json(obj)
        else:
            topo = Topology.from_json(obj)
            scenario = generate_scenario(topo, args.monitors, seed=args.seed)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{topo_path}: invalid input: {exc}")
    sample = sample_delays(scenario, args.samples, seed=args.sample_seed)
    scenario.save(out / "scenario.json")
    sample.to_csv(out / "sample.csv")
    _write_manifest(
        out,
        "generate",
        [topo_path],
        vars(args),
        ["scenario.json", "sample.csv"],
    )
    print(f"wrote scenario ({scenario.routing.n} paths, {scenario.routing.m} links) "
          f"and {sample.N}x{sample.n} sample to {out}")
    return 0


def _load_sample(path_str: str) -> DelaySample:
    path = Path(path_str)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        return DelaySample.from_csv(path)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _cmd_mia(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    inputs = []
    if args.exact:
        if not args.scenario:
            raise ConfigError("--exact requires --scenario")
        sc_path = Path(args.scenario)
        if not sc_path.exists():
            raise ConfigError(f"file not found: {sc_path}")
        inputs.append(sc_path)
        scenario = Scenario.from_json(_read_json(sc_path))
        oracle = oracle_from_ground_truth(
            scenario.routing, scenario.link_distributions()
        )
        result = infer_routing_exact(
            oracle, scenario.routing.n, scenario.routing.path_ids
        )
    else:
        if not args.sample:
            raise ConfigError("data mode requires --sample")
        inputs.append(Path(args.sample))
        sample = _load_sample(args.sample)
        if args.splits is not None:
            cfg = NonzeroTestConfig(
                method="split",
                M=args.splits,
                p_threshold=args.alpha,
                rng_seed=args.seed,
            )
        else:
            cfg = NonzeroTestConfig(
                method="bootstrap",
                M=args.resamples,
                p_threshold=args.alpha,
                rng_seed=args.seed,
            )
        result = infer_routing_from_sample(sample, cfg)
    result.save(out / "result.json")
    _write_manifest(out, "mia", inputs, vars(args), ["result.json"])
    print(f"reconstructed {len(result.accepted)} columns -> {out / 'result.json'}")
    return 0


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    obj = {}
    if args.config:
        obj = _read_json(Path(args.config))
    test = obj.setdefault("test", {})
    test.setdefault("rng_seed", args.seed)
    if args.lam is not None:
        obj["lam"] = args.lam
    if args.weight_exponent is not None:
        obj["weight_exponent"] = args.weight_exponent
    if args.i_max is not None:
        obj["i_max"] = args.i_max
    if args.ground_truth_cumulants:
        obj["use_true_cumulants"] = True
    try:
        return PipelineConfig.from_json(obj)
    except ValueError as exc:
        raise ConfigError(f"invalid pipeline config: {exc}")


def _cmd_sparse(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    config = _pipeline_config(args)
    inputs = []
    scenario = None
    sample = None
    if args.config:
        inputs.append(Path(args.config))
    if config.use_true_cumulants:
        if not args.scenario:
            raise ConfigError("--ground-truth-cumulants requires --scenario")
        sc_path = Path(args.scenario)
        inputs.append(sc_path)
        scenario = Scenario.from_json(_read_json(sc_path))
    else:
        if not args.sample:
            raise ConfigError("data mode requires --sample")
        inputs.append(Path(args.sample))
        sample = _load_sample(args.sample)
    pipeline = run_sparse_pipeline(sample, config, scenario=scenario)
    pipeline.result.save(out / "result.json")
    outputs = ["result.json", "bounding.json"]
    with open(out / "bounding.json", "w") as fh:
        json.dump(pipeline.bounding.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.dump_problem:
        pipeline.problem.spec().dump_coordinate(out / "problem.txt")
        outputs.append("problem.txt")
    _write_manifest(out, "sparse", inputs, vars(args), outputs)
    print(
        f"bounding topology: {len(pipeline.bounding.sets)} sets; "
        f"reconstructed {len(pipeline.result.accepted)} columns -> {out / 'result.json'}"
    )
    return 0


def _load_columns(path_str: str):
    path = Path(path_str)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    obj = _read_json(path)
    if "routing_matrix" in obj:
        return Scenario.from_json(obj).routing
    if "columns" in obj:
        return InferenceResult.from_json(obj)
    raise ConfigError(f"{path}: neither a scenario nor an inference result")


def _cmd_eval(args: argparse.Namespace) -> int:
    out = _out_dir(args.out)
    estimate = _load_columns(args.result)
    truth = _load_columns(args.truth)
    report = score(estimate, truth)
    with open(out / "score.json", "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        out, "eval", [Path(args.result), Path(args.truth)], vars(args), ["score.json"]
    )
    print(
        f"precision={report.precision:.4f} recall={report.recall:.4f} "
        f"f1={report.f1:.4f} -> {out / 'score.json'}"
    )
    return 0


def _cmd_campaign(args: argparse.Namespace) -> int:
    cfg_path = Path(args.config)
    obj = _read_json(cfg_path)
    try:
        config = CampaignConfig.from_json(obj)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{cfg_path}: invalid campaign config: {exc}")
    out = _out_dir(args.out)
    summary = run_campaign(
        config,
        out,
        jobs=args.jobs,
        base=cfg_path.parent,
        render_figures=not args.no_figures,
    )
    outputs = summary["csv"] + summary["figures"]
    _write_manifest(out, "campaign", [cfg_path], vars(args), outputs)
    print(
        f"{summary['cases']} cases ({summary['failed']} failed); "
        f"reports in {out}"
    )
    return 0 if summary["failed"] == 0 else 1


def _cmd_grid_search(args: argparse.Namespace) -> int:
    cfg_path = Path(args.config)
    obj = _read_json(cfg_path)
    out = _out_dir(args.out)
    try:
        topo_cfg = CampaignConfig(
            topology=obj["topology"],
            monitor_counts=[int(obj["monitors"])],
            sample_sizes=[int(obj["N"])],
            scenario_seeds=[int(s) for s in obj["scenario_seeds"]],
            i_max_values=[int(obj.get("i_max", 3))],
            pipeline=obj.get("pipeline", {}),
        )
    except KeyError as exc:
        raise ConfigError(f"{cfg_path}: missing key {exc}")
    topo_name, topo = topo_cfg.load_topology(cfg_path.parent)
    prepared = []
    for seed in topo_cfg.scenario_seeds:
        scenario = generate_scenario(topo, topo_cfg.monitor_counts[0], seed=seed)
        overrides = copy.deepcopy(topo_cfg.pipeline)
        overrides.setdefault("test", {}).setdefault("rng_seed", seed)
        config = PipelineConfig.from_json(overrides)
        if config.use_true_cumulants:
            sample = None
        else:
            sample = sample_delays(
                scenario, topo_cfg.sample_sizes[0], seed=100_000 + seed
            )
        prepared.append(
            (prepare_pipeline(sample, config, scenario=scenario), scenario.routing)
        )
    result = grid_search(
        prepared,
        lam_grid=obj.get("lam_grid"),
        b_grid=obj.get("b_grid"),
        i_max=topo_cfg.i_max_values[0],
    )
    with open(out / "grid.csv", "w", newline="") as fh:
        fh.write("lam,b,mean_f1\n")
        for row in result.table:
            fh.write(f"{row['lam']},{row['b']},{row['mean_f1']!r}\n")
    with open(out / "best.json", "w") as fh:
        json.dump(
            {
                "lam": result.best_lam,
                "b": result.best_b,
                "mean_f1": result.best_mean_f1,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    _write_manifest(out, "grid-search", [cfg_path], vars(args), ["grid.csv", "best.json"])
    print(
        f"best lam={result.best_lam} b={result.best_b} "
        f"mean_f1={result.best_mean_f1:.4f} -> {out / 'best.json'}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cumtomo",
        description=(
            "Routing-topology inference from end-to-end delay cumulants: "
            "synthetic scenario generation, exact and data-driven "
            "reconstruction, the sparse three-stage pipeline, scoring, and "
            "campaign reports."
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    seed_help = f"root RNG seed (default from ${SEED_ENV}, else 0)"

    p = sub.add_parser("generate", help="generate a scenario and delay sample")
    p.add_argument(
        "--topology",
        required=True,
        help="topology JSON file (a scenario JSON is also accepted and sampled as-is)",
    )
    p.add_argument(
        "--monitors",
        type=int,
        default=None,
        help="number of monitor nodes (required for topology inputs)",
    )
    p.add_argument("--samples", type=int, required=True, help="number of delay observations")
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument(
        "--sample-seed",
        type=int,
        default=None,
        help="seed for the delay draws (default: seed + 100000)",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("mia", help="full-order routing inference (exact or data mode)")
    p.add_argument("--scenario", help="scenario JSON (exact mode input)")
    p.add_argument("--sample", help="sample CSV (data mode input)")
    p.add_argument("--exact", action="store_true", help="use analytic cumulants from the scenario")
    p.add_argument("--data", action="store_true", help="estimate cumulants from the sample")
    p.add_argument("--splits", type=int, default=None, help="split resampling with this many splits")
    p.add_argument("--resamples", type=int, default=50, help="bootstrap resample count (data mode default)")
    p.add_argument("--alpha", type=float, default=0.01, help="p-value threshold for the nonzero test")
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_mia)

    p = sub.add_parser("sparse", help="three-stage sparse routing inference")
    p.add_argument("--sample", help="sample CSV (data mode input)")
    p.add_argument("--scenario", help="scenario JSON (required with --ground-truth-cumulants)")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--lam", type=float, default=None, help="override the L1 weight scale")
    p.add_argument("--weight-exponent", type=float, default=None, help="override the dependence-count exponent")
    p.add_argument("--i-max", dest="i_max", type=int, default=None, help="override the largest estimated order")
    p.add_argument(
        "--ground-truth-cumulants",
        action="store_true",
        help="use analytic cumulants and the equality-constrained solver",
    )
    p.add_argument("--dump-problem", action="store_true", help="write the assembled problem in coordinate form")
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_sparse)

    p = sub.add_parser("eval", help="score a result against ground truth")
    p.add_argument("--result", required=True, help="inference result JSON (or scenario JSON)")
    p.add_argument("--truth", required=True, help="scenario JSON (or inference result JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("campaign", help="run a case-study sweep and write reports")
    p.add_argument("--config", required=True, help="campaign config JSON")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes for cases")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_campaign)

    p = sub.add_parser("grid-search", help="sweep (lam, b) and report the best pair")
    p.add_argument("--config", required=True, help="grid-search config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_grid_search)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "seed", None) is None and hasattr(args, "seed"):
            args.seed = _default_seed()
        if getattr(args, "sample_seed", None) is None and hasattr(args, "sample_seed"):
            args.sample_seed = args.seed + 100_000
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
