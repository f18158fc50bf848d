"""Command-line entry point.

Subcommands mirror the pipeline stages: gen-scenario, run, analyze, infer,
evaluate, detect-sync, and a `pipeline` super-command chaining them all.
Every command requires an explicit seed (never the wall clock), writes its
outputs plus a manifest recording the config hash, seed, and tool version,
and is byte-deterministic at any worker count (KASHF_WORKERS caps
parallelism).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__, analytics, report
from .analytics import AnalyticsError
from .ecosystem import (
    Scenario,
    ScenarioConfig,
    ScenarioError,
    generate_scenario,
    load_scenario,
    save_scenario,
)
from .experiment import (
    Dataset,
    DatasetError,
    ExperimentError,
    load_dataset,
    run_campaign,
    save_dataset,
)
from .forest import ForestError, ForestParams
from .inference import (
    InferenceError,
    evaluate,
    infer_all,
    load_report,
    save_report,
)
from .syncdetect import detect_cookie_sync_evidence, iter_logs, log_record_to_json

_USER_ERRORS = (
    ScenarioError,
    ExperimentError,
    DatasetError,
    InferenceError,
    AnalyticsError,
    ForestError,
    OSError,
    json.JSONDecodeError,
    ValueError,
)


def _workers() -> int:
    raw = os.environ.get("KASHF_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _scenario_config(data: dict) -> ScenarioConfig:
    cfg = dict(data)
    if "latency_ms_range" in cfg:
        cfg["latency_ms_range"] = tuple(cfg["latency_ms_range"])
    for key in ("tracker_orgs", "bidder_orgs"):
        if key in cfg:
            cfg[key] = tuple(cfg[key])
    if cfg.get("sharing_edges") is not None:
        cfg["sharing_edges"] = tuple(tuple(e) for e in cfg["sharing_edges"])
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(cfg) - known
    if unknown:
        raise ScenarioError(f"unknown scenario config keys: {sorted(unknown)}")
    return ScenarioConfig(**cfg)


def _config_hash(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()


def _write_manifest(out_dir: Path, seed: int, config_payload: dict) -> None:
    files = {}
    for path in sorted(out_dir.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            files[str(path.relative_to(out_dir))] = digest
    manifest = {
        "config_hash": _config_hash(config_payload),
        "seed": seed,
        "version": __version__,
        "files": files,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8"
    )


def _forest_params(args) -> ForestParams:
    return ForestParams(n_trees=args.trees)


# --- subcommand implementations ----------------------------------------------

def cmd_gen_scenario(args) -> int:
    raw = _load_json(args.config)
    config = _scenario_config(raw.get("scenario", raw))
    scenario = generate_scenario(config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_scenario(scenario, out / "scenario.json")
    _write_manifest(out, args.seed, {"scenario": dataclasses.asdict(config)})
    print(f"scenario written to {out / 'scenario.json'}")
    return 0


def _run_into(
    scenario: Scenario, out: Path, n: int, seed: int,
    noise_free: bool, block_set_size: int,
) -> Dataset:
    out.mkdir(parents=True, exist_ok=True)
    logs_path = out / "logs.jsonl"
    with open(logs_path, "w", encoding="utf-8") as fh:
        def sink(rec):
            fh.write(log_record_to_json(rec))
            fh.write("\n")

        dataset = run_campaign(
            scenario,
            n,
            seed,
            noise_free=noise_free,
            block_set_size=block_set_size,
            workers=_workers(),
            log_sink=sink,
        )
    save_dataset(dataset, out / "dataset.jsonl")
    return dataset


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    out = Path(args.out)
    _run_into(scenario, out, args.experiments, args.seed,
              args.noise_free, args.block_set_size)
    _write_manifest(
        out,
        args.seed,
        {
            "scenario_file": Path(args.scenario).name,
            "experiments": args.experiments,
            "noise_free": args.noise_free,
            "block_set_size": args.block_set_size,
        },
    )
    print(f"{args.experiments} experiments written to {out}")
    return 0


def _analyze_into(dataset: Dataset, out: Path, include_zero_bids: bool) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    records = dataset.records
    no_intent = [r for r in records if not r.spec.intent]
    intent = [r for r in records if r.spec.intent]
    bidders = dataset.bidders

    medians = analytics.median_cpm_table(no_intent or records, bidders,
                                         include_zero_bids)
    report.write_table_csv(medians, out / "medians_no_intent.csv")
    (out / "medians_no_intent.txt").write_text(
        report.format_table_text(medians, "Median CPM (USD), no-intent personas"),
        encoding="utf-8",
    )
    report.fig_table_heatmap(
        medians, out / "medians_no_intent.png",
        "Median CPM by persona and bidder (no intent)", "USD CPM",
    )

    summary: dict = {"bidders": list(bidders), "n_records": len(records)}
    if no_intent and intent:
        ratios = analytics.intent_ratio_table(no_intent, intent, bidders,
                                              include_zero_bids)
        report.write_table_csv(ratios, out / "intent_ratio.csv")
        (out / "intent_ratio.txt").write_text(
            report.format_table_text(ratios, "Intent / no-intent median bid ratio"),
            encoding="utf-8",
        )
        report.fig_table_heatmap(
            ratios, out / "intent_ratio.png",
            "Intent to no-intent bid ratio", "ratio",
        )

    winning = analytics.winning_bid_table(no_intent or records, bidders)
    report.write_table_csv(winning, out / "winning_bids_no_intent.csv")
    (out / "winning_bids_no_intent.txt").write_text(
        report.format_table_text(winning, "Median winning CPM (USD), no-intent personas"),
        encoding="utf-8",
    )

    zeros = analytics.zero_bid_stats(records, bidders)
    report.write_zero_bids_csv(zeros, out / "zero_bids.csv")
    (out / "zero_bids.txt").write_text(
        report.format_zero_bids_text(zeros), encoding="utf-8"
    )
    report.fig_zero_bids(zeros, out / "zero_bids.png")

    summary["zero_bids"] = {
        "overall_pct": zeros.overall.pct_total,
        "overall_pct_no_intent": zeros.overall.pct_no_intent,
        "overall_pct_intent": zeros.overall.pct_intent,
        "intent_significant": zeros.overall.significant,
        "per_bidder_pct": {
            r.bidder: r.pct_total for r in zeros.per_bidder
        },
    }
    (out / "analysis.json").write_text(
        json.dumps(summary, sort_keys=True, indent=1), encoding="utf-8"
    )
    return summary


def cmd_analyze(args) -> int:
    dataset = load_dataset(args.dataset)
    if not dataset.records:
        raise AnalyticsError("dataset is empty")
    out = Path(args.out)
    _analyze_into(dataset, out, args.include_zero_bids)
    _write_manifest(
        out, 0,
        {"dataset": Path(args.dataset).name, "include_zero_bids": args.include_zero_bids},
    )
    print(f"analysis written to {out}")
    return 0


def _infer_into(
    dataset: Dataset, out: Path, top_k: int, folds: int,
    params: ForestParams, seed: int, include_zero_bids: bool,
    bidders: list[str] | None,
):
    out.mkdir(parents=True, exist_ok=True)
    if bidders:
        missing = [b for b in bidders if b not in dataset.bidders]
        if missing:
            raise InferenceError(f"bidder {missing[0]!r} not present in dataset")
        dataset = Dataset(
            records=dataset.records,
            trackers=dataset.trackers,
            bidders=tuple(bidders),
        )
    inference_report = infer_all(
        dataset, top_k=top_k, params=params, seed=seed, folds=folds,
        include_zero_bids=include_zero_bids,
    )
    save_report(inference_report, out / "report.json")
    report.write_accuracy_csv(inference_report, out / "accuracy.csv")
    report.write_influence_csv(inference_report, out / "influence.csv")
    report.fig_importance(inference_report, out / "importance.png")
    report.fig_accuracy(inference_report, out / "accuracy.png")
    return inference_report


def cmd_infer(args) -> int:
    dataset = load_dataset(args.dataset)
    out = Path(args.out)
    _infer_into(
        dataset, out, args.top_k, args.folds, _forest_params(args),
        args.seed, args.include_zero_bids, args.bidder,
    )
    _write_manifest(
        out, args.seed,
        {
            "dataset": Path(args.dataset).name,
            "top_k": args.top_k,
            "folds": args.folds,
            "trees": args.trees,
            "include_zero_bids": args.include_zero_bids,
        },
    )
    print(f"inference written to {out}")
    return 0


def _evaluate_into(inference_report, scenario: Scenario, logs_path: Path, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    evidence = detect_cookie_sync_evidence(iter_logs(logs_path))
    metrics = evaluate(inference_report, scenario.sharing_graph, set(evidence))
    report.write_sync_pairs_csv(dict(evidence), out / "sync_pairs.csv")
    report.write_influence_csv(
        inference_report, out / "influence_validated.csv", metrics
    )
    report.fig_evaluation(metrics, out / "evaluation.png")
    payload = {
        "precision_at_k": metrics.precision_at_k,
        "per_bidder_precision": metrics.per_bidder_precision,
        "recall": metrics.recall,
        "recovered_client_side": metrics.recovered_client_side,
        "recovered_server_side": metrics.recovered_server_side,
        "server_side_recovered": metrics.server_side_recovered,
        "n_sync_pairs": len(metrics.sync_pairs),
        "ground_truth_edges": len(scenario.sharing_graph),
    }
    (out / "metrics.json").write_text(
        json.dumps(payload, sort_keys=True, indent=1), encoding="utf-8"
    )
    return metrics


def cmd_evaluate(args) -> int:
    inference_report = load_report(args.report)
    scenario = load_scenario(args.scenario)
    out = Path(args.out)
    _evaluate_into(inference_report, scenario, Path(args.logs), out)
    _write_manifest(
        out, 0,
        {"report": Path(args.report).name, "scenario": Path(args.scenario).name},
    )
    print(f"evaluation written to {out}")
    return 0


def cmd_detect_sync(args) -> int:
    evidence = detect_cookie_sync_evidence(iter_logs(args.logs), min_len=args.min_len)
    print("org_a,org_b,evidence_count")
    for (a, b), count in sorted(evidence.items()):
        print(f"{a},{b},{count}")
    return 0


def cmd_pipeline(args) -> int:
    raw = _load_json(args.config)
    scenario_cfg = _scenario_config(raw.get("scenario", {}))
    n = args.experiments if args.experiments is not None else raw.get("experiments", 1000)
    top_k = args.top_k if args.top_k is not None else raw.get("top_k", 3)
    folds = args.folds if args.folds is not None else raw.get("folds", 10)
    trees = args.trees if args.trees is not None else raw.get("trees", 100)
    noise_free = args.noise_free or raw.get("noise_free", False)
    block_set_size = (
        args.block_set_size
        if args.block_set_size is not None
        else raw.get("block_set_size", 1)
    )
    include_zeros = (
        args.include_zero_bids
        if args.include_zero_bids is not None
        else raw.get("include_zero_bids", True)
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenario = generate_scenario(scenario_cfg, args.seed)
    save_scenario(scenario, out / "scenario.json")

    dataset = _run_into(scenario, out / "run", n, args.seed, noise_free, block_set_size)
    # Median tables always exclude zero bids (analyzed separately); the
    # include-zero-bids switch governs inference labeling.
    _analyze_into(dataset, out / "analysis", include_zero_bids=False)
    inference_report = _infer_into(
        dataset, out / "inference", top_k, folds,
        ForestParams(n_trees=trees), args.seed, include_zeros, None,
    )
    _evaluate_into(
        inference_report, scenario, out / "run" / "logs.jsonl", out / "evaluation"
    )
    _write_manifest(
        out, args.seed,
        {
            "scenario": dataclasses.asdict(scenario_cfg),
            "experiments": n,
            "top_k": top_k,
            "folds": folds,
            "trees": trees,
            "noise_free": noise_free,
            "block_set_size": block_set_size,
            "include_zero_bids": include_zeros,
        },
    )
    print(f"pipeline complete: {out}")
    return 0


# --- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kashf",
        description="Header-bidding ecosystem simulator and tracker-influence inference",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenario", help="generate a seeded scenario file")
    p.add_argument("--config", help="JSON config (scenario section or bare)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_scenario)

    p = sub.add_parser("run", help="run a campaign against a scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--experiments", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--noise-free", action="store_true")
    p.add_argument("--block-set-size", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="bid tables and zero-bid statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--include-zero-bids", action=argparse.BooleanOptionalAction, default=False,
        help="include zero bids in median tables (default: excluded)",
    )
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("infer", help="per-bidder tracker-influence inference")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--bidder", action="append", help="restrict to this bidder (repeatable)")
    p.add_argument(
        "--include-zero-bids", action=argparse.BooleanOptionalAction, default=True,
        help="include zero bids as labeled rows (default: included)",
    )
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="cross-reference a report against ground truth")
    p.add_argument("--report", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--logs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("detect-sync", help="cookie-sync detection over a request log")
    p.add_argument("--logs", required=True)
    p.add_argument("--min-len", type=int, default=8)
    p.set_defaults(func=cmd_detect_sync)

    p = sub.add_parser("pipeline", help="gen-scenario + run + analyze + infer + evaluate")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--experiments", type=int)
    p.add_argument("--top-k", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--trees", type=int)
    p.add_argument("--noise-free", action="store_true")
    p.add_argument("--block-set-size", type=int)
    p.add_argument(
        "--include-zero-bids", action=argparse.BooleanOptionalAction, default=None
    )
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        sys.stderr.write(
            json.dumps({"error": str(exc), "type": type(exc).__name__}) + "\n"
        )
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
