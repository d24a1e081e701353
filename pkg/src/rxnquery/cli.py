"""Command-line interface.

Exit codes: 0 success, 2 configuration/usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import cypher
from .graph import build_graph, load_graph, save_graph
from .ingest import IngestError, filter_and_sample, load_reactions, normalize_and_dedupe, save_records
from .runner import ConfigError, RunConfig, aggregate, run_experiment, score_queries_file
from .tasks import TaskError, generate_suite, save_suite

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rxnquery",
        description="Text-to-Cypher retrosynthesis retrieval benchmark harness.",
    )
    parser.add_argument("--log-level", default="WARNING", help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load, clean, filter, and sample raw reactions")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--output", required=True, help="normalized records JSONL")
    p.add_argument("--errors-out", default=None, help="error report JSONL")
    p.add_argument("--sample-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-molecule-count", type=int, default=None)

    p = sub.add_parser("build-graph", help="build the knowledge graph from records")
    p.add_argument("--records", required=True, help="normalized records JSONL")
    p.add_argument("--output", required=True, help="graph JSONL")

    p = sub.add_parser("gen-suite", help="generate benchmark instances with gold answers")
    p.add_argument("--graph", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--single-per-type", type=int, default=10)
    p.add_argument("--multi-per-type", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("run", help="run an experiment")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--graph", dest="graph_path")
    p.add_argument("--suite", dest="suite_path")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--strategies", help="comma-separated subset, e.g. ZS,1S-D-S")
    p.add_argument("--versions", help="comma-separated subset, e.g. 1,3,5")
    p.add_argument("--provider", choices=("gold-echo", "scripted", "http"))
    p.add_argument("--script", dest="script_path")
    p.add_argument("--cove", dest="cove_enabled", action="store_true", default=None)
    p.add_argument("--no-cove", dest="cove_enabled", action="store_false")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--concurrency", type=int, default=None)

    p = sub.add_parser("aggregate", help="aggregate a run directory into report tables")
    p.add_argument("--run-dir", required=True)

    p = sub.add_parser("score-file", help="score externally produced queries offline")
    p.add_argument("--graph", required=True)
    p.add_argument("--suite", required=True)
    p.add_argument("--queries", required=True, help="JSONL of {id, query}")
    p.add_argument("--out", default=None)

    p = sub.add_parser("explain", help="validate a query without executing it")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--query")
    group.add_argument("--query-file")
    return parser


def _cmd_ingest(args) -> int:
    result = load_reactions(args.input, format=args.format)
    if args.errors_out:
        result.write_error_report(args.errors_out)
    records = normalize_and_dedupe(result.records)
    records = filter_and_sample(
        records,
        sample_size=args.sample_size,
        seed=args.seed,
        min_molecule_count=args.min_molecule_count,
    )
    save_records(records, args.output)
    print(
        f"loaded {len(result.records)} rows ({len(result.errors)} malformed), "
        f"kept {len(records)} -> {args.output}"
    )
    return 0


def _cmd_build_graph(args) -> int:
    result = load_reactions(args.records, format="jsonl")
    graph = build_graph(result.records)
    save_graph(graph, args.output)
    print(
        f"graph: {len(graph.molecules)} molecules, {len(graph.reactions)} reactions, "
        f"{len(graph.edges)} edges -> {args.output}"
    )
    return 0


def _cmd_gen_suite(args) -> int:
    graph = load_graph(args.graph)
    suite = generate_suite(
        graph,
        single_per_type=args.single_per_type,
        multi_per_type=args.multi_per_type,
        seed=args.seed,
    )
    save_suite(suite, args.output)
    print(f"suite: {len(suite)} instances -> {args.output}")
    return 0


def _cmd_run(args) -> int:
    overrides = {
        key: value
        for key, value in (
            ("graph_path", args.graph_path),
            ("suite_path", args.suite_path),
            ("output_dir", args.output_dir),
            ("provider", args.provider),
            ("script_path", args.script_path),
            ("cove_enabled", args.cove_enabled),
            ("seed", args.seed),
            ("concurrency", args.concurrency),
        )
        if value is not None
    }
    if args.strategies:
        overrides["strategies"] = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if args.versions:
        overrides["versions"] = [int(v) for v in args.versions.split(",") if v.strip()]
    if args.config:
        config = RunConfig.from_file(args.config, overrides)
    else:
        required = {"graph_path", "suite_path", "output_dir"}
        if not required <= set(overrides):
            raise ConfigError("run needs --config or all of --graph/--suite/--out")
        config = RunConfig(**overrides)
    problems = config.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    out_dir = run_experiment(config)
    aggregate(out_dir)
    print(f"run complete -> {out_dir}")
    return 0


def _cmd_aggregate(args) -> int:
    outputs = aggregate(args.run_dir)
    for name, path in outputs.items():
        print(f"{name}: {path}")
    return 0


def _cmd_score_file(args) -> int:
    summary = score_queries_file(args.graph, args.suite, args.queries, args.out)
    print(f"scored {summary['scored']} queries, mean F1 {summary['mean_f1']:.4f}")
    return 0


def _cmd_explain(args) -> int:
    if args.query is not None:
        text = args.query
    else:
        with open(args.query_file, "r", encoding="utf-8") as fh:
            text = fh.read()
    report = cypher.explain(text)
    if report.executable:
        print("executable")
        return 0
    for diag in report.diagnostics:
        print(json.dumps(diag.to_dict()))
    return 1


_COMMANDS = {
    "ingest": _cmd_ingest,
    "build-graph": _cmd_build_graph,
    "gen-suite": _cmd_gen_suite,
    "run": _cmd_run,
    "aggregate": _cmd_aggregate,
    "score-file": _cmd_score_file,
    "explain": _cmd_explain,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING))
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, IngestError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TaskError, cypher.ExecutionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
