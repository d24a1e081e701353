from __future__ import annotations

import json

import pytest

from rxnquery.cli import main as cli_main
from rxnquery.graph import save_graph
from rxnquery.runner import (
    ConfigError,
    RunConfig,
    aggregate,
    jsonable_value,
    rows_to_paths,
    run_experiment,
    score_queries_file,
)
from rxnquery.graph import NodeRef
from rxnquery.tasks import generate_suite, save_suite


@pytest.fixture
def small_setup(tmp_path, chain_graph):
    graph_path = tmp_path / "graph.jsonl"
    suite_path = tmp_path / "suite.jsonl"
    save_graph(chain_graph, graph_path)
    suite = generate_suite(chain_graph, single_per_type=2, multi_per_type=2, seed=0)
    save_suite(suite, suite_path)
    return graph_path, suite_path, suite


def make_config(tmp_path, graph_path, suite_path, **kwargs) -> RunConfig:
    defaults = dict(
        graph_path=str(graph_path),
        suite_path=str(suite_path),
        output_dir=str(tmp_path / "run"),
        strategies=["ZS"],
        versions=[1],
        provider="gold-echo",
        record_wall_time=False,
    )
    defaults.update(kwargs)
    return RunConfig(**defaults)


def read_records(out_dir) -> list[dict]:
    with open(out_dir / "records.jsonl", "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def test_config_from_file_with_overrides(tmp_path):
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps(
            {"graph_path": "g", "suite_path": "s", "output_dir": "o", "seed": 4}
        ),
        encoding="utf-8",
    )
    config = RunConfig.from_file(config_path, {"seed": 9, "provider": "scripted"})
    assert config.seed == 9
    assert config.provider == "scripted"

    config_path.write_text(json.dumps({"graph_path": "g", "nope": 1}), encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.from_file(config_path)


def test_validate_reports_problems(tmp_path):
    config = RunConfig(
        graph_path=str(tmp_path / "missing.jsonl"),
        suite_path=str(tmp_path / "missing2.jsonl"),
        output_dir=str(tmp_path),
        strategies=["BOGUS"],
        concurrency=0,
    )
    problems = config.validate()
    assert len(problems) >= 3


def test_gold_echo_run_scores_perfect(tmp_path, small_setup):
    graph_path, suite_path, suite = small_setup
    config = make_config(tmp_path, graph_path, suite_path, strategies=["ZS", "1S-S"], versions=[1, 3])
    out_dir = run_experiment(config)
    records = read_records(out_dir)
    assert len(records) == len(suite) * 2 * 2
    for rec in records:
        scores = rec["retrieval_scores"]
        if rec["setting"] == "multi_step":
            assert scores["exact_f1"] == 1.0 and scores["ppr"] == 1.0
        else:
            assert scores["f1"] == 1.0
        assert rec["error_label"] is None
        assert rec["executed"]


def test_resume_skips_existing(tmp_path, small_setup):
    graph_path, suite_path, suite = small_setup
    config = make_config(tmp_path, graph_path, suite_path, versions=[1, 2])
    partial = make_config(tmp_path, graph_path, suite_path, versions=[1])
    out_dir = run_experiment(partial)
    first = read_records(out_dir)
    run_experiment(config)
    combined = read_records(out_dir)
    assert len(first) == len(suite)
    assert len(combined) == len(suite) * 2
    assert combined[: len(first)] == first  # resumed run appended, never rewrote


def test_aggregate_outputs(tmp_path, small_setup):
    graph_path, suite_path, _ = small_setup
    config = make_config(tmp_path, graph_path, suite_path)
    out_dir = run_experiment(config)
    outputs = aggregate(out_dir)
    summary = outputs["summary_csv"].read_text(encoding="utf-8")
    assert summary.splitlines()[0] == "task_type,strategy,version,metric,mean,std,n"
    assert "f1" in summary
    taxonomy = outputs["taxonomy_csv"].read_text(encoding="utf-8")
    assert "invalid_rate" in taxonomy
    # aggregation is a pure fold: running it twice is byte-identical
    again = aggregate(out_dir)
    assert again["summary_csv"].read_text(encoding="utf-8") == summary


def test_aggregate_single_record_stats(tmp_path, small_setup):
    graph_path, suite_path, suite = small_setup
    config = make_config(tmp_path, graph_path, suite_path)
    out_dir = run_experiment(config)
    aggregate(out_dir)
    rows = json.loads((out_dir / "summary.json").read_text(encoding="utf-8"))
    singles = [r for r in rows if r["n"] == 2 and r["metric"] == "f1"]
    assert singles
    assert all(r["std"] == 0.0 for r in singles)  # identical perfect scores


def test_aggregate_empty_dir_errors(tmp_path):
    with pytest.raises(ConfigError):
        aggregate(tmp_path)


def test_score_queries_file_gold_closure(tmp_path, small_setup):
    graph_path, suite_path, suite = small_setup
    queries_path = tmp_path / "queries.jsonl"
    with open(queries_path, "w", encoding="utf-8") as fh:
        for inst in suite:
            fh.write(json.dumps({"id": inst.id, "query": inst.gold_cypher}) + "\n")
    summary = score_queries_file(graph_path, suite_path, queries_path, tmp_path / "scores.json")
    assert summary["scored"] == len(suite)
    assert summary["mean_f1"] == 1.0


def test_rows_to_paths_handles_shapes():
    rows = [
        {"reaction_nodes": [NodeRef("Reaction", "R1"), NodeRef("Reaction", "R2")]},
        {"ids": ["R3", "R4"]},
    ]
    assert rows_to_paths(rows) == [["R1", "R2"], ["R3", "R4"]]
    assert rows_to_paths([{"a": 1, "ids": ["R1"]}]) == [["R1"]]


def test_jsonable_value_nested():
    value = {"nodes": [NodeRef("Molecule", "CCO")], "n": 3}
    assert jsonable_value(value) == {"nodes": ["CCO"], "n": 3}


# -- CLI ------------------------------------------------------------------------


def test_cli_explain_executable(capsys):
    code = cli_main(["explain", "--query", "MATCH (m:Molecule) RETURN m.name"])
    assert code == 0
    assert "executable" in capsys.readouterr().out


def test_cli_explain_invalid(capsys):
    code = cli_main(["explain", "--query", "MATCH (m:Molecule RETURN m"])
    assert code == 1
    out = capsys.readouterr().out
    assert "syntax-error" in out


def test_cli_run_without_credentials_is_config_error(tmp_path, small_setup, capsys):
    graph_path, suite_path, _ = small_setup
    code = cli_main(
        [
            "run",
            "--graph",
            str(graph_path),
            "--suite",
            str(suite_path),
            "--out",
            str(tmp_path / "run"),
            "--provider",
            "http",
        ]
    )
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_cli_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as err:
        cli_main(["frobnicate"])
    assert err.value.code == 2


def test_cli_pipeline_end_to_end(tmp_path, capsys):
    from rxnquery.ingest import save_records
    from rxnquery.synth import make_reaction_records

    raw = tmp_path / "raw.jsonl"
    save_records(make_reaction_records(150, seed=2), raw)
    assert cli_main(["ingest", "--input", str(raw), "--format", "jsonl", "--output", str(tmp_path / "clean.jsonl")]) == 0
    assert cli_main(["build-graph", "--records", str(tmp_path / "clean.jsonl"), "--output", str(tmp_path / "graph.jsonl")]) == 0
    assert (
        cli_main(
            [
                "gen-suite",
                "--graph",
                str(tmp_path / "graph.jsonl"),
                "--output",
                str(tmp_path / "suite.jsonl"),
                "--single-per-type",
                "2",
                "--multi-per-type",
                "2",
            ]
        )
        == 0
    )
    assert (
        cli_main(
            [
                "run",
                "--graph",
                str(tmp_path / "graph.jsonl"),
                "--suite",
                str(tmp_path / "suite.jsonl"),
                "--out",
                str(tmp_path / "run"),
                "--provider",
                "gold-echo",
                "--strategies",
                "ZS",
                "--versions",
                "1",
            ]
        )
        == 0
    )
    assert (tmp_path / "run" / "summary.csv").exists()
    assert cli_main(["aggregate", "--run-dir", str(tmp_path / "run")]) == 0


def test_gold_echo_with_cove_enabled(tmp_path, small_setup):
    graph_path, suite_path, suite = small_setup
    config = make_config(tmp_path, graph_path, suite_path, cove_enabled=True)
    out_dir = run_experiment(config)
    for rec in read_records(out_dir):
        assert rec["cove"]["terminal_status"] == "valid"
        assert rec["cove"]["corrections"] == 0
        assert not any(a["direction_fixed"] for a in rec["cove"]["attempts"])
        scores = rec["retrieval_scores"]
        assert scores.get("f1", scores.get("exact_f1")) == 1.0


def test_scripted_reversed_arrow_with_cove(tmp_path, chain_graph):
    from rxnquery.graph import save_graph as _save_graph
    from rxnquery.tasks import generate_suite as _gen, save_suite as _save_suite

    graph_path = tmp_path / "g.jsonl"
    suite_path = tmp_path / "s.jsonl"
    _save_graph(chain_graph, graph_path)
    suite = [
        inst
        for inst in _gen(chain_graph, single_per_type=1, multi_per_type=1, seed=0)
        if inst.task_type == "product_identification_retro"
    ]
    _save_suite(suite, suite_path)
    (instance,) = suite
    reversed_query = instance.gold_cypher.replace("<-[:PRODUCES]-", "-[:PRODUCES]->")
    script = tmp_path / "script.jsonl"
    script.write_text(
        json.dumps({"reply": f"```cypher\n{reversed_query}\n```"}) + "\n" + json.dumps({"reply": "OK"}) + "\n",
        encoding="utf-8",
    )
    config = make_config(
        tmp_path, graph_path, suite_path, provider="scripted", script_path=str(script), cove_enabled=True
    )
    out_dir = run_experiment(config)
    (record,) = read_records(out_dir)
    assert record["cove"]["attempts"][0]["direction_fixed"]
    assert record["retrieval_scores"]["f1"] == 1.0
    assert record["error_label"] is None


def test_provider_outage_records_errored_and_run_continues(tmp_path, small_setup):
    graph_path, suite_path, suite = small_setup
    script = tmp_path / "empty_script.jsonl"
    script.write_text("", encoding="utf-8")
    config = make_config(
        tmp_path, graph_path, suite_path, provider="scripted", script_path=str(script)
    )
    out_dir = run_experiment(config)
    records = read_records(out_dir)
    assert len(records) == len(suite)  # errored records still counted
    assert all(not r["executed"] for r in records)


def test_concurrent_run_matches_sequential(tmp_path, small_setup):
    graph_path, suite_path, _ = small_setup
    sequential = make_config(
        tmp_path, graph_path, suite_path, output_dir=str(tmp_path / "seq"), concurrency=1
    )
    parallel = make_config(
        tmp_path, graph_path, suite_path, output_dir=str(tmp_path / "par"), concurrency=4
    )
    a = run_experiment(sequential) / "records.jsonl"
    b = run_experiment(parallel) / "records.jsonl"
    assert a.read_bytes() == b.read_bytes()


def test_imperfect_model_populates_taxonomy(tmp_path, chain_graph):
    """A scripted model making characteristic mistakes lands in the taxonomy."""
    from rxnquery.graph import save_graph as _save_graph
    from rxnquery.tasks import generate_suite as _gen, save_suite as _save_suite

    graph_path = tmp_path / "g.jsonl"
    suite_path = tmp_path / "s.jsonl"
    _save_graph(chain_graph, graph_path)
    suite = _gen(chain_graph, single_per_type=1, multi_per_type=1, seed=0)
    wanted = {"product_identification_retro", "multi_step_precursor_discovery"}
    suite = [inst for inst in suite if inst.task_type in wanted]
    _save_suite(suite, suite_path)

    replies = []
    for inst in suite:
        if inst.task_type == "product_identification_retro":
            # drops the reactant binding entirely
            target = inst.params["target"]
            replies.append(
                "```cypher\n"
                f'MATCH (t:Molecule {{name: "{target}"}})<-[:PRODUCES]-(r:Reaction)\n'
                "OPTIONAL MATCH (r)-[:PRODUCES]->(product:Molecule)\n"
                "RETURN r.id AS reaction_id, collect(DISTINCT product.name) AS products\n"
                "```"
            )
        else:
            # anchors the target at the path start (walks away from it)
            target = inst.params["target"]
            n = inst.params["n"]
            replies.append(
                "```cypher\n"
                f'MATCH p = (t:Molecule {{name: "{target}"}})-[:REACTS_IN|PRODUCES*..{2 * n}]->(s:Molecule)\n'
                f"WHERE size(relationships(p)) = {2 * n}\n"
                "WITH [x IN nodes(p) WHERE 'Reaction' IN labels(x)] AS reaction_nodes\n"
                "RETURN DISTINCT reaction_nodes\n"
                "```"
            )
    script = tmp_path / "script.jsonl"
    script.write_text("".join(json.dumps({"reply": r}) + "\n" for r in replies), encoding="utf-8")
    config = make_config(
        tmp_path, graph_path, suite_path, provider="scripted", script_path=str(script)
    )
    out_dir = run_experiment(config)
    labels = {r["task_type"]: r["error_label"] for r in read_records(out_dir)}
    assert labels["product_identification_retro"] == "reactants_missing"
    assert labels["multi_step_precursor_discovery"] == "endpoint_anchoring"

    outputs = aggregate(out_dir)
    taxonomy = outputs["taxonomy_csv"].read_text(encoding="utf-8")
    assert ",1," in taxonomy  # at least one labeled error counted
