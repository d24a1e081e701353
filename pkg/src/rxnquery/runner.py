"""Experiment orchestration over (instance x strategy x prompt version).

records.jsonl is the single source of truth: one record per triple,
appended incrementally in deterministic task order, so interrupted runs
resume by skipping already-recorded triples and aggregation is a pure fold
over the file. With scripted providers and a fixed seed, two runs produce
byte-identical record streams (enable `record_wall_time` to trade that for
timing data).
"""

from __future__ import annotations

import csv
import json
import logging
import os
import random
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import cypher, metrics
from .cove import CoveConfig, run_cove
from .graph import KnowledgeGraph, NodeRef, load_graph
from .prompts import (
    MULTI,
    SINGLE,
    STRATEGIES,
    VERSIONS,
    default_banks,
    select_exemplars,
)
from .providers import (
    GoldEchoChatProvider,
    HttpChatProvider,
    HttpEmbeddingProvider,
    LocalTrigramEmbedder,
    ScriptedChatProvider,
)
from .tasks import TaskInstance, load_suite, task_type

logger = logging.getLogger(__name__)


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    graph_path: str
    suite_path: str
    output_dir: str
    strategies: list[str] = field(default_factory=lambda: list(STRATEGIES))
    versions: list[int] = field(default_factory=lambda: list(VERSIONS))
    cove_enabled: bool = False
    max_attempts: int = 3
    provider: str = "gold-echo"  # gold-echo | scripted | http
    provider_endpoint: str = ""
    provider_api_key_env: str = "RXNQUERY_API_KEY"
    provider_model: str = "gpt-4.1-mini"
    script_path: str = ""
    embedding_provider: str = "local"  # local | http
    embedding_endpoint: str = ""
    concurrency: int = 1
    seed: int = 0
    record_wall_time: bool = True

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if overrides:
            data.update(overrides)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"graph_path", "suite_path", "output_dir"} - set(data)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return cls(**data)

    def validate(self) -> list[str]:
        problems = []
        if not os.path.exists(self.graph_path):
            problems.append(f"graph file not found: {self.graph_path}")
        if not os.path.exists(self.suite_path):
            problems.append(f"suite file not found: {self.suite_path}")
        for s in self.strategies:
            if s not in STRATEGIES:
                problems.append(f"unknown strategy {s!r}")
        for v in self.versions:
            if v not in VERSIONS:
                problems.append(f"unknown prompt version {v!r}")
        if self.concurrency < 1:
            problems.append("concurrency must be >= 1")
        if self.provider not in ("gold-echo", "scripted", "http"):
            problems.append(f"unknown provider {self.provider!r}")
        if self.provider == "scripted" and not os.path.exists(self.script_path):
            problems.append(f"script file not found: {self.script_path}")
        if self.provider == "http":
            if not self.provider_endpoint:
                problems.append("http provider needs provider_endpoint")
            if not os.environ.get(self.provider_api_key_env):
                problems.append(
                    f"http provider needs credentials in ${self.provider_api_key_env}"
                )
        return problems


def build_chat_provider(config: RunConfig, suite: list[TaskInstance]):
    if config.provider == "gold-echo":
        return GoldEchoChatProvider({i.nl_question: i.gold_cypher for i in suite})
    if config.provider == "scripted":
        return ScriptedChatProvider.from_file(config.script_path)
    return HttpChatProvider(
        endpoint=config.provider_endpoint,
        api_key=os.environ.get(config.provider_api_key_env, ""),
        model=config.provider_model,
        max_concurrency=config.concurrency,
    )


def build_embedder(config: RunConfig):
    if config.embedding_provider == "http":
        return HttpEmbeddingProvider(endpoint=config.embedding_endpoint)
    return LocalTrigramEmbedder()


# -- value serialization ---------------------------------------------------------


def jsonable_value(value):
    if isinstance(value, NodeRef):
        return value.key
    if isinstance(value, cypher.PathValue):
        return [jsonable_value(n) for n in value.nodes]
    if isinstance(value, list):
        return [jsonable_value(v) for v in value]
    if isinstance(value, dict):
        return {k: jsonable_value(v) for k, v in value.items()}
    if hasattr(value, "kind") and hasattr(value, "source"):  # Edge
        return {"kind": value.kind, "source": value.source.key, "target": value.target.key}
    return value


def rows_to_paths(rows: list[dict]) -> list[list[str]]:
    """Interpret result rows as reaction-id sequences (multi-step answers)."""
    paths: list[list[str]] = []
    for row in rows:
        values = list(row.values())
        candidate = None
        if len(values) == 1:
            candidate = values[0]
        else:
            for v in values:
                if isinstance(v, list):
                    candidate = v
                    break
        if candidate is None:
            continue
        if not isinstance(candidate, list):
            candidate = [candidate]
        ids: list[str] = []
        for item in candidate:
            if isinstance(item, NodeRef):
                if item.label == "Reaction":
                    ids.append(item.key)
            elif isinstance(item, dict):
                key = item.get("key") or item.get("id")
                if key:
                    ids.append(str(key))
            elif item is not None:
                ids.append(str(item))
        if ids:
            paths.append(ids)
    return paths


# -- single triple ----------------------------------------------------------------


def run_one(
    instance: TaskInstance,
    strategy: str,
    version: int,
    graph: KnowledgeGraph,
    chat,
    embedder,
    banks,
    config: RunConfig,
) -> dict:
    started = time.monotonic()
    ttype = task_type(instance.task_type)
    setting = ttype.setting
    record: dict = {
        "instance_id": instance.id,
        "task_type": instance.task_type,
        "setting": setting,
        "strategy": strategy,
        "version": version,
    }
    try:
        bank = banks[setting]
        rng = random.Random(f"{config.seed}:{instance.id}")
        exemplars = select_exemplars(
            strategy,
            bank,
            instance.nl_question,
            embedder=embedder,
            rng=rng,
            known_names=frozenset(graph.molecules),
        )
        final_query, trace = run_cove(
            instance.nl_question,
            setting=setting,
            version=version,
            graph=graph,
            chat=chat,
            config=CoveConfig(enabled=config.cove_enabled, max_attempts=config.max_attempts),
            exemplars=exemplars,
        )
        raw_query = trace.attempts[0].query_text if trace.attempts else None
        record["raw_query"] = raw_query
        record["final_query"] = final_query
        record["cove"] = trace.to_dict()

        executed = False
        execution_error = None
        predicted_rows: list[dict] = []
        if final_query:
            try:
                table = cypher.run(final_query, graph)
                predicted_rows = [
                    {k: jsonable_value(v) for k, v in row.items()} for row in table.rows
                ]
                executed = True
            except (cypher.CypherError, cypher.ExecutionError) as exc:
                execution_error = str(exc)
        else:
            execution_error = f"no executable query ({trace.terminal_status})"
        record["executed"] = executed
        record["execution_error"] = execution_error

        scored_text = final_query or raw_query
        record["text_scores"] = (
            metrics.score_texts(scored_text, instance.gold_cypher).to_dict()
            if scored_text
            else None
        )

        if setting == MULTI:
            predicted_paths = rows_to_paths(predicted_rows) if executed else []
            record["predicted"] = {"paths": predicted_paths}
            path_scores = metrics.score_multi_step(predicted_paths, instance.gold_answer.paths or [])
            record["retrieval_scores"] = path_scores.to_dict()
            perfect = path_scores.f1 == 1.0 and path_scores.ppr == 1.0
            record["error_label"] = metrics.classify_error(
                setting=MULTI,
                target=instance.params.get("target"),
                n_steps=instance.params.get("n"),
                query_text=final_query,
                execution_failed=not executed,
                predicted=predicted_paths,
                gold=instance.gold_answer.paths,
                retrieval_perfect=perfect,
                embedder=embedder,
            )
        else:
            record["predicted"] = {"rows": predicted_rows if executed else []}
            scores = metrics.score_single_step(
                predicted_rows if executed else [],
                instance.gold_answer.rows or [],
                embedder=embedder,
            )
            record["retrieval_scores"] = scores.to_dict()
            perfect = scores.f1 == 1.0
            record["error_label"] = metrics.classify_error(
                setting=SINGLE,
                target=instance.params.get("target"),
                n_steps=None,
                query_text=final_query,
                execution_failed=not executed,
                predicted=predicted_rows,
                gold=instance.gold_answer.rows,
                retrieval_perfect=perfect,
                embedder=embedder,
            )
    except Exception as exc:  # provider outage or unexpected failure: record, continue
        logger.exception("record failed for %s/%s/v%d", instance.id, strategy, version)
        record.setdefault("raw_query", None)
        record.setdefault("final_query", None)
        record.setdefault("cove", None)
        record["executed"] = False
        record["execution_error"] = f"runner: {exc}"
        record.setdefault("text_scores", None)
        record.setdefault("predicted", None)
        record["retrieval_scores"] = None
        record["error_label"] = None
    if config.record_wall_time:
        record["wall_time_ms"] = round((time.monotonic() - started) * 1000.0, 3)
    return record


# -- experiment -----------------------------------------------------------------------


def run_experiment(config: RunConfig) -> Path:
    problems = config.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.jsonl"

    graph = load_graph(config.graph_path)
    suite = load_suite(config.suite_path, graph=graph)
    chat = build_chat_provider(config, suite)
    embedder = build_embedder(config)
    single_bank, multi_bank = default_banks()
    banks = {SINGLE: single_bank, MULTI: multi_bank}

    done: set[tuple[str, str, int]] = set()
    if records_path.exists():
        with open(records_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                done.add((rec["instance_id"], rec["strategy"], rec["version"]))
        if done:
            logger.info("resuming: %d records already present", len(done))

    items = [
        (instance, strategy, version)
        for instance in suite
        for strategy in config.strategies
        for version in config.versions
        if (instance.id, strategy, version) not in done
    ]

    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        futures = [
            pool.submit(run_one, inst, strat, ver, graph, chat, embedder, banks, config)
            for inst, strat, ver in items
        ]
        with open(records_path, "a", encoding="utf-8") as fh:
            for future in futures:  # submission order keeps the file deterministic
                record = future.result()
                fh.write(json.dumps(record) + "\n")
                fh.flush()
    return out_dir


# -- aggregation ------------------------------------------------------------------------

_SINGLE_METRICS = ("bleu", "meteor", "rouge_l", "precision", "recall", "f1")
_MULTI_METRICS = ("bleu", "meteor", "rouge_l", "exact_precision", "exact_recall", "exact_f1", "ppr")


def _record_metrics(record: dict) -> dict[str, float]:
    out: dict[str, float] = {}
    text = record.get("text_scores")
    if text:
        out.update(text)
    retrieval = record.get("retrieval_scores")
    if retrieval:
        out.update({k: v for k, v in retrieval.items() if k not in ("tp", "fp", "fn")})
    return out


def aggregate(run_dir) -> dict[str, Path]:
    """Fold records.jsonl into summary and error-taxonomy tables."""
    run_dir = Path(run_dir)
    records_path = run_dir / "records.jsonl"
    if not records_path.exists():
        raise ConfigError(f"no records.jsonl in {run_dir}")
    records: list[dict] = []
    with open(records_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records:
        raise ConfigError(f"records.jsonl in {run_dir} is empty")

    groups: dict[tuple[str, str, int], list[dict]] = {}
    for rec in records:
        groups.setdefault((rec["task_type"], rec["strategy"], rec["version"]), []).append(rec)

    summary_rows: list[dict] = []
    for (ttype, strategy, version) in sorted(groups):
        recs = groups[(ttype, strategy, version)]
        setting = recs[0]["setting"]
        names = _MULTI_METRICS if setting == MULTI else _SINGLE_METRICS
        per_metric: dict[str, list[float]] = {n: [] for n in names}
        for rec in recs:
            values = _record_metrics(rec)
            for n in names:
                if n in values:
                    per_metric[n].append(float(values[n]))
        for n in names:
            values = per_metric[n]
            if not values:
                continue
            mean = statistics.fmean(values)
            std = statistics.pstdev(values) if len(values) > 1 else 0.0
            summary_rows.append(
                {
                    "task_type": ttype,
                    "strategy": strategy,
                    "version": version,
                    "metric": n,
                    "mean": round(mean, 6),
                    "std": round(std, 6),
                    "n": len(values),
                }
            )
        if setting == SINGLE:
            tp = sum(r["retrieval_scores"]["tp"] for r in recs if r.get("retrieval_scores"))
            fp = sum(r["retrieval_scores"]["fp"] for r in recs if r.get("retrieval_scores"))
            fn = sum(r["retrieval_scores"]["fn"] for r in recs if r.get("retrieval_scores"))
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            for name, value in (
                ("precision_pooled", precision),
                ("recall_pooled", recall),
                ("f1_pooled", f1),
            ):
                summary_rows.append(
                    {
                        "task_type": ttype,
                        "strategy": strategy,
                        "version": version,
                        "metric": name,
                        "mean": round(value, 6),
                        "std": 0.0,
                        "n": len(recs),
                    }
                )

    summary_csv = run_dir / "summary.csv"
    with open(summary_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["task_type", "strategy", "version", "metric", "mean", "std", "n"]
        )
        writer.writeheader()
        writer.writerows(summary_rows)

    summary_json = run_dir / "summary.json"
    with open(summary_json, "w", encoding="utf-8") as fh:
        json.dump(summary_rows, fh, indent=2)
        fh.write("\n")

    taxonomy_rows = []
    label_names = list(metrics.ERROR_LABELS)
    for (ttype, strategy, version) in sorted(groups):
        recs = groups[(ttype, strategy, version)]
        total = len(recs)
        invalid = sum(1 for r in recs if not r.get("executed"))
        labeled = {name: 0 for name in label_names}
        retrieval_errors = 0
        for rec in recs:
            label = rec.get("error_label")
            if label in labeled:
                labeled[label] += 1
            if rec.get("executed") and label is not None:
                retrieval_errors += 1
        executed = total - invalid
        row = {
            "task_type": ttype,
            "strategy": strategy,
            "version": version,
            "total": total,
            "invalid_rate": round(invalid / total, 6) if total else 0.0,
            "retrieval_error_rate": round(retrieval_errors / executed, 6) if executed else 0.0,
        }
        row.update({name: labeled[name] for name in label_names})
        taxonomy_rows.append(row)

    taxonomy_csv = run_dir / "taxonomy.csv"
    with open(taxonomy_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=["task_type", "strategy", "version", "total", "invalid_rate", "retrieval_error_rate"]
            + label_names,
        )
        writer.writeheader()
        writer.writerows(taxonomy_rows)

    return {"summary_csv": summary_csv, "summary_json": summary_json, "taxonomy_csv": taxonomy_csv}


# -- offline scoring -----------------------------------------------------------------------


def score_queries_file(graph_path, suite_path, queries_path, out_path=None) -> dict:
    """Score externally produced queries ({id, query} JSONL) against a suite."""
    graph = load_graph(graph_path)
    suite = {inst.id: inst for inst in load_suite(suite_path, graph=graph)}
    embedder = LocalTrigramEmbedder()
    results = []
    f1_values = []
    with open(queries_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            instance = suite.get(obj["id"])
            if instance is None:
                results.append({"id": obj["id"], "error": "unknown instance id"})
                continue
            ttype = task_type(instance.task_type)
            entry: dict = {"id": instance.id, "task_type": instance.task_type}
            try:
                table = cypher.run(obj["query"], graph)
                rows = [{k: jsonable_value(v) for k, v in r.items()} for r in table.rows]
                entry["executed"] = True
            except (cypher.CypherError, cypher.ExecutionError) as exc:
                rows = []
                entry["executed"] = False
                entry["error"] = str(exc)
            entry["text_scores"] = metrics.score_texts(obj["query"], instance.gold_cypher).to_dict()
            if ttype.setting == MULTI:
                paths = rows_to_paths(rows)
                scores = metrics.score_multi_step(paths, instance.gold_answer.paths or [])
                entry["retrieval_scores"] = scores.to_dict()
                f1_values.append(scores.f1)
            else:
                scores = metrics.score_single_step(rows, instance.gold_answer.rows or [], embedder=embedder)
                entry["retrieval_scores"] = scores.to_dict()
                f1_values.append(scores.f1)
            results.append(entry)
    summary = {
        "scored": len(f1_values),
        "mean_f1": statistics.fmean(f1_values) if f1_values else 0.0,
        "results": results,
    }
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    return summary
