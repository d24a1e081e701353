"""Benchmark instance generation: questions, reference queries, gold answers.

Six single-step task types retrieve one-hop reaction context around a
target molecule (or a reaction id); four multi-step types retrieve ordered
reaction chains of exactly n steps (n in {2,3,4}). Gold answers are always
produced by executing the reference query on the graph, never computed by
a side channel, so the suite is closed under its own scoring.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

from . import cypher
from .graph import PRODUCES, REACTS_IN, KnowledgeGraph, NodeRef

SINGLE = "single_step"
MULTI = "multi_step"

MULTI_STEP_NS = (2, 3, 4)


class TaskError(Exception):
    pass


class EmptyGoldError(TaskError):
    """Reference query returned nothing; the target must be re-drawn."""


@dataclass(frozen=True)
class TaskType:
    key: str
    setting: str
    nl_template: str
    gold_cypher_template: str
    answer_shape: str  # context_rows | path_list
    needs_yield: bool = False
    by_reaction_id: bool = False
    anchored_pair: bool = False


@dataclass
class GoldAnswer:
    rows: list[dict] | None = None
    paths: list[list[str]] | None = None

    def to_dict(self) -> dict:
        if self.rows is not None:
            return {"rows": self.rows}
        return {"paths": self.paths}

    @classmethod
    def from_dict(cls, obj: dict) -> "GoldAnswer":
        if "rows" in obj:
            return cls(rows=obj["rows"])
        return cls(paths=[list(p) for p in obj["paths"]])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GoldAnswer):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass
class TaskInstance:
    id: str
    task_type: str
    params: dict
    nl_question: str
    gold_cypher: str
    gold_answer: GoldAnswer

    @property
    def setting(self) -> str:
        return MULTI if self.gold_answer.paths is not None else SINGLE


# -- reference query templates ---------------------------------------------------

_CONTEXT_TAIL = (
    "OPTIONAL MATCH (reactant:Molecule)-[:REACTS_IN]->(r)\n"
    "OPTIONAL MATCH (r)-[:PRODUCES]->(product:Molecule)\n"
    "OPTIONAL MATCH (r)-[:USES_AGENT]->(agent:Molecule)\n"
    "OPTIONAL MATCH (r)-[:USES_SOLVENT]->(solvent:Molecule)\n"
    "RETURN r.id AS reaction_id,\n"
    "       collect(DISTINCT reactant.name) AS reactants,\n"
    "       collect(DISTINCT product.name) AS products,\n"
    "       collect(DISTINCT agent.name) AS agents,\n"
    "       collect(DISTINCT solvent.name) AS solvents"
)

SINGLE_CONTEXT_TEMPLATE = (
    'MATCH (target:Molecule {name: {target}})<-[:PRODUCES]-(r:Reaction)\n' + _CONTEXT_TAIL
)

BEST_YIELD_TEMPLATE = (
    'MATCH (target:Molecule {name: {target}})<-[rel:PRODUCES]-(r:Reaction)\n'
    "WHERE rel.yield IS NOT NULL\n"
    "WITH r, rel\n"
    "ORDER BY rel.yield DESC\n"
    "LIMIT 1\n"
    + _CONTEXT_TAIL.replace(
        "RETURN r.id AS reaction_id,",
        "RETURN r.id AS reaction_id,\n       rel.yield AS yield,",
    )
)

CONTEXT_BY_ID_TEMPLATE = 'MATCH (r:Reaction {id: {rid}})\n' + _CONTEXT_TAIL

_MULTI_WHERE = (
    "WHERE size(relationships(p)) = {Y} AND "
    "all(i IN range(0, size(nodes(p)) - 1) WHERE "
    "(i % 2 = 0 AND 'Molecule' IN labels(nodes(p)[i])) OR "
    "(i % 2 = 1 AND 'Reaction' IN labels(nodes(p)[i])))\n"
    "WITH [x IN nodes(p) WHERE 'Reaction' IN labels(x)] AS reaction_nodes\n"
    "RETURN DISTINCT reaction_nodes"
)

MULTI_TEMPLATE = (
    "MATCH p = (start:Molecule)-[:REACTS_IN|PRODUCES*..{Y}]->"
    "(target:Molecule {name: {target}})\n" + _MULTI_WHERE
)

MULTI_PAIR_TEMPLATE = (
    "MATCH p = (start:Molecule {name: {start}})-[:REACTS_IN|PRODUCES*..{Y}]->"
    "(target:Molecule {name: {target}})\n" + _MULTI_WHERE
)


def catalog() -> list[TaskType]:
    """Stable task catalog: six single-step and four multi-step types."""
    return [
        TaskType(
            key="product_identification_retro",
            setting=SINGLE,
            nl_template="Which reactions produce {target}? Provide the full reaction context.",
            gold_cypher_template=SINGLE_CONTEXT_TEMPLATE,
            answer_shape="context_rows",
        ),
        TaskType(
            key="precursor_identification",
            setting=SINGLE,
            nl_template=(
                "What precursor molecules are needed to synthesize {target}? "
                "Provide the full reaction context."
            ),
            gold_cypher_template=SINGLE_CONTEXT_TEMPLATE,
            answer_shape="context_rows",
        ),
        TaskType(
            key="agent_identification",
            setting=SINGLE,
            nl_template=(
                "Which agents are used in reactions that produce {target}? "
                "Provide the full reaction context."
            ),
            gold_cypher_template=SINGLE_CONTEXT_TEMPLATE,
            answer_shape="context_rows",
        ),
        TaskType(
            key="solvent_identification",
            setting=SINGLE,
            nl_template=(
                "Which solvents are used in reactions that produce {target}? "
                "Provide the full reaction context."
            ),
            gold_cypher_template=SINGLE_CONTEXT_TEMPLATE,
            answer_shape="context_rows",
        ),
        TaskType(
            key="best_yielding_reaction",
            setting=SINGLE,
            nl_template=(
                "Which reaction produces {target} with the highest yield? "
                "Provide the full reaction context."
            ),
            gold_cypher_template=BEST_YIELD_TEMPLATE,
            answer_shape="context_rows",
            needs_yield=True,
        ),
        TaskType(
            key="reaction_context_by_id",
            setting=SINGLE,
            nl_template="What is the full reaction context of reaction {rid}?",
            gold_cypher_template=CONTEXT_BY_ID_TEMPLATE,
            answer_shape="context_rows",
            by_reaction_id=True,
        ),
        TaskType(
            key="multi_step_precursor_discovery",
            setting=MULTI,
            nl_template=(
                "Which precursor molecules can lead to {target} in exactly {n} "
                "reaction steps? Return the reaction chains."
            ),
            gold_cypher_template=MULTI_TEMPLATE,
            answer_shape="path_list",
        ),
        TaskType(
            key="intermediate_molecule_identification",
            setting=MULTI,
            nl_template=(
                "Which intermediate molecules appear in {n}-step synthesis routes "
                "ending at {target}? Return the reaction chains."
            ),
            gold_cypher_template=MULTI_TEMPLATE,
            answer_shape="path_list",
        ),
        TaskType(
            key="pathway_between_molecules",
            setting=MULTI,
            nl_template=(
                "Find every {n}-step synthesis pathway from {start} to {target}. "
                "Return the reaction chains."
            ),
            gold_cypher_template=MULTI_PAIR_TEMPLATE,
            answer_shape="path_list",
            anchored_pair=True,
        ),
        TaskType(
            key="starting_material_identification",
            setting=MULTI,
            nl_template=(
                "Which starting materials can {target} be synthesized from in "
                "exactly {n} reaction steps? Return the reaction chains."
            ),
            gold_cypher_template=MULTI_TEMPLATE,
            answer_shape="path_list",
        ),
    ]


def task_type(key: str) -> TaskType:
    for t in catalog():
        if t.key == key:
            return t
    raise TaskError(f"unknown task type {key!r}")


def _quote(value: str) -> str:
    escaped = value.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def instantiate_gold(ttype: TaskType, params: dict) -> str:
    text = ttype.gold_cypher_template
    if "{target}" in text:
        text = text.replace("{target}", _quote(params["target"]))
    if "{start}" in text:
        text = text.replace("{start}", _quote(params["start"]))
    if "{rid}" in text:
        text = text.replace("{rid}", _quote(params["rid"]))
    if "{Y}" in text:
        text = text.replace("{Y}", str(2 * int(params["n"])))
    return text


def instantiate_question(ttype: TaskType, params: dict) -> str:
    text = ttype.nl_template
    for slot in ("target", "start", "rid", "n"):
        if slot in params:
            text = text.replace("{" + slot + "}", str(params[slot]))
    return text


# -- gold computation ---------------------------------------------------------------


def compute_gold(gold_cypher: str, graph: KnowledgeGraph, answer_shape: str) -> GoldAnswer:
    """Execute the reference query and normalize into the gold-answer shape."""
    table = cypher.run(gold_cypher, graph)
    if answer_shape == "context_rows":
        if not table.rows:
            raise EmptyGoldError("reference query returned no rows")
        rows = [_jsonable_row(row) for row in table.rows]
        return GoldAnswer(rows=rows)
    if answer_shape == "path_list":
        paths: list[list[str]] = []
        seen: set[tuple[str, ...]] = set()
        for row in table.rows:
            (value,) = row.values()
            ids = tuple(
                node.key if isinstance(node, NodeRef) else str(node) for node in value or []
            )
            if ids and ids not in seen:
                seen.add(ids)
                paths.append(list(ids))
        if not paths:
            raise EmptyGoldError("reference query returned no paths")
        paths.sort()
        return GoldAnswer(paths=paths)
    raise TaskError(f"unknown answer shape {answer_shape!r}")


def _jsonable_row(row: dict) -> dict:
    out = {}
    for key, value in row.items():
        if isinstance(value, list):
            out[key] = [v.key if isinstance(v, NodeRef) else v for v in value]
        elif isinstance(value, NodeRef):
            out[key] = value.key
        else:
            out[key] = value
    return out


# -- eligibility helpers ---------------------------------------------------------------


def _paths_ending_at(
    graph: KnowledgeGraph,
    target: NodeRef,
    steps: int,
    limit: int | None = None,
) -> list[tuple[str, tuple[str, ...]]]:
    """Backward trail enumeration: (start molecule, reaction-id chain) pairs.

    One step is a REACTS_IN + PRODUCES hop pair; edge-uniqueness matches the
    engine's trail semantics.
    """
    results: list[tuple[str, tuple[str, ...]]] = []

    def back(molecule: NodeRef, remaining: int, acc: list[str], used: frozenset):
        if limit is not None and len(results) >= limit:
            return
        if remaining == 0:
            results.append((molecule.key, tuple(reversed(acc))))
            return
        for produce_edge in graph.in_edges(molecule, PRODUCES):
            if produce_edge in used:
                continue
            reaction_node = produce_edge.source
            for reacts_edge in graph.in_edges(reaction_node, REACTS_IN):
                if reacts_edge in used:
                    continue
                back(
                    reacts_edge.source,
                    remaining - 1,
                    acc + [reaction_node.key],
                    used | {produce_edge, reacts_edge},
                )
                if limit is not None and len(results) >= limit:
                    return

    back(target, steps, [], frozenset())
    return results


def has_n_step_route(graph: KnowledgeGraph, target: NodeRef, steps: int) -> bool:
    return bool(_paths_ending_at(graph, target, steps, limit=1))


# -- suite generation ---------------------------------------------------------------------


def split_counts(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def generate_suite(
    graph: KnowledgeGraph,
    single_per_type: int = 200,
    multi_per_type: int = 300,
    seed: int = 0,
    max_paths_per_instance: int = 200,
) -> list[TaskInstance]:
    """Deterministically sample instances for every task type.

    Multi-step counts are split across n in {2,3,4}; targets are drawn by
    rejection sampling until a route of exactly n steps exists. Instances
    whose gold answer would exceed `max_paths_per_instance` routes are
    skipped to keep suites tractable.
    """
    rng = random.Random(seed)
    instances: list[TaskInstance] = []

    produced = [m for m in graph.molecules.values() if graph.in_edges(m, PRODUCES)]
    with_yield = [
        m
        for m in produced
        if any(e.yield_pct is not None for e in graph.in_edges(m, PRODUCES))
    ]
    reaction_ids = list(graph.reactions)

    for ttype in catalog():
        if ttype.setting == SINGLE:
            instances.extend(
                _generate_single(graph, ttype, single_per_type, rng, produced, with_yield, reaction_ids)
            )
        else:
            counts = split_counts(multi_per_type, len(MULTI_STEP_NS))
            for n, count in zip(MULTI_STEP_NS, counts):
                instances.extend(
                    _generate_multi(graph, ttype, n, count, rng, produced, max_paths_per_instance)
                )
    return instances


def _generate_single(
    graph: KnowledgeGraph,
    ttype: TaskType,
    count: int,
    rng: random.Random,
    produced: list[NodeRef],
    with_yield: list[NodeRef],
    reaction_ids: list[str],
) -> list[TaskInstance]:
    if ttype.by_reaction_id:
        pool = list(reaction_ids)
    elif ttype.needs_yield:
        pool = [m.key for m in with_yield]
    else:
        pool = [m.key for m in produced]
    if count > len(pool):
        raise TaskError(
            f"task {ttype.key}: requested {count} instances but only "
            f"{len(pool)} eligible anchors exist"
        )
    rng.shuffle(pool)
    out: list[TaskInstance] = []
    for anchor in pool:
        if len(out) == count:
            break
        params = {"rid": anchor} if ttype.by_reaction_id else {"target": anchor}
        gold_cypher = instantiate_gold(ttype, params)
        try:
            gold = compute_gold(gold_cypher, graph, ttype.answer_shape)
        except EmptyGoldError:
            continue
        out.append(
            TaskInstance(
                id=f"{ttype.key}-{len(out):04d}",
                task_type=ttype.key,
                params=params,
                nl_question=instantiate_question(ttype, params),
                gold_cypher=gold_cypher,
                gold_answer=gold,
            )
        )
    if len(out) < count:
        raise TaskError(
            f"task {ttype.key}: only generated {len(out)} of {count} instances"
        )
    return out


def _generate_multi(
    graph: KnowledgeGraph,
    ttype: TaskType,
    n: int,
    count: int,
    rng: random.Random,
    produced: list[NodeRef],
    max_paths: int,
) -> list[TaskInstance]:
    pool = [m for m in produced]
    rng.shuffle(pool)
    out: list[TaskInstance] = []
    for target in pool:
        if len(out) == count:
            break
        routes = _paths_ending_at(graph, target, n, limit=max_paths + 1)
        if not routes or len(routes) > max_paths:
            continue
        params: dict = {"target": target.key, "n": n}
        if ttype.anchored_pair:
            start_keys = sorted({start for start, _ in routes})
            params["start"] = start_keys[rng.randrange(len(start_keys))]
        gold_cypher = instantiate_gold(ttype, params)
        try:
            gold = compute_gold(gold_cypher, graph, ttype.answer_shape)
        except EmptyGoldError:
            continue
        out.append(
            TaskInstance(
                id=f"{ttype.key}-n{n}-{len(out):04d}",
                task_type=ttype.key,
                params=params,
                nl_question=instantiate_question(ttype, params),
                gold_cypher=gold_cypher,
                gold_answer=gold,
            )
        )
    if len(out) < count:
        raise TaskError(
            f"task {ttype.key} (n={n}): only generated {len(out)} of {count} instances; "
            "graph has too few reachable routes of this length"
        )
    return out


# -- persistence ---------------------------------------------------------------------------


def save_suite(instances: list[TaskInstance], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(
                json.dumps(
                    {
                        "id": inst.id,
                        "task_type": inst.task_type,
                        "params": inst.params,
                        "nl_question": inst.nl_question,
                        "gold_cypher": inst.gold_cypher,
                        "gold_answer": inst.gold_answer.to_dict(),
                    }
                )
                + "\n"
            )


def load_suite(
    path, graph: KnowledgeGraph | None = None, verify: bool | None = None
) -> list[TaskInstance]:
    """Read a suite; when a graph is supplied the gold answers are re-verified
    against it (catching suites generated from a different graph)."""
    if verify is None:
        verify = graph is not None
    instances: list[TaskInstance] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            instances.append(
                TaskInstance(
                    id=obj["id"],
                    task_type=obj["task_type"],
                    params=obj["params"],
                    nl_question=obj["nl_question"],
                    gold_cypher=obj["gold_cypher"],
                    gold_answer=GoldAnswer.from_dict(obj["gold_answer"]),
                )
            )
    if verify:
        if graph is None:
            raise TaskError("verification requested but no graph supplied")
        for inst in instances:
            ttype = task_type(inst.task_type)
            try:
                recomputed = compute_gold(inst.gold_cypher, graph, ttype.answer_shape)
            except (EmptyGoldError, cypher.CypherError, cypher.ExecutionError) as exc:
                raise TaskError(
                    f"instance {inst.id}: gold re-verification failed on this graph "
                    f"({exc}); suite generated from a different graph?"
                ) from exc
            if recomputed != inst.gold_answer:
                raise TaskError(
                    f"instance {inst.id}: stored gold answer does not match this "
                    "graph (suite generated from a different graph?)"
                )
    return instances
