from __future__ import annotations

import random

import pytest

from rxnquery import cypher
from rxnquery.graph import build_graph, molecule, reaction
from rxnquery.ingest import ReactionRecord
from tests.conftest import random_graph
from tests.oracles import enumerate_fixed_pattern, multi_step_paths, single_context_rows
from tests.test_cypher_parser import GOLD_SINGLE


def rows(text: str, graph) -> list[dict]:
    return cypher.run(text, graph).rows


def test_single_step_context_hand_trace(toy_graph):
    result = rows(GOLD_SINGLE.replace('"X"', '"C"'), toy_graph)
    assert result == [
        {
            "reaction_id": "R1",
            "reactants": ["A", "B"],
            "products": ["C"],
            "agents": [],
            "solvents": [],
        },
        {
            "reaction_id": "R3",
            "reactants": ["A"],
            "products": ["C"],
            "agents": [],
            "solvents": [],
        },
    ]


def test_two_step_chain_projection(chain_graph):
    query = """MATCH p = (start:Molecule)-[:REACTS_IN|PRODUCES*..4]->(target:Molecule {name: "C"})
WHERE size(relationships(p)) = 4 AND all(i IN range(0, size(nodes(p)) - 1) WHERE (i % 2 = 0 AND 'Molecule' IN labels(nodes(p)[i])) OR (i % 2 = 1 AND 'Reaction' IN labels(nodes(p)[i])))
WITH [x IN nodes(p) WHERE 'Reaction' IN labels(x)] AS reaction_nodes
RETURN DISTINCT reaction_nodes"""
    result = rows(query, chain_graph)
    assert len(result) == 1
    assert [n.key for n in result[0]["reaction_nodes"]] == ["R1", "R2"]


def test_best_yield_hand_trace(toy_graph):
    query = """MATCH (target:Molecule {name: "C"})<-[rel:PRODUCES]-(r:Reaction)
WHERE rel.yield IS NOT NULL
WITH r, rel
ORDER BY rel.yield DESC
LIMIT 1
RETURN r.id AS reaction_id, rel.yield AS yield"""
    assert rows(query, toy_graph) == [{"reaction_id": "R1", "yield": 85.0}]


def test_optional_match_binds_null(toy_graph):
    query = """MATCH (m:Molecule {name: "B"})
OPTIONAL MATCH (m)<-[:PRODUCES]-(r:Reaction)
RETURN m.name AS name, r.id AS rid"""
    assert rows(query, toy_graph) == [{"name": "B", "rid": None}]


def test_collect_skips_nulls(toy_graph):
    query = """MATCH (m:Molecule {name: "B"})
OPTIONAL MATCH (m)<-[:PRODUCES]-(r:Reaction)
RETURN collect(DISTINCT r.id) AS ids"""
    assert rows(query, toy_graph) == [{"ids": []}]


def test_collect_distinct_preserves_first_seen_order(toy_graph):
    # molecule insertion order A, B, C drives match order: A->R1, A->R3, B->R1, C->R2
    query = "MATCH (m:Molecule)-[:REACTS_IN]->(r:Reaction) RETURN collect(DISTINCT r.id) AS ids"
    assert rows(query, toy_graph) == [{"ids": ["R1", "R3", "R2"]}]


def test_limit_zero(toy_graph):
    assert rows("MATCH (m:Molecule) RETURN m.name AS n LIMIT 0", toy_graph) == []


def test_order_by_desc_and_null_placement(toy_graph):
    query = "MATCH (m:Molecule)<-[e:PRODUCES]-(r) RETURN m.name AS n, e.yield AS y ORDER BY y DESC"
    result = rows(query, toy_graph)
    # nulls sort last ascending, hence first descending
    assert [r["y"] for r in result] == [None, 85.0, 40.0]
    asc = rows(query.replace(" DESC", ""), toy_graph)
    assert [r["y"] for r in asc] == [40.0, 85.0, None]


def test_where_null_propagation(toy_graph):
    # R2's PRODUCES edge has no yield: null > 50 is null, row filtered
    query = "MATCH (r:Reaction)-[e:PRODUCES]->(m) WHERE e.yield > 50 RETURN r.id AS rid"
    assert rows(query, toy_graph) == [{"rid": "R1"}]


def test_is_not_null_guard(toy_graph):
    query = "MATCH (r:Reaction)-[e:PRODUCES]->(m) WHERE e.yield IS NOT NULL RETURN r.id AS rid"
    assert [r["rid"] for r in rows(query, toy_graph)] == ["R1", "R3"]


def test_labels_and_in(toy_graph):
    query = "MATCH (m:Molecule {name: \"A\"}) RETURN 'Molecule' IN labels(m) AS is_mol"
    assert rows(query, toy_graph) == [{"is_mol": True}]


def test_range_inclusive_and_subscript(toy_graph):
    query = "MATCH (m:Molecule {name: \"A\"}) RETURN range(0, 3) AS r, range(0, 3)[1] AS second"
    assert rows(query, toy_graph) == [{"r": [0, 1, 2, 3], "second": 1}]


def test_list_comprehension_with_projection(chain_graph):
    query = """MATCH p = (s:Molecule)-[:REACTS_IN|PRODUCES*..2]->(t:Molecule {name: "B"})
WHERE size(relationships(p)) = 2
RETURN [x IN nodes(p) WHERE 'Reaction' IN labels(x) | x.id] AS ids"""
    assert rows(query, chain_graph) == [{"ids": ["R1"]}]


def test_arithmetic_modulo(toy_graph):
    query = "MATCH (m:Molecule {name: \"A\"}) RETURN 5 % 2 AS m5, 4 % 2 AS m4"
    assert rows(query, toy_graph) == [{"m5": 1, "m4": 0}]


def test_undirected_traverses_both_orientations(chain_graph):
    query = 'MATCH (x {name: "B"})-[:REACTS_IN|PRODUCES]-(r:Reaction) RETURN r.id AS rid'
    assert sorted(r["rid"] for r in rows(query, chain_graph)) == ["R1", "R2"]


def test_edge_uniqueness_blocks_reuse():
    # A -(R1)-> B -(R2)-> A: a 2-step cycle; 4-step routes back to A would
    # need to traverse the same edges twice, which trail semantics forbid.
    g = build_graph(
        [
            ReactionRecord(id="R1", reactants=["A"], products=["B"]),
            ReactionRecord(id="R2", reactants=["B"], products=["A"]),
        ]
    )
    base = """MATCH p = (s:Molecule)-[:REACTS_IN|PRODUCES*..{Y}]->(t:Molecule {name: "A"})
WHERE size(relationships(p)) = {Y}
RETURN [x IN nodes(p) WHERE 'Reaction' IN labels(x) | x.id] AS ids"""
    two_step = rows(base.replace("{Y}", "4"), g)
    assert [r["ids"] for r in two_step] == [["R1", "R2"]]
    assert rows(base.replace("{Y}", "8"), g) == []


def test_homomorphic_node_binding(toy_graph):
    query = (
        "MATCH (a:Molecule)-[:REACTS_IN]->(r:Reaction {id: \"R1\"})<-[:REACTS_IN]-(b:Molecule) "
        "RETURN a.name AS a, b.name AS b"
    )
    result = {(r["a"], r["b"]) for r in rows(query, toy_graph)}
    assert result == {("A", "B"), ("B", "A")}


def test_same_query_same_rows(toy_graph):
    query = "MATCH (m:Molecule)-[:REACTS_IN]->(r) RETURN m.name AS n, r.id AS rid"
    assert rows(query, toy_graph) == rows(query, toy_graph)


def test_match_on_null_binding_drops_row(toy_graph):
    query = """MATCH (m:Molecule {name: "B"})
OPTIONAL MATCH (m)<-[:PRODUCES]-(r:Reaction)
MATCH (r)-[:PRODUCES]->(x:Molecule)
RETURN x.name AS n"""
    assert rows(query, toy_graph) == []


def test_with_distinct():
    g = build_graph(
        [
            ReactionRecord(id="R1", reactants=["A"], products=["B"]),
            ReactionRecord(id="R2", reactants=["A"], products=["C"]),
        ]
    )
    query = "MATCH (m:Molecule)-[:REACTS_IN]->(r) WITH DISTINCT m.name AS n RETURN n"
    assert rows(query, g) == [{"n": "A"}]


def test_execute_requires_validation(toy_graph):
    with pytest.raises(cypher.ExecutionError):
        cypher.run("MATCH (a:Molecule) RETURN zz", toy_graph)


def test_engine_matches_context_oracle_on_random_graphs():
    rng = random.Random(99)
    for _ in range(25):
        g = random_graph(rng)
        targets = sorted({e.target.key for e in g.edges if e.kind == "PRODUCES"})[:3]
        for target in targets:
            got = rows(GOLD_SINGLE.replace('"X"', f'"{target}"'), g)
            assert got == single_context_rows(g, target)


def test_engine_matches_path_oracle_on_random_graphs():
    rng = random.Random(7)
    template = """MATCH p = (s:Molecule)-[:REACTS_IN|PRODUCES*..{Y}]->(t:Molecule {name: "{T}"})
WHERE size(relationships(p)) = {Y}
RETURN [x IN nodes(p) WHERE 'Reaction' IN labels(x) | x.id] AS ids"""
    for _ in range(15):
        g = random_graph(rng)
        targets = sorted({e.target.key for e in g.edges if e.kind == "PRODUCES"})[:2]
        for target in targets:
            for n in (1, 2, 3):
                query = template.replace("{Y}", str(2 * n)).replace("{T}", target)
                # without DISTINCT the engine yields one row per molecule-level
                # trail; the oracle counts distinct reaction chains
                got = sorted({tuple(r["ids"]) for r in rows(query, g)})
                assert got == [tuple(p) for p in multi_step_paths(g, target, n)]


def test_engine_matches_binding_enumerator():
    rng = random.Random(5)
    for _ in range(10):
        g = random_graph(rng)
        query = "MATCH (a:Molecule)-[:REACTS_IN]->(r:Reaction)-[:PRODUCES]->(b:Molecule) RETURN a.name AS a, r.id AS r, b.name AS b"
        got = sorted((row["a"], row["r"], row["b"]) for row in rows(query, g))
        want = enumerate_fixed_pattern(g, ["REACTS_IN", "PRODUCES"], {})
        assert got == sorted(want)


def test_result_table_columns(toy_graph):
    table = cypher.run("MATCH (m:Molecule {name: \"A\"}) RETURN m.name AS n, m.name", toy_graph)
    assert table.columns == ["n", "m.name"]


def test_path_value_shape(chain_graph):
    table = cypher.run(
        'MATCH p = (s:Molecule)-[:REACTS_IN|PRODUCES*..2]->(t:Molecule {name: "B"}) '
        "WHERE size(relationships(p)) = 2 RETURN p",
        chain_graph,
    )
    (row,) = table.rows
    path = row["p"]
    assert isinstance(path, cypher.PathValue)
    assert [n.key for n in path.nodes] == ["A", "R1", "B"]
    assert [n.label for n in path.nodes] == ["Molecule", "Reaction", "Molecule"]
    assert len(path.edges) == 2
