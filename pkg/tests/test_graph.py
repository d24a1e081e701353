from __future__ import annotations

import pytest

from rxnquery.graph import (
    EDGE_KINDS,
    GraphError,
    KnowledgeGraph,
    NodeRef,
    PRODUCES,
    REACTS_IN,
    build_graph,
    load_graph,
    molecule,
    reaction,
    save_graph,
    schema_text,
)
from rxnquery.ingest import ReactionRecord
from rxnquery.synth import make_reaction_records


def test_build_small_graph(toy_graph):
    assert set(toy_graph.molecules) == {"A", "B", "C", "D", "X", "S"}
    assert list(toy_graph.reactions) == ["R1", "R2", "R3"]
    r1 = reaction("R1")
    assert toy_graph.neighbors(r1, REACTS_IN, "in") == [molecule("A"), molecule("B")]
    assert toy_graph.neighbors(r1, PRODUCES, "out") == [molecule("C")]


def test_shared_reactant_single_node(toy_graph):
    a = molecule("A")
    assert toy_graph.neighbors(a, REACTS_IN, "out") == [reaction("R1"), reaction("R3")]


def test_yield_on_produces_edge(toy_graph):
    (edge,) = toy_graph.out_edges(reaction("R1"), PRODUCES)
    assert edge.yield_pct == 85.0
    (edge2,) = toy_graph.out_edges(reaction("R2"), PRODUCES)
    assert edge2.yield_pct is None


def test_neighbors_empty_and_deterministic(toy_graph):
    b = molecule("B")
    assert toy_graph.neighbors(b, PRODUCES, "in") == []
    first = toy_graph.neighbors(molecule("A"), REACTS_IN, "out")
    second = toy_graph.neighbors(molecule("A"), REACTS_IN, "out")
    assert first == second


def test_neighbors_unknown_node(toy_graph):
    with pytest.raises(GraphError):
        toy_graph.neighbors(molecule("nope"), REACTS_IN, "out")


def test_every_reaction_has_inputs_and_outputs(desk_graph):
    for rid in desk_graph.reactions:
        node = reaction(rid)
        assert desk_graph.in_edges(node, REACTS_IN)
        assert desk_graph.out_edges(node, PRODUCES)
        for kind in EDGE_KINDS:
            assert len(desk_graph.out_edges(node, kind)) <= 4
            assert len(desk_graph.in_edges(node, kind)) <= 4


def test_bipartite_enforced():
    g = KnowledgeGraph()
    a = g.add_molecule("A")
    b = g.add_molecule("B")
    with pytest.raises(GraphError):
        g.add_edge(REACTS_IN, a, b)


def test_yield_only_on_produces():
    g = KnowledgeGraph()
    m = g.add_molecule("A")
    r = g.add_reaction("R1")
    with pytest.raises(GraphError):
        g.add_edge(REACTS_IN, m, r, yield_pct=10.0)


def test_roundtrip_empty(tmp_path):
    g = KnowledgeGraph()
    path = tmp_path / "g.jsonl"
    save_graph(g, path)
    assert load_graph(path) == g


def test_roundtrip_synthetic(tmp_path):
    g = build_graph(make_reaction_records(50, seed=3))
    assert len(g.reactions) == 50  # one reaction node per record
    path = tmp_path / "g.jsonl"
    save_graph(g, path)
    loaded = load_graph(path)
    assert loaded == g
    assert loaded.edges == g.edges


def test_load_rejects_molecule_to_molecule_edge(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '{"type": "header", "node_counts": {"molecule": 2, "reaction": 0}}\n'
        '{"type": "molecule", "name": "A"}\n'
        '{"type": "molecule", "name": "B"}\n'
        '{"type": "edge", "kind": "REACTS_IN", "source": "A", "target": "B", "yield": null}\n',
        encoding="utf-8",
    )
    with pytest.raises(GraphError) as err:
        load_graph(path)
    assert "REACTS_IN" in str(err.value)
    assert "line 4" in str(err.value)


def test_load_rejects_unknown_kind(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '{"type": "molecule", "name": "A"}\n'
        '{"type": "reaction", "id": "R"}\n'
        '{"type": "edge", "kind": "FOO", "source": "A", "target": "R", "yield": null}\n',
        encoding="utf-8",
    )
    with pytest.raises(GraphError):
        load_graph(path)


def test_duplicate_edges_collapse():
    g = build_graph(
        [ReactionRecord(id="R1", reactants=["A"], products=["B"], agents=["A"])]
    )
    # A is both reactant and agent: two different edge kinds, no duplicates
    assert len(g.edges) == 3
    assert len({(e.kind, e.source, e.target) for e in g.edges}) == 3


def test_node_property_lookup(toy_graph):
    assert toy_graph.node_property(molecule("A"), "name") == "A"
    assert toy_graph.node_property(molecule("A"), "id") is None
    assert toy_graph.node_property(reaction("R1"), "id") == "R1"


def test_schema_text_lists_the_four_kinds(toy_graph):
    text = schema_text(toy_graph)
    assert "(:Molecule)-[:REACTS_IN]->(:Reaction)" in text
    assert "(:Reaction)-[:PRODUCES {yield: FLOAT}]->(:Molecule)" in text
    assert "(:Reaction)-[:USES_AGENT]->(:Molecule)" in text
    assert "(:Reaction)-[:USES_SOLVENT]->(:Molecule)" in text


def test_noderef_equality_and_hash():
    assert NodeRef("Molecule", "A") == molecule("A")
    assert len({molecule("A"), molecule("A"), reaction("A")}) == 2
