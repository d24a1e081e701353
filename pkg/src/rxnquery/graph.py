"""Immutable bipartite reaction knowledge graph.

Two node types: Molecule nodes keyed by SMILES name, Reaction nodes keyed
by id. Four directed edge kinds connect them:

    (:Molecule)-[:REACTS_IN]->(:Reaction)
    (:Reaction)-[:PRODUCES]->(:Molecule)     # optionally carries a yield
    (:Reaction)-[:USES_AGENT]->(:Molecule)
    (:Reaction)-[:USES_SOLVENT]->(:Molecule)

The graph is append-only during construction and treated as read-only by
the query engine, so concurrent query execution needs no locking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .ingest import ReactionRecord

MOLECULE = "Molecule"
REACTION = "Reaction"

REACTS_IN = "REACTS_IN"
PRODUCES = "PRODUCES"
USES_AGENT = "USES_AGENT"
USES_SOLVENT = "USES_SOLVENT"

EDGE_KINDS = (REACTS_IN, PRODUCES, USES_AGENT, USES_SOLVENT)

# kind -> (source label, target label)
EDGE_SCHEMA = {
    REACTS_IN: (MOLECULE, REACTION),
    PRODUCES: (REACTION, MOLECULE),
    USES_AGENT: (REACTION, MOLECULE),
    USES_SOLVENT: (REACTION, MOLECULE),
}

OUT = "out"
IN = "in"


class GraphError(Exception):
    """Malformed graph input or a schema-violating graph file."""


@dataclass(frozen=True)
class NodeRef:
    """Reference to a graph node: label plus its unique key."""

    label: str
    key: str

    def __repr__(self) -> str:  # compact in test failure output
        return f"({self.label} {self.key!r})"


@dataclass(frozen=True)
class Edge:
    kind: str
    source: NodeRef
    target: NodeRef
    yield_pct: float | None = None


def molecule(name: str) -> NodeRef:
    return NodeRef(MOLECULE, name)


def reaction(rid: str) -> NodeRef:
    return NodeRef(REACTION, rid)


@dataclass
class KnowledgeGraph:
    """Bipartite property graph with per-node, per-kind adjacency lists.

    Node and edge iteration order is insertion order, which makes query
    results deterministic for a given build.
    """

    molecules: dict[str, NodeRef] = field(default_factory=dict)
    reactions: dict[str, NodeRef] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)
    _out: dict[NodeRef, dict[str, list[Edge]]] = field(default_factory=dict)
    _in: dict[NodeRef, dict[str, list[Edge]]] = field(default_factory=dict)
    _edge_keys: set[tuple[str, NodeRef, NodeRef]] = field(default_factory=set)

    # -- construction -----------------------------------------------------

    def add_molecule(self, name: str) -> NodeRef:
        if not name:
            raise GraphError("molecule name must be non-empty")
        node = self.molecules.get(name)
        if node is None:
            node = molecule(name)
            self.molecules[name] = node
            self._out[node] = {}
            self._in[node] = {}
        return node

    def add_reaction(self, rid: str) -> NodeRef:
        if not rid:
            raise GraphError("reaction id must be non-empty")
        if rid in self.reactions:
            raise GraphError(f"duplicate reaction id {rid!r}")
        node = reaction(rid)
        self.reactions[rid] = node
        self._out[node] = {}
        self._in[node] = {}
        return node

    def add_edge(
        self, kind: str, source: NodeRef, target: NodeRef, yield_pct: float | None = None
    ) -> None:
        if kind not in EDGE_SCHEMA:
            raise GraphError(f"unknown edge kind {kind!r}")
        src_label, tgt_label = EDGE_SCHEMA[kind]
        if source.label != src_label or target.label != tgt_label:
            raise GraphError(
                f"edge {kind} must go {src_label}->{tgt_label}, "
                f"got {source.label}->{target.label} ({source.key!r}->{target.key!r})"
            )
        if source not in self._out or target not in self._out:
            raise GraphError("edge endpoint not in graph")
        if yield_pct is not None and kind != PRODUCES:
            raise GraphError(f"yield only allowed on {PRODUCES} edges")
        key = (kind, source, target)
        if key in self._edge_keys:
            return  # no parallel duplicates; first edge wins
        edge = Edge(kind, source, target, yield_pct)
        self.edges.append(edge)
        self._edge_keys.add(key)
        self._out[source].setdefault(kind, []).append(edge)
        self._in[target].setdefault(kind, []).append(edge)

    # -- access ------------------------------------------------------------

    def has_node(self, node: NodeRef) -> bool:
        return node in self._out

    def node_property(self, node: NodeRef, name: str):
        """Property lookup following the schema: Molecule.name / Reaction.id."""
        if node.label == MOLECULE and name == "name":
            return node.key
        if node.label == REACTION and name == "id":
            return node.key
        return None

    def out_edges(self, node: NodeRef, kind: str | None = None) -> list[Edge]:
        adj = self._out.get(node)
        if adj is None:
            raise GraphError(f"unknown node {node!r}")
        if kind is not None:
            return list(adj.get(kind, ()))
        result: list[Edge] = []
        for k in EDGE_KINDS:
            result.extend(adj.get(k, ()))
        return result

    def in_edges(self, node: NodeRef, kind: str | None = None) -> list[Edge]:
        adj = self._in.get(node)
        if adj is None:
            raise GraphError(f"unknown node {node!r}")
        if kind is not None:
            return list(adj.get(kind, ()))
        result: list[Edge] = []
        for k in EDGE_KINDS:
            result.extend(adj.get(k, ()))
        return result

    def neighbors(self, node: NodeRef, kind: str, direction: str) -> list[NodeRef]:
        """Adjacent nodes along `kind` edges, in insertion order."""
        if direction == OUT:
            return [e.target for e in self.out_edges(node, kind)]
        if direction == IN:
            return [e.source for e in self.in_edges(node, kind)]
        raise GraphError(f"direction must be {OUT!r} or {IN!r}, got {direction!r}")

    def nodes(self) -> list[NodeRef]:
        return list(self.molecules.values()) + list(self.reactions.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (
            list(self.molecules) == list(other.molecules)
            and list(self.reactions) == list(other.reactions)
            and self.edges == other.edges
        )


def build_graph(records: Iterable[ReactionRecord]) -> KnowledgeGraph:
    """Assemble the bipartite graph from cleaned reaction records.

    One Reaction node per record, one Molecule node per distinct SMILES
    across all roles, and per-role edges with schema directions. Per-product
    yields land on the matching PRODUCES edge.
    """
    g = KnowledgeGraph()
    for rec in records:
        r = g.add_reaction(rec.id)
        for smi in rec.reactants:
            m = g.add_molecule(smi)
            g.add_edge(REACTS_IN, m, r)
        for smi in rec.products:
            m = g.add_molecule(smi)
            g.add_edge(PRODUCES, r, m, yield_pct=(rec.yields or {}).get(smi))
        for smi in rec.agents:
            m = g.add_molecule(smi)
            g.add_edge(USES_AGENT, r, m)
        for smi in rec.solvents:
            m = g.add_molecule(smi)
            g.add_edge(USES_SOLVENT, r, m)
    return g


def schema_text(graph: KnowledgeGraph | None = None) -> str:
    """Human/LLM-readable schema description generated from the store."""
    lines = [
        "Node types:",
        "  (:Molecule {name: STRING})  // name is the canonical SMILES of the molecule",
        "  (:Reaction {id: STRING})",
        "Relationship types:",
        "  (:Molecule)-[:REACTS_IN]->(:Reaction)",
        "  (:Reaction)-[:PRODUCES {yield: FLOAT}]->(:Molecule)  // yield may be null",
        "  (:Reaction)-[:USES_AGENT]->(:Molecule)",
        "  (:Reaction)-[:USES_SOLVENT]->(:Molecule)",
    ]
    if graph is not None:
        lines.append(
            f"Counts: {len(graph.molecules)} Molecule nodes, "
            f"{len(graph.reactions)} Reaction nodes, {len(graph.edges)} relationships."
        )
    return "\n".join(lines)


# -- serialization ----------------------------------------------------------
#
# JSONL: one header line with node counts, then molecule lines, reaction
# lines, and edge lines. Keys are the schema key strings, no surrogate ids.


def save_graph(graph: KnowledgeGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "type": "header",
            "node_counts": {
                "molecule": len(graph.molecules),
                "reaction": len(graph.reactions),
            },
        }
        fh.write(json.dumps(header) + "\n")
        for name in graph.molecules:
            fh.write(json.dumps({"type": "molecule", "name": name}) + "\n")
        for rid in graph.reactions:
            fh.write(json.dumps({"type": "reaction", "id": rid}) + "\n")
        for e in graph.edges:
            fh.write(
                json.dumps(
                    {
                        "type": "edge",
                        "kind": e.kind,
                        "source": e.source.key,
                        "target": e.target.key,
                        "yield": e.yield_pct,
                    }
                )
                + "\n"
            )


def load_graph(path) -> KnowledgeGraph:
    g = KnowledgeGraph()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GraphError(f"line {lineno}: invalid JSON ({exc})") from exc
            kind = obj.get("type")
            if kind == "header":
                continue
            if kind == "molecule":
                g.add_molecule(obj["name"])
            elif kind == "reaction":
                g.add_reaction(obj["id"])
            elif kind == "edge":
                _load_edge(g, obj, lineno)
            else:
                raise GraphError(f"line {lineno}: unknown record type {kind!r}")
    return g


def _load_edge(g: KnowledgeGraph, obj: dict, lineno: int) -> None:
    ekind = obj.get("kind")
    if ekind not in EDGE_SCHEMA:
        raise GraphError(f"line {lineno}: unknown edge kind {ekind!r}")
    src_label, tgt_label = EDGE_SCHEMA[ekind]
    source = NodeRef(src_label, obj["source"])
    target = NodeRef(tgt_label, obj["target"])
    if not g.has_node(source) or not g.has_node(target):
        raise GraphError(
            f"line {lineno}: edge {ekind} {obj['source']!r}->{obj['target']!r} "
            "references a node absent from this file or violates the bipartite schema"
        )
    g.add_edge(ekind, source, target, obj.get("yield"))
