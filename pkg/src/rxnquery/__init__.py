"""rxnquery: execution-grounded text-to-Cypher benchmark harness for reaction graphs.

Pipeline: ingest reaction data -> build a bipartite molecule/reaction
knowledge graph -> generate benchmark instances (question, reference query,
gold answer) -> run prompting strategies with optional checklist-driven
self-correction -> execute generated queries on the embedded engine ->
score text similarity and retrieval correctness.
"""

from __future__ import annotations

__version__ = "0.1.0"

from . import cove, cypher, graph, ingest, metrics, prompts, providers, runner, synth, tasks

__all__ = [
    "cove",
    "cypher",
    "graph",
    "ingest",
    "metrics",
    "prompts",
    "providers",
    "runner",
    "synth",
    "tasks",
    "__version__",
]
