from __future__ import annotations

import random

import pytest

from rxnquery.graph import KnowledgeGraph, build_graph
from rxnquery.ingest import ReactionRecord, filter_and_sample, normalize_and_dedupe
from rxnquery.synth import make_reaction_records
from rxnquery.tasks import TaskInstance, generate_suite


@pytest.fixture
def toy_graph() -> KnowledgeGraph:
    """A+B -> C (R1, yield 85); C -> D (R2, agent X, solvent S); A -> C (R3, yield 40)."""
    return build_graph(
        [
            ReactionRecord(id="R1", reactants=["A", "B"], products=["C"], yields={"C": 85.0}),
            ReactionRecord(
                id="R2", reactants=["C"], products=["D"], agents=["X"], solvents=["S"]
            ),
            ReactionRecord(id="R3", reactants=["A"], products=["C"], yields={"C": 40.0}),
        ]
    )


@pytest.fixture
def chain_graph() -> KnowledgeGraph:
    """A -(R1)-> B -(R2)-> C -(R3)-> D: chains of 1..3 steps."""
    return build_graph(
        [
            ReactionRecord(id="R1", reactants=["A"], products=["B"], yields={"B": 90.0}),
            ReactionRecord(id="R2", reactants=["B"], products=["C"], yields={"C": 75.0}),
            ReactionRecord(id="R3", reactants=["C"], products=["D"], yields={"D": 60.0}),
        ]
    )


def random_graph(rng: random.Random, max_reactions: int = 12) -> KnowledgeGraph:
    """Small random reaction graph, <= 50 nodes, with chaining and yields."""
    n_reactions = rng.randint(2, max_reactions)
    molecules = [f"M{i}" for i in range(rng.randint(3, 12))]
    produced: list[str] = []
    records = []
    next_mol = len(molecules)
    for i in range(n_reactions):
        pool = molecules + produced
        reactants = []
        for _ in range(rng.randint(1, 3)):
            candidate = pool[rng.randrange(len(pool))]
            if candidate not in reactants:
                reactants.append(candidate)
        products = []
        for _ in range(rng.randint(1, 2)):
            if produced and rng.random() < 0.2:
                candidate = produced[rng.randrange(len(produced))]
                if candidate not in products and candidate not in reactants:
                    products.append(candidate)
                    continue
            products.append(f"M{next_mol}")
            next_mol += 1
        if not products:
            products = [f"M{next_mol}"]
            next_mol += 1
        agents = [f"AG{rng.randrange(3)}"] if rng.random() < 0.4 else []
        solvents = [f"SOL{rng.randrange(2)}"] if rng.random() < 0.4 else []
        yields = {p: round(rng.uniform(1, 99), 1) for p in products if rng.random() < 0.6}
        records.append(
            ReactionRecord(
                id=f"R{i}",
                reactants=reactants,
                products=products,
                agents=agents,
                solvents=solvents,
                yields=yields,
            )
        )
        produced.extend(products)
    return build_graph(records)


@pytest.fixture(scope="session")
def desk_graph() -> KnowledgeGraph:
    records = filter_and_sample(normalize_and_dedupe(make_reaction_records(1000, seed=42)), seed=1)
    return build_graph(records)


@pytest.fixture(scope="session")
def desk_suite(desk_graph) -> list[TaskInstance]:
    return generate_suite(desk_graph, single_per_type=10, multi_per_type=10, seed=11)
