"""Deterministic synthetic reaction corpus for demos and desk-scale runs.

Molecule names are SMILES-shaped opaque strings. Reactions chain naturally:
most draw at least one reactant from earlier products, so multi-step routes
of depth 2-4 exist in any corpus of a few hundred reactions.
"""

from __future__ import annotations

import random

from .ingest import ReactionRecord

_FRAGMENTS = (
    "CCO",
    "CC(=O)O",
    "CCN",
    "C1CCCCC1",
    "CCC(C)O",
    "C=CC#N",
    "OCC(O)CO",
    "ClCCl",
    "CC(C)=O",
    "N#CCO",
)

_COMMON_AGENTS = ("[Pd]", "[Na+].[OH-]", "CC(=O)[O-].[K+]", "O=S(=O)(O)O")
_COMMON_SOLVENTS = ("O", "CCO", "CS(C)=O", "ClCCl")


def _molecule_name(index: int) -> str:
    return f"{_FRAGMENTS[index % len(_FRAGMENTS)]}{index}"


def make_reaction_records(count: int, seed: int = 0) -> list[ReactionRecord]:
    rng = random.Random(seed)
    next_molecule = 0

    def fresh() -> str:
        nonlocal next_molecule
        name = _molecule_name(next_molecule)
        next_molecule += 1
        return name

    feedstock = [fresh() for _ in range(max(4, count // 20))]
    produced_pool: list[str] = []
    records: list[ReactionRecord] = []
    for i in range(count):
        reactants: list[str] = []
        if produced_pool and rng.random() < 0.65:
            reactants.append(produced_pool[rng.randrange(len(produced_pool))])
        while len(reactants) < rng.randint(1, 3):
            source = feedstock if rng.random() < 0.7 else (produced_pool or feedstock)
            candidate = source[rng.randrange(len(source))]
            if candidate not in reactants:
                reactants.append(candidate)
        n_products = rng.randint(1, 2)
        products = [fresh() for _ in range(n_products)]
        agents = []
        if rng.random() < 0.5:
            agents.append(_COMMON_AGENTS[rng.randrange(len(_COMMON_AGENTS))])
        solvents = []
        if rng.random() < 0.6:
            solvents.append(_COMMON_SOLVENTS[rng.randrange(len(_COMMON_SOLVENTS))])
        yields = {}
        for product in products:
            if rng.random() < 0.7:
                yields[product] = round(rng.uniform(5.0, 99.0), 1)
        records.append(
            ReactionRecord(
                id=f"RX{i:05d}",
                reactants=reactants,
                products=products,
                agents=agents,
                solvents=solvents,
                yields=yields,
            )
        )
        produced_pool.extend(products)
    return records
