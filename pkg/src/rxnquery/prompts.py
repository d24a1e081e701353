"""Prompt versions and exemplar-selection strategies.

Five prompt versions per setting form a ladder: each version's instruction
blocks are a superset of the previous version's, adding structure/context
guidance incrementally. Exemplar banks hold SMILES-free demonstration pairs
phrased in the forward-synthesis direction (the opposite direction from the
benchmark questions) together with a logical-intent description, so
semantic selection aligns on task structure rather than chemistry.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

from .cypher import mask_smiles
from .providers import cosine

ZERO_SHOT = "ZS"
ONE_SHOT_STATIC = "1S-S"
ONE_SHOT_RANDOM = "1S-D-R"
ONE_SHOT_SEMANTIC = "1S-D-S"
STRATEGIES = (ZERO_SHOT, ONE_SHOT_STATIC, ONE_SHOT_RANDOM, ONE_SHOT_SEMANTIC)

SINGLE = "single_step"
MULTI = "multi_step"

SYSTEM_PROMPT = (
    "You are a helpful assistant that translates natural-language questions about "
    "chemical reactions into Cypher queries for a Neo4j knowledge graph. "
    "Reply with exactly one Cypher query."
)


class PromptError(Exception):
    pass


# -- instruction blocks -----------------------------------------------------------
#
# Block text is constant across versions; versions differ only in which
# blocks they include, which keeps the ladder property checkable.

_BLOCKS = {
    "role_schema": (
        "You are an expert in generating Cypher queries for a Neo4j knowledge graph "
        "with the following schema:\n\n<schema>\n{schema}\n</schema>\n\n"
        "Your task is to generate valid, semantically meaningful Cypher queries "
        "based solely on user input and the schema."
    ),
    "guidelines": (
        "General Guidelines\n"
        "- Always adhere to correct Cypher syntax.\n"
        "- Return only the Cypher query enclosed in triple backticks - nothing else."
    ),
    "match_order": (
        "Query Structure\n"
        "- Bind the molecule mentioned in the question with the first MATCH clause.\n"
        "- Add the remaining context bindings afterwards, one MATCH or OPTIONAL MATCH "
        "per component."
    ),
    "directionality": (
        "Relationship Directionality (Mandatory)\n"
        "Ensure every relationship arrow matches the direction shown in the schema:\n"
        "- (:Molecule)-[:REACTS_IN]->(:Reaction)\n"
        "- (:Reaction)-[:PRODUCES]->(:Molecule)\n"
        "- (:Reaction)-[:USES_AGENT]->(:Molecule)\n"
        "- (:Reaction)-[:USES_SOLVENT]->(:Molecule)"
    ),
    "yield_handling": (
        "Yield Handling\n"
        "If yield is used (e.g., in filter or sort), add WHERE <rel>.yield IS NOT NULL "
        "before any sorting or limiting."
    ),
    "contextual_retrieval": (
        "Contextual Retrieval\n"
        "For each Reaction node retrieved, always include full context:\n"
        "- Always use MATCH or OPTIONAL MATCH to bind variables for reactants, "
        "products, agents, and solvents.\n"
        "- After binding, retrieve their names using collect(DISTINCT <variable>.name) "
        "in the RETURN clause."
    ),
    "full_context_rules": (
        "Full Context Rules\n"
        "When the query involves a molecule (e.g., asking what produces it, what it "
        "reacts in, or its precursors) - follow this pattern:\n"
        '1. Match all reactions involving the molecule, for example:\n'
        '   MATCH (target:Molecule {name: "..."})<-[:PRODUCES]-(r:Reaction)\n'
        "2. Use OPTIONAL MATCH to retrieve all possible related molecules:\n"
        "   (reactant:Molecule)-[:REACTS_IN]->(r:Reaction)\n"
        "   (r:Reaction)-[:PRODUCES]->(product:Molecule)\n"
        "   (r:Reaction)-[:USES_AGENT]->(agent:Molecule)\n"
        "   (r:Reaction)-[:USES_SOLVENT]->(solvent:Molecule)\n"
        "3. Return them as collect(DISTINCT ...) lists, e.g.:\n"
        "   RETURN r.id AS reaction_id,\n"
        "          collect(DISTINCT reactant.name) AS reactants,\n"
        "          collect(DISTINCT product.name) AS products,\n"
        "          collect(DISTINCT agent.name) AS agents,\n"
        "          collect(DISTINCT solvent.name) AS solvents"
    ),
    "assumptions": (
        "Important Assumptions\n"
        "- Regardless of the user's question intent (e.g., asking about precursors, "
        "agents, intermediates), you must return only the full reaction chains - that "
        "is, the Reaction nodes involved in the synthesis pathway.\n"
        "- Do not perform any reasoning or interpretation - simply identify the "
        "sequence of Reaction nodes involving the mentioned molecular entities."
    ),
    "bipartite_lengths": (
        "Graph Structure and Path Lengths\n"
        "The graph is bipartite:\n"
        "- Molecule and Reaction nodes alternate.\n"
        "- A synthesis path of N steps has path length Y = 2 x N hops "
        "(e.g., 2 -> 4, 3 -> 6, 4 -> 8)."
    ),
    "query_constraints": (
        "Query Constraints\n"
        "- Use a variable-length pattern with [:REACTS_IN|PRODUCES*..Y] to enable "
        "multi-step synthesis paths.\n"
        "- Enforce exact length with:\n"
        "  WHERE size(relationships(p)) = Y\n"
        "- Ensure bipartite alternation of nodes: Molecule (even), Reaction (odd).\n"
        "- Return DISTINCT reaction_nodes only."
    ),
    "full_snippets": (
        "Illustrative Query Snippets\n"
        "1. Match multi-hop paths:\n"
        '   MATCH p = (start:Molecule)-[:REACTS_IN|PRODUCES*..Y]->(target:Molecule {name: "..."})\n'
        "   WHERE size(relationships(p)) = Y\n"
        "2. Enforce bipartite alternation:\n"
        "   WHERE all(i IN range(0, size(nodes(p)) - 1) WHERE "
        "(i % 2 = 0 AND 'Molecule' IN labels(nodes(p)[i])) OR "
        "(i % 2 = 1 AND 'Reaction' IN labels(nodes(p)[i])))\n"
        "3. Return only reaction nodes:\n"
        "   WITH [x IN nodes(p) WHERE 'Reaction' IN labels(x)] AS reaction_nodes\n"
        "   RETURN DISTINCT reaction_nodes"
    ),
    "smiles_verbatim": (
        "SMILES Handling\n"
        "Copy SMILES verbatim: character-for-character - no changes to atoms, case, "
        "ring numbers, parentheses/brackets, or charges."
    ),
    "strict_return": (
        "Output Constraint\n"
        "Only return reaction_nodes. Do not return Molecule nodes, p, nodes(p), "
        "relationships(p), or anything else. No extra RETURNs."
    ),
}

_VERSION_BLOCKS: dict[str, dict[int, list[str]]] = {
    SINGLE: {
        1: ["role_schema", "guidelines", "contextual_retrieval"],
        2: ["role_schema", "guidelines", "match_order", "contextual_retrieval"],
        3: ["role_schema", "guidelines", "match_order", "directionality", "contextual_retrieval"],
        4: [
            "role_schema",
            "guidelines",
            "match_order",
            "yield_handling",
            "directionality",
            "contextual_retrieval",
        ],
        5: [
            "role_schema",
            "guidelines",
            "match_order",
            "yield_handling",
            "directionality",
            "contextual_retrieval",
            "full_context_rules",
        ],
    },
    MULTI: {
        1: ["role_schema", "guidelines", "assumptions", "bipartite_lengths"],
        2: ["role_schema", "guidelines", "assumptions", "bipartite_lengths", "query_constraints"],
        3: [
            "role_schema",
            "guidelines",
            "assumptions",
            "bipartite_lengths",
            "query_constraints",
            "full_snippets",
        ],
        4: [
            "role_schema",
            "guidelines",
            "assumptions",
            "smiles_verbatim",
            "bipartite_lengths",
            "query_constraints",
            "full_snippets",
        ],
        5: [
            "role_schema",
            "guidelines",
            "assumptions",
            "smiles_verbatim",
            "bipartite_lengths",
            "query_constraints",
            "full_snippets",
            "strict_return",
        ],
    },
}

_EXEMPLAR_HEADER = "Example"
_QUESTION_BLOCK = "User Question\n<user_question>\n{question}\n</user_question>"

VERSIONS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class PromptVersion:
    setting: str
    version: int
    system_template: str
    user_template: str  # slots: {schema}, {exemplar}, {question}
    block_ids: tuple[str, ...]


def get_prompt_version(setting: str, version: int) -> PromptVersion:
    try:
        block_ids = _VERSION_BLOCKS[setting][version]
    except KeyError as exc:
        raise PromptError(f"no prompt for setting={setting!r} version={version!r}") from exc
    body = "\n\n".join(_BLOCKS[b] for b in block_ids)
    user_template = body + "\n\n{exemplar}" + _QUESTION_BLOCK
    return PromptVersion(
        setting=setting,
        version=version,
        system_template=SYSTEM_PROMPT,
        user_template=user_template,
        block_ids=tuple(block_ids),
    )


def blocks_for(setting: str, version: int) -> frozenset[str]:
    return frozenset(_VERSION_BLOCKS[setting][version])


# -- exemplar bank ------------------------------------------------------------------


@dataclass(frozen=True)
class BankEntry:
    key: str
    setting: str
    question: str
    cypher: str
    intent: str
    static: bool = False


_SINGLE_CONTEXT_TAIL = (
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

_MULTI_TAIL = (
    "WHERE size(relationships(p)) = 4 AND "
    "all(i IN range(0, size(nodes(p)) - 1) WHERE "
    "(i % 2 = 0 AND 'Molecule' IN labels(nodes(p)[i])) OR "
    "(i % 2 = 1 AND 'Reaction' IN labels(nodes(p)[i])))\n"
    "WITH [x IN nodes(p) WHERE 'Reaction' IN labels(x)] AS reaction_nodes\n"
    "RETURN DISTINCT reaction_nodes"
)


def default_banks() -> tuple[list[BankEntry], list[BankEntry]]:
    """Shipped forward-direction banks with logical intents, SMILES-free."""
    single = [
        BankEntry(
            key="product_identification",
            setting=SINGLE,
            question=(
                "Which reactions use <SMILES_0> as a reactant, and what is their "
                "full reaction context?"
            ),
            cypher=(
                'MATCH (m:Molecule {name: "<SMILES_0>"})-[:REACTS_IN]->(r:Reaction)\n'
                + _SINGLE_CONTEXT_TAIL
            ),
            intent=(
                "Anchor on a molecule consumed as a reactant, collect every reaction "
                "involving it, and return the full reaction context lists "
                "(reactants, products, agents, solvents)."
            ),
            static=True,
        ),
        BankEntry(
            key="forward_product_discovery",
            setting=SINGLE,
            question=(
                "What can be synthesized in one step starting from <SMILES_0>? "
                "Give the full reaction context."
            ),
            cypher=(
                'MATCH (m:Molecule {name: "<SMILES_0>"})-[:REACTS_IN]->(r:Reaction)\n'
                + _SINGLE_CONTEXT_TAIL
            ),
            intent=(
                "Anchor on a starting material, follow REACTS_IN to its reactions, "
                "and return the full context including the product lists."
            ),
        ),
        BankEntry(
            key="forward_agent_usage",
            setting=SINGLE,
            question=(
                "Which agents appear in reactions that consume <SMILES_0>? "
                "Give the full reaction context."
            ),
            cypher=(
                'MATCH (m:Molecule {name: "<SMILES_0>"})-[:REACTS_IN]->(r:Reaction)\n'
                + _SINGLE_CONTEXT_TAIL
            ),
            intent=(
                "Anchor on a consumed molecule and return the full reaction context "
                "with emphasis on the agent bindings."
            ),
        ),
        BankEntry(
            key="forward_solvent_usage",
            setting=SINGLE,
            question=(
                "Which solvents appear in reactions that consume <SMILES_0>? "
                "Give the full reaction context."
            ),
            cypher=(
                'MATCH (m:Molecule {name: "<SMILES_0>"})-[:REACTS_IN]->(r:Reaction)\n'
                + _SINGLE_CONTEXT_TAIL
            ),
            intent=(
                "Anchor on a consumed molecule and return the full reaction context "
                "with emphasis on the solvent bindings."
            ),
        ),
        BankEntry(
            key="forward_best_yield",
            setting=SINGLE,
            question=(
                "Among the reactions that consume <SMILES_0>, which has the highest "
                "yield? Give its full reaction context."
            ),
            cypher=(
                'MATCH (m:Molecule {name: "<SMILES_0>"})-[:REACTS_IN]->(r:Reaction)\n'
                "MATCH (r)-[rel:PRODUCES]->(p:Molecule)\n"
                "WHERE rel.yield IS NOT NULL\n"
                "WITH r, rel\n"
                "ORDER BY rel.yield DESC\n"
                "LIMIT 1\n" + _SINGLE_CONTEXT_TAIL.replace(
                    "RETURN r.id AS reaction_id,",
                    "RETURN r.id AS reaction_id,\n       rel.yield AS yield,",
                )
            ),
            intent=(
                "Filter on non-null PRODUCES yield, sort descending, keep the top "
                "reaction, and return its full reaction context."
            ),
        ),
        BankEntry(
            key="reaction_lookup",
            setting=SINGLE,
            question="What is the full reaction context of reaction <RXN_0>?",
            cypher=(
                'MATCH (r:Reaction {id: "<RXN_0>"})\n' + _SINGLE_CONTEXT_TAIL
            ),
            intent=(
                "Anchor on a reaction id and return its full reaction context lists."
            ),
        ),
    ]
    multi = [
        BankEntry(
            key="multi_step_product_discovery",
            setting=MULTI,
            question=(
                "Which molecules can be produced from <SMILES_0> in exactly 2 "
                "reaction steps? Return the reaction chains."
            ),
            cypher=(
                'MATCH p = (start:Molecule {name: "<SMILES_0>"})'
                "-[:REACTS_IN|PRODUCES*..4]->(end:Molecule)\n" + _MULTI_TAIL
            ),
            intent=(
                "Forward multi-step discovery: alternate REACTS_IN/PRODUCES hops "
                "leaving the anchored start molecule, enforce the exact hop count, "
                "and return the ordered reaction-node chains."
            ),
            static=True,
        ),
        BankEntry(
            key="forward_synthesis_intermediate_identification",
            setting=MULTI,
            question=(
                "Which intermediate molecules appear when <SMILES_0> is transformed "
                "over 2 consecutive reaction steps? Return the reaction chains."
            ),
            cypher=(
                'MATCH p = (start:Molecule {name: "<SMILES_0>"})'
                "-[:REACTS_IN|PRODUCES*..4]->(end:Molecule)\n" + _MULTI_TAIL
            ),
            intent=(
                "Forward traversal from the anchored start molecule; intermediates "
                "sit at even positions, and the answer is still the ordered "
                "reaction-node chains."
            ),
            static=True,
        ),
        BankEntry(
            key="forward_pathway_between",
            setting=MULTI,
            question=(
                "Find every 2-step forward synthesis route from <SMILES_0> to "
                "<SMILES_1>. Return the reaction chains."
            ),
            cypher=(
                'MATCH p = (start:Molecule {name: "<SMILES_0>"})'
                '-[:REACTS_IN|PRODUCES*..4]->(end:Molecule {name: "<SMILES_1>"})\n'
                + _MULTI_TAIL
            ),
            intent=(
                "Anchor both endpoint molecules and keep only alternating forward "
                "paths of the exact hop count between them, returning the ordered "
                "reaction-node chains."
            ),
        ),
        BankEntry(
            key="forward_end_product_identification",
            setting=MULTI,
            question=(
                "What end products result after exactly 2 reaction steps starting "
                "from <SMILES_0>? Return the reaction chains."
            ),
            cypher=(
                'MATCH p = (start:Molecule {name: "<SMILES_0>"})'
                "-[:REACTS_IN|PRODUCES*..4]->(end:Molecule)\n" + _MULTI_TAIL
            ),
            intent=(
                "Forward traversal of the exact hop count from the anchored start; "
                "the final even-position molecules are the end products, returned "
                "as ordered reaction-node chains."
            ),
        ),
    ]
    return single, multi


def load_bank(path) -> list[BankEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            entries.append(
                BankEntry(
                    key=obj["key"],
                    setting=obj["setting"],
                    question=obj["question"],
                    cypher=obj["cypher"],
                    intent=obj["intent"],
                    static=bool(obj.get("static", False)),
                )
            )
    return entries


def save_bank(entries: list[BankEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(
                json.dumps(
                    {
                        "key": e.key,
                        "setting": e.setting,
                        "question": e.question,
                        "cypher": e.cypher,
                        "intent": e.intent,
                        "static": e.static,
                    }
                )
                + "\n"
            )


# -- exemplar selection ----------------------------------------------------------------


def select_exemplars(
    strategy: str,
    bank: list[BankEntry],
    question: str,
    embedder=None,
    rng: random.Random | None = None,
    known_names=None,
) -> list[BankEntry]:
    """Pick the demonstration entries for one generation call.

    Static returns the bank's designated entries, random draws one entry
    uniformly under the caller's rng, semantic masks the question's SMILES
    and takes the top-1 cosine match against each entry's question+intent
    text (ties break in bank order).
    """
    if strategy == ZERO_SHOT:
        return []
    if not bank:
        raise PromptError(f"strategy {strategy} needs a non-empty exemplar bank")
    if strategy == ONE_SHOT_STATIC:
        designated = [e for e in bank if e.static]
        if not designated:
            designated = [bank[0]]
        return designated
    if strategy == ONE_SHOT_RANDOM:
        if rng is None:
            raise PromptError("random one-shot selection needs an rng")
        return [bank[rng.randrange(len(bank))]]
    if strategy == ONE_SHOT_SEMANTIC:
        if embedder is None:
            raise PromptError("semantic one-shot selection needs an embedder")
        masked_question, _ = mask_smiles(question, known_names=known_names)
        query_vector = embedder.embed(masked_question)
        if not any(query_vector):
            raise PromptError("question embedded to a zero vector")
        best_entry = None
        best_score = -1.0
        for entry in bank:
            entry_vector = embedder.embed(f"{entry.question} {entry.intent}")
            score = cosine(query_vector, entry_vector)
            if score > best_score:  # strict: ties keep the earlier bank entry
                best_score = score
                best_entry = entry
        assert best_entry is not None
        return [best_entry]
    raise PromptError(f"unknown strategy {strategy!r}")


def _exemplar_section(exemplars: list[BankEntry]) -> str:
    if not exemplars:
        return ""
    parts = []
    for entry in exemplars:
        parts.append(
            f"{_EXEMPLAR_HEADER}\n"
            f"Question: {entry.question}\n"
            f"Cypher:\n```cypher\n{entry.cypher}\n```"
        )
    return "\n\n".join(parts) + "\n\n"


def render_prompt(
    version: PromptVersion,
    schema_text: str,
    question: str,
    exemplars: list[BankEntry] | None = None,
) -> tuple[str, str]:
    """Fill the slots; byte-deterministic for identical inputs."""
    if not question:
        raise PromptError("question must be non-empty")
    user = version.user_template
    user = user.replace("{schema}", schema_text)
    user = user.replace("{exemplar}", _exemplar_section(exemplars or []))
    user = user.replace("{question}", question)
    for slot in ("{schema}", "{question}", "{exemplar}"):
        if slot in user:
            raise PromptError(f"unresolved slot {slot} in rendered prompt")
    return version.system_template, user
