"""Checklist-driven generate/validate/correct loop.

One pass per candidate query: (1) static executability check; (2) if
executable, the deterministic direction rewriter runs (never on broken
queries); if not, an LLM corrector gets the diagnostics; (3) an LLM
validator judges the query against a fixed checklist; (4) findings go back
to the corrector for minimal edits. The loop re-enters at the executability
check after every correction and stops when the validator passes or after
three corrector invocations. All SMILES are masked with placeholders before
any text reaches a model.

With the loop disabled this degenerates to plain generation plus the
executability check: no rewrite, no validator, no corrector, so the output
is byte-identical to direct prompting.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from . import cypher
from .graph import KnowledgeGraph, schema_text
from .prompts import MULTI, BankEntry, PromptVersion, get_prompt_version, render_prompt
from .providers import ChatRequest, ProviderError, extract_code_fence

logger = logging.getLogger(__name__)

VALID = "valid"
EXHAUSTED = "exhausted"
ERRORED = "errored"


@dataclass(frozen=True)
class ChecklistItem:
    id: str
    description: str


@dataclass(frozen=True)
class Checklist:
    setting: str
    items: tuple[ChecklistItem, ...]

    def item_ids(self) -> list[str]:
        return [i.id for i in self.items]


def default_checklists() -> tuple[Checklist, Checklist]:
    single = Checklist(
        setting="single_step",
        items=(
            ChecklistItem(
                "full-context-bindings",
                "reactants, products, agents and solvents are each bound via MATCH "
                "or OPTIONAL MATCH and all four appear in the RETURN clause",
            ),
            ChecklistItem(
                "collect-distinct",
                "context lists are returned with collect(DISTINCT ...)",
            ),
            ChecklistItem(
                "yield-null-guard",
                "when yield is filtered or sorted on, WHERE <rel>.yield IS NOT NULL "
                "appears before any sorting or limiting",
            ),
            ChecklistItem(
                "arrow-directions",
                "every relationship arrow matches the schema direction",
            ),
        ),
    )
    multi = Checklist(
        setting="multi_step",
        items=(
            ChecklistItem(
                "endpoint-anchoring",
                "the target molecule is anchored as the path endpoint, not the start",
            ),
            ChecklistItem(
                "exact-hop-count",
                "the exact hop count is enforced with size(relationships(p)) = 2*N",
            ),
            ChecklistItem(
                "bipartite-alternation",
                "bipartite Molecule/Reaction alternation is enforced along the path",
            ),
            ChecklistItem(
                "reaction-nodes-only",
                "only reaction nodes are returned",
            ),
            ChecklistItem(
                "no-extra-returns",
                "there is exactly one RETURN clause with no extra returned values",
            ),
        ),
    )
    return single, multi


def load_checklist(path, setting: str) -> Checklist:
    """Read a checklist from JSONL ({id, description, setting}) for one setting."""
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("setting", setting) == setting:
                items.append(ChecklistItem(obj["id"], obj["description"]))
    if not items:
        raise ValueError(f"no checklist items for setting {setting!r} in {path}")
    ids = [i.id for i in items]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate checklist item ids in {path}")
    return Checklist(setting=setting, items=tuple(items))


def save_checklist(checklist: Checklist, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in checklist.items:
            fh.write(
                json.dumps(
                    {"id": item.id, "description": item.description, "setting": checklist.setting}
                )
                + "\n"
            )


@dataclass
class CoveAttempt:
    query_text: str
    explain_ok: bool = False
    direction_fixed: bool = False
    checklist_findings: list[dict] = field(default_factory=list)
    corrected: bool = False  # this candidate came out of a corrector call
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "query_text": self.query_text,
            "explain_ok": self.explain_ok,
            "direction_fixed": self.direction_fixed,
            "checklist_findings": self.checklist_findings,
            "corrected": self.corrected,
            "warnings": self.warnings,
        }


@dataclass
class CoveTrace:
    attempts: list[CoveAttempt] = field(default_factory=list)
    terminal_status: str = VALID
    corrections: int = 0

    def to_dict(self) -> dict:
        return {
            "attempts": [a.to_dict() for a in self.attempts],
            "terminal_status": self.terminal_status,
            "corrections": self.corrections,
        }


@dataclass
class CoveConfig:
    enabled: bool = True
    max_attempts: int = 3  # corrector invocations, not validator passes


_VALIDATOR_SYSTEM = (
    "You review Cypher queries for a reaction knowledge graph against a fixed "
    "checklist. Be strict but concise."
)

_VALIDATOR_USER = (
    "Checklist:\n{items}\n\n"
    "Query (SMILES strings are masked with placeholders):\n"
    "```cypher\n{query}\n```\n\n"
    "If every checklist item that applies to this query is satisfied, reply with "
    "exactly OK. Otherwise reply with one line per failed item, formatted as "
    "`<item-id>: <short description of the problem>`."
)

_CORRECTOR_SYSTEM = (
    "You repair Cypher queries for a reaction knowledge graph. Apply minimal "
    "edits only to resolve the flagged issues; keep everything else unchanged."
)

_CORRECTOR_USER = (
    "Query (SMILES strings are masked with placeholders; keep the placeholders "
    "exactly as they are):\n"
    "```cypher\n{query}\n```\n\n"
    "Issues to fix:\n{issues}\n\n"
    "Return only the corrected Cypher query enclosed in triple backticks."
)


def checklist_validate(
    masked_query: str, checklist: Checklist, chat
) -> tuple[list[dict], list[str]]:
    """Ask the provider to judge each item; parse findings leniently.

    Unparseable replies degrade to "no findings" with a warning: the loop
    must measure validator weakness, not hide failures behind it.
    """
    items_text = "\n".join(f"- {i.id}: {i.description}" for i in checklist.items)
    user = _VALIDATOR_USER.replace("{items}", items_text).replace("{query}", masked_query)
    reply = chat.chat(ChatRequest(system=_VALIDATOR_SYSTEM, user=user))
    text = reply.strip()
    if not text or text.upper().startswith(("OK", "VALID", "PASS")):
        return [], []
    known = set(checklist.item_ids())
    findings: list[dict] = []
    for line in text.splitlines():
        line = line.strip().lstrip("-* ")
        if not line or ":" not in line:
            continue
        item_id, _, message = line.partition(":")
        item_id = item_id.strip().strip("`")
        if item_id in known:
            findings.append({"item_id": item_id, "message": message.strip()})
    if not findings:
        warning = f"unparseable validator reply treated as pass: {text[:120]!r}"
        logger.warning(warning)
        return [], [warning]
    return findings, []


def _correct(masked_query: str, issues: list[str], chat) -> str:
    issues_text = "\n".join(f"- {i}" for i in issues) or "- (unspecified)"
    user = _CORRECTOR_USER.replace("{query}", masked_query).replace("{issues}", issues_text)
    reply = chat.chat(ChatRequest(system=_CORRECTOR_SYSTEM, user=user))
    return extract_code_fence(reply)


def generate_query(
    question: str,
    prompt_version: PromptVersion,
    schema: str,
    chat,
    exemplars: list[BankEntry] | None = None,
) -> str:
    system, user = render_prompt(prompt_version, schema, question, exemplars)
    reply = chat.chat(ChatRequest(system=system, user=user))
    return extract_code_fence(reply)


def run_cove(
    question: str,
    *,
    setting: str,
    version: int,
    graph: KnowledgeGraph,
    chat,
    config: CoveConfig | None = None,
    exemplars: list[BankEntry] | None = None,
    checklist: Checklist | None = None,
) -> tuple[str | None, CoveTrace]:
    """Generate a query for `question` and (optionally) run the correction loop.

    Returns the final query text to execute (None when the loop exhausted
    its correction budget) and the full attempt trace.
    """
    config = config or CoveConfig()
    if checklist is None:
        single, multi = default_checklists()
        checklist = multi if setting == MULTI else single
    prompt_version = get_prompt_version(setting, version)
    schema = schema_text(graph)
    known_names = frozenset(graph.molecules)
    trace = CoveTrace()

    try:
        query = generate_query(question, prompt_version, schema, chat, exemplars)
    except ProviderError as exc:
        trace.terminal_status = ERRORED
        trace.attempts.append(CoveAttempt(query_text="", warnings=[str(exc)]))
        return None, trace

    if not config.enabled:
        report = cypher.explain(query)
        trace.attempts.append(CoveAttempt(query_text=query, explain_ok=report.executable))
        trace.terminal_status = VALID if report.executable else EXHAUSTED
        return query, trace

    produced_by_correction = False
    attempt: CoveAttempt | None = None
    try:
        while True:
            attempt = CoveAttempt(query_text=query, corrected=produced_by_correction)
            report = cypher.explain(query)
            attempt.explain_ok = report.executable
            if report.executable:
                rewrite = cypher.rewrite_directions_full(cypher.parse(query))
                if rewrite.changed:
                    attempt.direction_fixed = True
                    query = cypher.render(rewrite.query)
                for flag in rewrite.flags:
                    attempt.warnings.append(f"direction rewriter: {flag}")
                masked, mapping = cypher.mask_smiles(query, known_names=known_names)
                findings, warnings = checklist_validate(masked, checklist, chat)
                attempt.checklist_findings = findings
                attempt.warnings.extend(warnings)
                trace.attempts.append(attempt)
                if not findings:
                    trace.terminal_status = VALID
                    return query, trace
                if trace.corrections >= config.max_attempts:
                    trace.terminal_status = EXHAUSTED
                    return None, trace
                trace.corrections += 1
                issues = [f"{f['item_id']}: {f['message']}" for f in findings]
                corrected = _correct(masked, issues, chat)
                query = cypher.unmask_smiles(corrected, mapping, strict=False)
                produced_by_correction = True
            else:
                trace.attempts.append(attempt)
                if trace.corrections >= config.max_attempts:
                    trace.terminal_status = EXHAUSTED
                    return None, trace
                trace.corrections += 1
                masked, mapping = cypher.mask_smiles(query, known_names=known_names)
                corrected = _correct(masked, report.error_messages(), chat)
                query = cypher.unmask_smiles(corrected, mapping, strict=False)
                produced_by_correction = True
    except ProviderError as exc:
        trace.terminal_status = ERRORED
        if attempt is not None and (not trace.attempts or trace.attempts[-1] is not attempt):
            attempt.warnings.append(str(exc))
            trace.attempts.append(attempt)  # keep the in-flight attempt
        elif trace.attempts:
            trace.attempts[-1].warnings.append(str(exc))
        else:
            trace.attempts.append(CoveAttempt(query_text=query, warnings=[str(exc)]))
        return None, trace
