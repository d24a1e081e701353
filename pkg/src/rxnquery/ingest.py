"""Load, normalize, deduplicate, filter, and sample raw reaction data.

SMILES strings are treated as opaque identifiers. Chemical canonicalization
is a pluggable hook (callable str -> str) defaulting to identity, so the
pipeline stays dependency-free and deterministic.
"""

from __future__ import annotations

import csv
import json
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable

logger = logging.getLogger(__name__)

MAX_PER_ROLE = 4

# Reserved separators for duplicate-detection keys. Neither occurs in SMILES.
_ITEM_SEP = "\x1f"
_ROLE_SEP = "\x1e"


class IngestError(Exception):
    pass


@dataclass
class ReactionRecord:
    """One cleaned reaction with role-tagged molecule lists."""

    id: str
    reactants: list[str]
    products: list[str]
    agents: list[str] = field(default_factory=list)
    solvents: list[str] = field(default_factory=list)
    yields: dict[str, float] = field(default_factory=dict)

    def role_lists(self) -> dict[str, list[str]]:
        return {
            "reactants": self.reactants,
            "products": self.products,
            "agents": self.agents,
            "solvents": self.solvents,
        }


@dataclass
class LoadResult:
    records: list[ReactionRecord]
    errors: list[dict]  # {"line": int, "reason": str}

    def write_error_report(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for err in self.errors:
                fh.write(json.dumps(err) + "\n")


def _split_role(value: str) -> list[str]:
    value = (value or "").strip()
    if not value:
        return []
    return [part for part in value.split(".") if part]


def _parse_yields(value: str, line: int, errors: list[dict]) -> dict[str, float]:
    yields: dict[str, float] = {}
    value = (value or "").strip()
    if not value:
        return yields
    for pair in value.split(";"):
        pair = pair.strip()
        if not pair:
            continue
        if "=" not in pair:
            errors.append({"line": line, "reason": f"malformed yield entry {pair!r}"})
            continue
        smi, _, pct = pair.rpartition("=")
        try:
            yields[smi.strip()] = float(pct)
        except ValueError:
            errors.append({"line": line, "reason": f"non-numeric yield in {pair!r}"})
    return yields


def load_reactions(path, format: str = "csv") -> LoadResult:
    """Read role-tagged reactions from a CSV or JSONL file.

    Malformed rows are collected into the error report rather than dropped
    silently; rows with empty products are rejected here because every
    reaction node must produce at least one molecule.
    """
    if format == "csv":
        return _load_csv(path)
    if format == "jsonl":
        return _load_jsonl(path)
    raise IngestError(f"unknown format {format!r} (expected 'csv' or 'jsonl')")


def _load_csv(path) -> LoadResult:
    records: list[ReactionRecord] = []
    errors: list[dict] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):  # header is line 1
            rid = (row.get("id") or "").strip()
            if not rid:
                errors.append({"line": lineno, "reason": "missing id"})
                continue
            rec = ReactionRecord(
                id=rid,
                reactants=_split_role(row.get("reactants", "")),
                products=_split_role(row.get("products", "")),
                agents=_split_role(row.get("agents", "")),
                solvents=_split_role(row.get("solvents", "")),
                yields=_parse_yields(row.get("yields", ""), lineno, errors),
            )
            if not rec.products:
                errors.append({"line": lineno, "reason": "empty products"})
                continue
            records.append(rec)
    return LoadResult(records, errors)


def _load_jsonl(path) -> LoadResult:
    records: list[ReactionRecord] = []
    errors: list[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append({"line": lineno, "reason": f"invalid JSON: {exc}"})
                continue
            rid = str(obj.get("id") or "").strip()
            if not rid:
                errors.append({"line": lineno, "reason": "missing id"})
                continue
            try:
                yields = {str(k): float(v) for k, v in (obj.get("yields") or {}).items()}
            except (TypeError, ValueError):
                errors.append({"line": lineno, "reason": "malformed yields map"})
                yields = {}
            rec = ReactionRecord(
                id=rid,
                reactants=[str(s) for s in obj.get("reactants") or []],
                products=[str(s) for s in obj.get("products") or []],
                agents=[str(s) for s in obj.get("agents") or []],
                solvents=[str(s) for s in obj.get("solvents") or []],
                yields=yields,
            )
            if not rec.products:
                errors.append({"line": lineno, "reason": "empty products"})
                continue
            records.append(rec)
    return LoadResult(records, errors)


def save_records(records: Iterable[ReactionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "id": rec.id,
                        "reactants": rec.reactants,
                        "products": rec.products,
                        "agents": rec.agents,
                        "solvents": rec.solvents,
                        "yields": rec.yields,
                    }
                )
                + "\n"
            )


def _dedupe_keep_order(items: list[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out


def reaction_key(rec: ReactionRecord) -> str:
    """Order-insensitive within roles, role-sensitive across roles."""
    parts = []
    for role in ("reactants", "products", "agents", "solvents"):
        parts.append(_ITEM_SEP.join(sorted(rec.role_lists()[role])))
    return _ROLE_SEP.join(parts)


def normalize_and_dedupe(
    records: Iterable[ReactionRecord],
    canonicalizer: Callable[[str], str] | None = None,
) -> list[ReactionRecord]:
    """Trim SMILES, apply the optional canonicalizer, drop duplicates.

    Within-role duplicates collapse first; whole-reaction duplicates
    (identical role-wise sorted SMILES multisets) keep the first occurrence.
    A canonicalizer failure excludes the record and logs it.
    """
    cleaned: list[ReactionRecord] = []
    for rec in records:
        try:
            roles = {}
            for role, items in rec.role_lists().items():
                normed = []
                for smi in items:
                    smi = smi.strip()
                    if canonicalizer is not None:
                        smi = canonicalizer(smi)
                    if smi:
                        normed.append(smi)
                roles[role] = _dedupe_keep_order(normed)
        except Exception as exc:  # hook failures exclude the record
            logger.warning("canonicalizer failed on record %s: %s", rec.id, exc)
            continue
        yields: dict[str, float] = {}
        for smi, pct in (rec.yields or {}).items():
            smi = smi.strip()
            if canonicalizer is not None:
                try:
                    smi = canonicalizer(smi)
                except Exception as exc:
                    logger.warning("canonicalizer failed on yield key of %s: %s", rec.id, exc)
                    continue
            if smi not in roles["products"]:
                logger.warning("record %s: yield key %r not in products, dropped", rec.id, smi)
                continue
            if pct < 0 or pct > 100:
                logger.warning("record %s: yield %r clamped to [0, 100]", rec.id, pct)
                pct = min(max(pct, 0.0), 100.0)
            yields[smi] = pct
        cleaned.append(
            ReactionRecord(
                id=rec.id,
                reactants=roles["reactants"],
                products=roles["products"],
                agents=roles["agents"],
                solvents=roles["solvents"],
                yields=yields,
            )
        )

    seen: set[str] = set()
    unique: list[ReactionRecord] = []
    for rec in cleaned:
        key = reaction_key(rec)
        if key in seen:
            continue
        seen.add(key)
        unique.append(rec)
    return unique


def passes_role_bounds(rec: ReactionRecord, max_per_role: int = MAX_PER_ROLE) -> bool:
    return (
        1 <= len(rec.reactants) <= max_per_role
        and 1 <= len(rec.products) <= max_per_role
        and len(rec.agents) <= max_per_role
        and len(rec.solvents) <= max_per_role
    )


def filter_and_sample(
    records: list[ReactionRecord],
    sample_size: int | None = None,
    seed: int = 0,
    max_per_role: int = MAX_PER_ROLE,
    min_molecule_count: int | None = None,
) -> list[ReactionRecord]:
    """Drop records violating role-count bounds, then sample uniformly.

    `min_molecule_count` optionally removes records mentioning a molecule
    that occurs fewer than that many times corpus-wide (rare-entry filter);
    disabled by default. Sampling is deterministic under `seed`.
    """
    survivors = [r for r in records if passes_role_bounds(r, max_per_role)]
    if min_molecule_count is not None and min_molecule_count > 1:
        counts: dict[str, int] = {}
        for rec in survivors:
            for items in rec.role_lists().values():
                for smi in items:
                    counts[smi] = counts.get(smi, 0) + 1
        survivors = [
            r
            for r in survivors
            if all(
                counts[smi] >= min_molecule_count
                for items in r.role_lists().values()
                for smi in items
            )
        ]
    if sample_size is None:
        return survivors
    if sample_size > len(survivors):
        raise IngestError(
            f"sample_size {sample_size} exceeds {len(survivors)} surviving records"
        )
    rng = random.Random(seed)
    return rng.sample(survivors, sample_size)
