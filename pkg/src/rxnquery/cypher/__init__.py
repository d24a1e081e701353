"""Embedded engine for the Cypher subset used by the reaction-graph templates."""

from __future__ import annotations

from . import ast
from .ast import Query, render, render_expr
from .execute import (
    ExecutionError,
    PathValue,
    ResultTable,
    evaluate,
    execute,
    value_key,
)
from .masking import MaskingError, looks_like_smiles, mask_smiles, unmask_smiles
from .parser import CypherError, CypherSyntaxError, UnsupportedConstructError, parse
from .rewrite import RewriteResult, rewrite_directions, rewrite_directions_full
from .validate import Diagnostic, ValidationReport, validate


def explain(text: str) -> ValidationReport:
    """Static executability check on raw query text (EXPLAIN analogue)."""
    try:
        query = parse(text)
    except CypherError as exc:
        return ValidationReport(
            diagnostics=[
                Diagnostic(exc.code, exc.message, line=exc.line, column=exc.column)
            ]
        )
    return validate(query)


def run(text: str, graph) -> ResultTable:
    """Parse, validate, and execute; raises on non-executable queries."""
    query = parse(text)
    report = validate(query)
    if not report.executable:
        raise ExecutionError("; ".join(report.error_messages()))
    return execute(query, graph)


__all__ = [
    "ast",
    "Query",
    "render",
    "render_expr",
    "parse",
    "validate",
    "execute",
    "evaluate",
    "explain",
    "run",
    "rewrite_directions",
    "rewrite_directions_full",
    "RewriteResult",
    "mask_smiles",
    "unmask_smiles",
    "looks_like_smiles",
    "value_key",
    "CypherError",
    "CypherSyntaxError",
    "UnsupportedConstructError",
    "ExecutionError",
    "MaskingError",
    "Diagnostic",
    "ValidationReport",
    "ResultTable",
    "PathValue",
]
