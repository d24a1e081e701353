"""Static executability checks over a parsed query (EXPLAIN analogue).

Validation walks the clause list tracking variable scope, checks label and
relationship-kind existence, aggregate placement, and clause ordering. It
never touches graph data, so it is safe to run on untrusted generated
queries before execution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..graph import MOLECULE, REACTION
from . import ast

KNOWN_LABELS = (MOLECULE, REACTION)

# Functions the executor implements. collect is the only aggregate.
SCALAR_FUNCTIONS = {"size", "nodes", "relationships", "labels", "range"}
AGGREGATE_FUNCTIONS = {"collect"}


@dataclass
class Diagnostic:
    code: str
    message: str
    severity: str = "error"
    line: int = 0
    column: int = 0

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "message": self.message,
            "line": self.line,
            "column": self.column,
        }


@dataclass
class ValidationReport:
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def executable(self) -> bool:
        return not any(d.severity == "error" for d in self.diagnostics)

    def error_messages(self) -> list[str]:
        return [f"{d.code}: {d.message}" for d in self.diagnostics if d.severity == "error"]


def _pattern_variables(pattern: ast.PathPattern) -> list[str]:
    names = []
    if pattern.path_variable:
        names.append(pattern.path_variable)
    for node in pattern.nodes:
        if node.variable:
            names.append(node.variable)
    for rel in pattern.rels:
        if rel.variable:
            names.append(rel.variable)
    return names


_walk_exprs = ast.walk


def _free_variables(expr: ast.Expr, bound: frozenset[str] = frozenset()):
    """Variables referenced by `expr` that are not locally bound."""
    if isinstance(expr, ast.Variable):
        if expr.name not in bound:
            yield expr.name
    elif isinstance(expr, ast.AllPredicate):
        yield from _free_variables(expr.container, bound)
        yield from _free_variables(expr.predicate, bound | {expr.variable})
    elif isinstance(expr, ast.ListComprehension):
        yield from _free_variables(expr.container, bound)
        inner = bound | {expr.variable}
        if expr.predicate is not None:
            yield from _free_variables(expr.predicate, inner)
        if expr.projection is not None:
            yield from _free_variables(expr.projection, inner)
    elif isinstance(expr, ast.Property):
        yield from _free_variables(expr.subject, bound)
    elif isinstance(expr, ast.Comparison):
        yield from _free_variables(expr.left, bound)
        yield from _free_variables(expr.right, bound)
    elif isinstance(expr, ast.BoolOp):
        for op in expr.operands:
            yield from _free_variables(op, bound)
    elif isinstance(expr, ast.NotOp):
        yield from _free_variables(expr.operand, bound)
    elif isinstance(expr, ast.NullCheck):
        yield from _free_variables(expr.subject, bound)
    elif isinstance(expr, ast.InOp):
        yield from _free_variables(expr.item, bound)
        yield from _free_variables(expr.container, bound)
    elif isinstance(expr, ast.Arithmetic):
        yield from _free_variables(expr.left, bound)
        yield from _free_variables(expr.right, bound)
    elif isinstance(expr, ast.UnaryMinus):
        yield from _free_variables(expr.operand, bound)
    elif isinstance(expr, ast.FunctionCall):
        for arg in expr.args:
            yield from _free_variables(arg, bound)
    elif isinstance(expr, ast.ListLiteral):
        for item in expr.items:
            yield from _free_variables(item, bound)
    elif isinstance(expr, ast.Subscript):
        yield from _free_variables(expr.subject, bound)
        yield from _free_variables(expr.index, bound)


def _contains_aggregate(expr: ast.Expr) -> bool:
    return any(
        isinstance(e, ast.FunctionCall) and e.name in AGGREGATE_FUNCTIONS
        for e in _walk_exprs(expr)
    )


def validate(query: ast.Query) -> ValidationReport:
    report = ValidationReport()
    err = lambda code, msg: report.diagnostics.append(Diagnostic(code, msg))  # noqa: E731

    scope: set[str] = set()
    node_vars: set[str] = set()
    rel_vars: set[str] = set()
    path_vars: set[str] = set()
    node_labels: dict[str, str] = {}
    prev: ast.Clause | None = None
    saw_return = False

    def check_expr_scope(expr: ast.Expr, where: str) -> None:
        for name in _free_variables(expr):
            if name not in scope:
                err("unbound-variable", f"variable {name!r} is not defined in {where}")

    def check_aggregates(expr: ast.Expr, allow_top: bool, where: str) -> None:
        for sub in _walk_exprs(expr):
            if isinstance(sub, ast.FunctionCall):
                if sub.name in AGGREGATE_FUNCTIONS:
                    if not allow_top:
                        err("misplaced-aggregate", f"{sub.name}() is not allowed in {where}")
                    for arg in sub.args:
                        if _contains_aggregate(arg):
                            err(
                                "nested-aggregate",
                                f"aggregate nested inside {sub.name}() in {where}",
                            )
                elif sub.name not in SCALAR_FUNCTIONS:
                    err("unknown-function", f"unknown function {sub.name}()")

    for clause in query.clauses:
        if saw_return and not isinstance(clause, (ast.OrderByClause, ast.LimitClause)):
            err("clause-order", "only ORDER BY / LIMIT may follow RETURN")
        if isinstance(clause, ast.MatchClause):
            for pattern in clause.patterns:
                for node in pattern.nodes:
                    if node.label and node.label not in KNOWN_LABELS:
                        err("unknown-label", f"unknown node label {node.label!r}")
                    if node.variable:
                        if node.variable in rel_vars or node.variable in path_vars:
                            err(
                                "variable-kind-conflict",
                                f"{node.variable!r} is already bound to a non-node value",
                            )
                        known = node_labels.get(node.variable)
                        if node.label:
                            if known and known != node.label:
                                err(
                                    "label-conflict",
                                    f"variable {node.variable!r} bound with labels "
                                    f"{known!r} and {node.label!r}",
                                )
                            node_labels[node.variable] = node.label
                        node_vars.add(node.variable)
                for rel in pattern.rels:
                    if rel.variable:
                        if rel.variable in node_vars or rel.variable in path_vars:
                            err(
                                "variable-kind-conflict",
                                f"{rel.variable!r} is already bound to a non-relationship value",
                            )
                        rel_vars.add(rel.variable)
                if pattern.path_variable:
                    if pattern.path_variable in node_vars or pattern.path_variable in rel_vars:
                        err(
                            "variable-kind-conflict",
                            f"{pattern.path_variable!r} is already bound to a non-path value",
                        )
                    path_vars.add(pattern.path_variable)
                scope.update(_pattern_variables(pattern))
        elif isinstance(clause, ast.WhereClause):
            if not isinstance(prev, (ast.MatchClause, ast.WithClause)):
                err("clause-order", "WHERE must follow MATCH or WITH")
            check_expr_scope(clause.expr, "WHERE")
            check_aggregates(clause.expr, allow_top=False, where="WHERE")
        elif isinstance(clause, (ast.WithClause, ast.ReturnClause)):
            names: list[str] = []
            for item in clause.items:
                check_expr_scope(item.expr, "projection")
                check_aggregates(item.expr, allow_top=True, where="projection")
                if isinstance(clause, ast.WithClause) and item.alias is None and not isinstance(
                    item.expr, ast.Variable
                ):
                    err(
                        "with-expression-needs-alias",
                        f"WITH item {ast.render_expr(item.expr)!r} needs an AS alias",
                    )
                names.append(ast.column_name(item))
            dupes = {n for n in names if names.count(n) > 1}
            for name in sorted(dupes):
                err("duplicate-column", f"output column {name!r} declared more than once")
            # projection resets the scope to the projected names
            scope = set(names)
            node_vars &= scope
            rel_vars &= scope
            path_vars &= scope
            node_labels = {k: v for k, v in node_labels.items() if k in scope}
            if isinstance(clause, ast.ReturnClause):
                saw_return = True
        elif isinstance(clause, ast.OrderByClause):
            if not isinstance(prev, (ast.WithClause, ast.ReturnClause)):
                err("clause-order", "ORDER BY must directly follow WITH or RETURN")
            for expr, _asc in clause.keys:
                check_expr_scope(expr, "ORDER BY")
                check_aggregates(expr, allow_top=False, where="ORDER BY")
        elif isinstance(clause, ast.LimitClause):
            if not isinstance(prev, (ast.WithClause, ast.ReturnClause, ast.OrderByClause)):
                err("clause-order", "LIMIT must follow WITH, RETURN, or ORDER BY")
            if clause.count < 0:
                err("invalid-limit", f"LIMIT must be non-negative, got {clause.count}")
        prev = clause

    if not saw_return:
        err("missing-return", "query must end with a RETURN clause")
    return report
