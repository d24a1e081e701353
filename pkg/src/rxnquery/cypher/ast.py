"""AST for the Cypher subset, plus a canonical renderer.

Queries are an ordered clause list. Patterns are chains of node and
relationship atoms; relationship atoms carry a direction and optional
variable-length bounds. All nodes are frozen dataclasses so structural
equality and hashing come for free.
"""

from __future__ import annotations

from dataclasses import dataclass

LEFT = "left"
RIGHT = "right"
UNDIRECTED = "undirected"


# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    value: object  # str | int | float | bool | None


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Property:
    subject: "Expr"
    name: str


@dataclass(frozen=True)
class Comparison:
    op: str  # = <> < <= > >=
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class BoolOp:
    op: str  # AND | OR
    operands: tuple["Expr", ...]


@dataclass(frozen=True)
class NotOp:
    operand: "Expr"


@dataclass(frozen=True)
class NullCheck:
    subject: "Expr"
    negated: bool  # True for IS NOT NULL


@dataclass(frozen=True)
class InOp:
    item: "Expr"
    container: "Expr"


@dataclass(frozen=True)
class Arithmetic:
    op: str  # % + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class UnaryMinus:
    operand: "Expr"


@dataclass(frozen=True)
class FunctionCall:
    name: str  # lowercase
    args: tuple["Expr", ...]
    distinct: bool = False


@dataclass(frozen=True)
class AllPredicate:
    variable: str
    container: "Expr"
    predicate: "Expr"


@dataclass(frozen=True)
class ListLiteral:
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class ListComprehension:
    variable: str
    container: "Expr"
    predicate: "Expr | None"
    projection: "Expr | None"


@dataclass(frozen=True)
class Subscript:
    subject: "Expr"
    index: "Expr"


Expr = (
    Literal
    | Variable
    | Property
    | Comparison
    | BoolOp
    | NotOp
    | NullCheck
    | InOp
    | Arithmetic
    | UnaryMinus
    | FunctionCall
    | AllPredicate
    | ListLiteral
    | ListComprehension
    | Subscript
)


# -- patterns ----------------------------------------------------------------


@dataclass(frozen=True)
class NodePattern:
    variable: str | None = None
    label: str | None = None
    properties: tuple[tuple[str, object], ...] = ()


@dataclass(frozen=True)
class RelPattern:
    variable: str | None = None
    kinds: tuple[str, ...] = ()
    direction: str = UNDIRECTED
    var_length: tuple[int, int] | None = None  # (min, max), both >= 1


@dataclass(frozen=True)
class PathPattern:
    nodes: tuple[NodePattern, ...]
    rels: tuple[RelPattern, ...]
    path_variable: str | None = None


# -- clauses -----------------------------------------------------------------


@dataclass(frozen=True)
class MatchClause:
    patterns: tuple[PathPattern, ...]
    optional: bool = False


@dataclass(frozen=True)
class WhereClause:
    expr: Expr


@dataclass(frozen=True)
class Projection:
    expr: Expr
    alias: str | None = None


@dataclass(frozen=True)
class WithClause:
    items: tuple[Projection, ...]
    distinct: bool = False


@dataclass(frozen=True)
class ReturnClause:
    items: tuple[Projection, ...]
    distinct: bool = False


@dataclass(frozen=True)
class OrderByClause:
    keys: tuple[tuple[Expr, bool], ...]  # (expr, ascending)


@dataclass(frozen=True)
class LimitClause:
    count: int


Clause = MatchClause | WhereClause | WithClause | ReturnClause | OrderByClause | LimitClause


@dataclass(frozen=True)
class Query:
    clauses: tuple[Clause, ...]


def walk(expr: Expr):
    """Yield `expr` and every subexpression, depth-first."""
    yield expr
    if isinstance(expr, Property):
        yield from walk(expr.subject)
    elif isinstance(expr, Comparison):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, BoolOp):
        for op in expr.operands:
            yield from walk(op)
    elif isinstance(expr, NotOp):
        yield from walk(expr.operand)
    elif isinstance(expr, NullCheck):
        yield from walk(expr.subject)
    elif isinstance(expr, InOp):
        yield from walk(expr.item)
        yield from walk(expr.container)
    elif isinstance(expr, Arithmetic):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, UnaryMinus):
        yield from walk(expr.operand)
    elif isinstance(expr, FunctionCall):
        for arg in expr.args:
            yield from walk(arg)
    elif isinstance(expr, AllPredicate):
        yield from walk(expr.container)
        yield from walk(expr.predicate)
    elif isinstance(expr, ListLiteral):
        for item in expr.items:
            yield from walk(item)
    elif isinstance(expr, ListComprehension):
        yield from walk(expr.container)
        if expr.predicate is not None:
            yield from walk(expr.predicate)
        if expr.projection is not None:
            yield from walk(expr.projection)
    elif isinstance(expr, Subscript):
        yield from walk(expr.subject)
        yield from walk(expr.index)


# -- rendering ----------------------------------------------------------------


def _render_value(value: object) -> str:
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, float) and value.is_integer():
        return repr(value)
    return repr(value)


_PRECEDENCE = {
    "OR": 1,
    "AND": 2,
    "NOT": 3,
    "CMP": 4,
    "+": 5,
    "-": 5,
    "*": 6,
    "/": 6,
    "%": 6,
    "UMINUS": 7,
}


def _prec(expr: Expr) -> int:
    if isinstance(expr, BoolOp):
        return _PRECEDENCE[expr.op]
    if isinstance(expr, NotOp):
        return _PRECEDENCE["NOT"]
    if isinstance(expr, (Comparison, InOp, NullCheck)):
        return _PRECEDENCE["CMP"]
    if isinstance(expr, Arithmetic):
        return _PRECEDENCE[expr.op]
    if isinstance(expr, UnaryMinus):
        return _PRECEDENCE["UMINUS"]
    return 99


def _child(expr: Expr, parent_prec: int) -> str:
    text = render_expr(expr)
    if _prec(expr) < parent_prec:
        return f"({text})"
    return text


def render_expr(expr: Expr) -> str:
    if isinstance(expr, Literal):
        return _render_value(expr.value)
    if isinstance(expr, Variable):
        return expr.name
    if isinstance(expr, Property):
        return f"{_child(expr.subject, 99)}.{expr.name}"
    if isinstance(expr, Comparison):
        p = _PRECEDENCE["CMP"]
        return f"{_child(expr.left, p + 1)} {expr.op} {_child(expr.right, p + 1)}"
    if isinstance(expr, BoolOp):
        p = _PRECEDENCE[expr.op]
        return f" {expr.op} ".join(_child(op, p + 1) for op in expr.operands)
    if isinstance(expr, NotOp):
        return f"NOT {_child(expr.operand, _PRECEDENCE['NOT'])}"
    if isinstance(expr, NullCheck):
        check = "IS NOT NULL" if expr.negated else "IS NULL"
        return f"{_child(expr.subject, _PRECEDENCE['CMP'] + 1)} {check}"
    if isinstance(expr, InOp):
        p = _PRECEDENCE["CMP"]
        return f"{_child(expr.item, p + 1)} IN {_child(expr.container, p + 1)}"
    if isinstance(expr, Arithmetic):
        p = _PRECEDENCE[expr.op]
        return f"{_child(expr.left, p)} {expr.op} {_child(expr.right, p + 1)}"
    if isinstance(expr, UnaryMinus):
        return f"-{_child(expr.operand, _PRECEDENCE['UMINUS'])}"
    if isinstance(expr, FunctionCall):
        inner = ", ".join(render_expr(a) for a in expr.args)
        if expr.distinct:
            inner = f"DISTINCT {inner}"
        return f"{expr.name}({inner})"
    if isinstance(expr, AllPredicate):
        return (
            f"all({expr.variable} IN {render_expr(expr.container)} "
            f"WHERE {render_expr(expr.predicate)})"
        )
    if isinstance(expr, ListLiteral):
        return "[" + ", ".join(render_expr(i) for i in expr.items) + "]"
    if isinstance(expr, ListComprehension):
        text = f"[{expr.variable} IN {render_expr(expr.container)}"
        if expr.predicate is not None:
            text += f" WHERE {render_expr(expr.predicate)}"
        if expr.projection is not None:
            text += f" | {render_expr(expr.projection)}"
        return text + "]"
    if isinstance(expr, Subscript):
        return f"{_child(expr.subject, 99)}[{render_expr(expr.index)}]"
    raise TypeError(f"cannot render {expr!r}")


def render_node(node: NodePattern) -> str:
    text = node.variable or ""
    if node.label:
        text += f":{node.label}"
    if node.properties:
        props = ", ".join(f"{k}: {_render_value(v)}" for k, v in node.properties)
        text += ("" if not text else " ") + "{" + props + "}"
    return f"({text})"


def render_rel(rel: RelPattern) -> str:
    body = rel.variable or ""
    if rel.kinds:
        body += ":" + "|".join(rel.kinds)
    if rel.var_length is not None:
        lo, hi = rel.var_length
        body += f"*{lo}..{hi}" if lo != 1 else f"*..{hi}"
    inner = f"[{body}]" if body else ""
    if rel.direction == RIGHT:
        return f"-{inner}->"
    if rel.direction == LEFT:
        return f"<-{inner}-"
    return f"-{inner}-"


def render_pattern(pat: PathPattern) -> str:
    parts = []
    if pat.path_variable:
        parts.append(f"{pat.path_variable} = ")
    parts.append(render_node(pat.nodes[0]))
    for rel, node in zip(pat.rels, pat.nodes[1:]):
        parts.append(render_rel(rel))
        parts.append(render_node(node))
    return "".join(parts)


def _render_projection(item: Projection) -> str:
    text = render_expr(item.expr)
    if item.alias:
        text += f" AS {item.alias}"
    return text


def render(query: Query) -> str:
    """Canonical text form; reparsing it yields a structurally equal AST."""
    lines = []
    for clause in query.clauses:
        if isinstance(clause, MatchClause):
            kw = "OPTIONAL MATCH" if clause.optional else "MATCH"
            lines.append(f"{kw} " + ", ".join(render_pattern(p) for p in clause.patterns))
        elif isinstance(clause, WhereClause):
            lines.append(f"WHERE {render_expr(clause.expr)}")
        elif isinstance(clause, WithClause):
            kw = "WITH DISTINCT" if clause.distinct else "WITH"
            lines.append(f"{kw} " + ", ".join(_render_projection(i) for i in clause.items))
        elif isinstance(clause, ReturnClause):
            kw = "RETURN DISTINCT" if clause.distinct else "RETURN"
            lines.append(f"{kw} " + ", ".join(_render_projection(i) for i in clause.items))
        elif isinstance(clause, OrderByClause):
            keys = ", ".join(
                render_expr(e) + ("" if asc else " DESC") for e, asc in clause.keys
            )
            lines.append(f"ORDER BY {keys}")
        elif isinstance(clause, LimitClause):
            lines.append(f"LIMIT {clause.count}")
        else:
            raise TypeError(f"cannot render clause {clause!r}")
    return "\n".join(lines)


def column_name(item: Projection) -> str:
    """Output column name: the alias, or the rendered expression text."""
    return item.alias if item.alias else render_expr(item.expr)
