"""Query execution against a KnowledgeGraph.

Match semantics: homomorphic node binding (the same graph node may bind
several variables) with relationship uniqueness per pattern path, i.e. no
edge is reused within one matched path. Variable-length relationships
enumerate edge-unique trails; node repetition is allowed. WHERE uses
ternary null logic (null never passes the filter), OPTIONAL MATCH binds
null on no match, and collect() skips nulls.

Row order is deterministic: candidates are enumerated in graph insertion
order, grouping preserves first-seen order, and sorting is stable with
insertion order as the final tie-break.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..graph import Edge, KnowledgeGraph, NodeRef
from . import ast
from .validate import AGGREGATE_FUNCTIONS


class ExecutionError(Exception):
    pass


@dataclass(frozen=True)
class PathValue:
    """Alternating node/edge sequence bound by `p = (...)` patterns."""

    nodes: tuple[NodeRef, ...]
    edges: tuple[Edge, ...]


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[dict]

    def __len__(self) -> int:
        return len(self.rows)


# -- value helpers -------------------------------------------------------------


def value_key(value) -> tuple:
    """Canonical hashable key for DISTINCT / grouping comparisons."""
    if value is None:
        return ("null",)
    if isinstance(value, bool):
        return ("bool", value)
    if isinstance(value, (int, float)):
        return ("num", float(value))
    if isinstance(value, str):
        return ("str", value)
    if isinstance(value, NodeRef):
        return ("node", value.label, value.key)
    if isinstance(value, Edge):
        return ("edge", value.kind, value_key(value.source), value_key(value.target))
    if isinstance(value, PathValue):
        return ("path", tuple(value_key(n) for n in value.nodes), tuple(value_key(e) for e in value.edges))
    if isinstance(value, list):
        return ("list", tuple(value_key(v) for v in value))
    if isinstance(value, dict):
        return ("map", tuple(sorted((k, value_key(v)) for k, v in value.items())))
    raise ExecutionError(f"cannot key value of type {type(value).__name__}")


def values_equal(a, b) -> bool | None:
    """Cypher equality: null-propagating, numeric across int/float."""
    if a is None or b is None:
        return None
    if isinstance(a, bool) or isinstance(b, bool):
        if isinstance(a, bool) and isinstance(b, bool):
            return a == b
        return False
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return float(a) == float(b)
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            return False
        for x, y in zip(a, b):
            eq = values_equal(x, y)
            if eq is not True:
                return False
        return True
    if type(a) is not type(b):
        return False
    return a == b


_TYPE_RANK = {bool: 0, int: 1, float: 1, str: 2}


def sort_key(value) -> tuple:
    if value is None:
        return (1, 0, 0)
    if isinstance(value, bool):
        return (0, _TYPE_RANK[bool], int(value))
    if isinstance(value, (int, float)):
        return (0, _TYPE_RANK[int], float(value))
    if isinstance(value, str):
        return (0, _TYPE_RANK[str], value)
    if isinstance(value, NodeRef):
        return (0, 4, (value.label, value.key))
    if isinstance(value, list):
        return (0, 3, tuple(sort_key(v) for v in value))
    return (0, 5, str(value))


# -- expression evaluation ------------------------------------------------------


def evaluate(expr: ast.Expr, row: dict, graph: KnowledgeGraph):
    if isinstance(expr, ast.Literal):
        return expr.value
    if isinstance(expr, ast.Variable):
        try:
            return row[expr.name]
        except KeyError as exc:
            raise ExecutionError(f"variable {expr.name!r} is not bound") from exc
    if isinstance(expr, ast.Property):
        subject = evaluate(expr.subject, row, graph)
        if subject is None:
            return None
        if isinstance(subject, NodeRef):
            return graph.node_property(subject, expr.name)
        if isinstance(subject, Edge):
            return subject.yield_pct if expr.name == "yield" else None
        if isinstance(subject, dict):
            return subject.get(expr.name)
        return None
    if isinstance(expr, ast.Comparison):
        return _compare(
            expr.op,
            evaluate(expr.left, row, graph),
            evaluate(expr.right, row, graph),
        )
    if isinstance(expr, ast.BoolOp):
        values = [evaluate(op, row, graph) for op in expr.operands]
        if expr.op == "AND":
            if any(v is False for v in values):
                return False
            if any(v is None for v in values):
                return None
            return True
        if any(v is True for v in values):
            return True
        if any(v is None for v in values):
            return None
        return False
    if isinstance(expr, ast.NotOp):
        value = evaluate(expr.operand, row, graph)
        return None if value is None else (not value)
    if isinstance(expr, ast.NullCheck):
        value = evaluate(expr.subject, row, graph)
        return (value is not None) if expr.negated else (value is None)
    if isinstance(expr, ast.InOp):
        item = evaluate(expr.item, row, graph)
        container = evaluate(expr.container, row, graph)
        if container is None or item is None:
            return None
        if not isinstance(container, list):
            raise ExecutionError("IN expects a list on the right-hand side")
        return any(values_equal(item, x) is True for x in container)
    if isinstance(expr, ast.Arithmetic):
        left = evaluate(expr.left, row, graph)
        right = evaluate(expr.right, row, graph)
        if left is None or right is None:
            return None
        if not isinstance(left, (int, float)) or not isinstance(right, (int, float)):
            raise ExecutionError(f"arithmetic {expr.op} expects numbers")
        try:
            if expr.op == "%":
                return left % right
            if expr.op == "+":
                return left + right
            if expr.op == "-":
                return left - right
            if expr.op == "*":
                return left * right
            return left / right
        except ZeroDivisionError as exc:
            raise ExecutionError("division by zero") from exc
    if isinstance(expr, ast.UnaryMinus):
        value = evaluate(expr.operand, row, graph)
        if value is None:
            return None
        if not isinstance(value, (int, float)):
            raise ExecutionError("unary minus expects a number")
        return -value
    if isinstance(expr, ast.FunctionCall):
        return _call_function(expr, row, graph)
    if isinstance(expr, ast.AllPredicate):
        container = evaluate(expr.container, row, graph)
        if container is None:
            return None
        if not isinstance(container, list):
            raise ExecutionError("all() expects a list")
        saw_null = False
        for item in container:
            result = evaluate(expr.predicate, {**row, expr.variable: item}, graph)
            if result is False:
                return False
            if result is None:
                saw_null = True
        return None if saw_null else True
    if isinstance(expr, ast.ListLiteral):
        return [evaluate(item, row, graph) for item in expr.items]
    if isinstance(expr, ast.ListComprehension):
        container = evaluate(expr.container, row, graph)
        if container is None:
            return None
        if not isinstance(container, list):
            raise ExecutionError("list comprehension expects a list")
        out = []
        for item in container:
            inner = {**row, expr.variable: item}
            if expr.predicate is not None:
                if evaluate(expr.predicate, inner, graph) is not True:
                    continue
            out.append(
                evaluate(expr.projection, inner, graph) if expr.projection is not None else item
            )
        return out
    if isinstance(expr, ast.Subscript):
        subject = evaluate(expr.subject, row, graph)
        index = evaluate(expr.index, row, graph)
        if subject is None or index is None:
            return None
        if not isinstance(subject, list) or not isinstance(index, int) or isinstance(index, bool):
            raise ExecutionError("subscript expects list[int]")
        if -len(subject) <= index < len(subject):
            return subject[index]
        return None
    raise ExecutionError(f"cannot evaluate {expr!r}")


def _compare(op: str, left, right):
    if op == "=":
        return values_equal(left, right)
    if op == "<>":
        eq = values_equal(left, right)
        return None if eq is None else (not eq)
    if left is None or right is None:
        return None
    numeric = isinstance(left, (int, float)) and isinstance(right, (int, float))
    if isinstance(left, bool) or isinstance(right, bool):
        numeric = False
    stringy = isinstance(left, str) and isinstance(right, str)
    if not numeric and not stringy:
        return None  # incomparable types order as null
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    raise ExecutionError(f"unknown comparison operator {op!r}")


def _call_function(expr: ast.FunctionCall, row: dict, graph: KnowledgeGraph):
    name = expr.name
    if name in AGGREGATE_FUNCTIONS:
        raise ExecutionError(f"{name}() used outside an aggregating projection")
    args = [evaluate(a, row, graph) for a in expr.args]
    if name == "size":
        (value,) = args
        if value is None:
            return None
        if isinstance(value, (list, str)):
            return len(value)
        raise ExecutionError("size() expects a list or string")
    if name == "nodes":
        (value,) = args
        if value is None:
            return None
        if isinstance(value, PathValue):
            return list(value.nodes)
        raise ExecutionError("nodes() expects a path")
    if name == "relationships":
        (value,) = args
        if value is None:
            return None
        if isinstance(value, PathValue):
            return list(value.edges)
        raise ExecutionError("relationships() expects a path")
    if name == "labels":
        (value,) = args
        if value is None:
            return None
        if isinstance(value, NodeRef):
            return [value.label]
        raise ExecutionError("labels() expects a node")
    if name == "range":
        if len(args) not in (2, 3):
            raise ExecutionError("range() expects 2 or 3 arguments")
        if any(a is None for a in args):
            return None
        start, end = int(args[0]), int(args[1])
        step = int(args[2]) if len(args) == 3 else 1
        if step == 0:
            raise ExecutionError("range() step must be non-zero")
        out = []
        i = start
        while (step > 0 and i <= end) or (step < 0 and i >= end):
            out.append(i)
            i += step
        return out
    raise ExecutionError(f"unknown function {name}()")


# -- pattern matching -----------------------------------------------------------


def _node_matches(graph: KnowledgeGraph, atom: ast.NodePattern, value) -> bool:
    if not isinstance(value, NodeRef):
        return False
    if atom.label and value.label != atom.label:
        return False
    for name, want in atom.properties:
        if graph.node_property(value, name) != want:
            return False
    return True


def _seed_candidates(graph: KnowledgeGraph, atom: ast.NodePattern, env: dict) -> list[NodeRef]:
    if atom.variable and atom.variable in env:
        value = env[atom.variable]
        return [value] if _node_matches(graph, atom, value) else []
    props = dict(atom.properties)
    if "name" in props and atom.label in (None, "Molecule"):
        node = graph.molecules.get(props["name"])
        return [node] if node is not None and _node_matches(graph, atom, node) else []
    if "id" in props and atom.label in (None, "Reaction"):
        node = graph.reactions.get(props["id"])
        return [node] if node is not None and _node_matches(graph, atom, node) else []
    if atom.label == "Molecule":
        pool: list[NodeRef] = list(graph.molecules.values())
    elif atom.label == "Reaction":
        pool = list(graph.reactions.values())
    else:
        pool = graph.nodes()
    if atom.properties:
        pool = [n for n in pool if _node_matches(graph, atom, n)]
    return pool


def _seed_score(atom: ast.NodePattern, env: dict) -> int:
    if atom.variable and atom.variable in env:
        return 0
    if atom.properties:
        return 1
    if atom.label:
        return 2
    return 3


def _hop_candidates(
    graph: KnowledgeGraph, current: NodeRef, rel: ast.RelPattern, forward: bool
) -> list[tuple[Edge, NodeRef]]:
    """One-hop continuations from `current` along a relationship atom.

    `forward` means we are extending toward the pattern's right end; the
    arrow decides whether that consumes stored out- or in-edges.
    """
    kinds = rel.kinds or None
    out: list[tuple[Edge, NodeRef]] = []
    if rel.direction == ast.RIGHT:
        directions = ("out",) if forward else ("in",)
    elif rel.direction == ast.LEFT:
        directions = ("in",) if forward else ("out",)
    else:
        directions = ("out", "in")
    for d in directions:
        if kinds is None:
            edges = graph.out_edges(current) if d == "out" else graph.in_edges(current)
        else:
            edges = []
            for k in kinds:
                edges.extend(
                    graph.out_edges(current, k) if d == "out" else graph.in_edges(current, k)
                )
        for e in edges:
            out.append((e, e.target if d == "out" else e.source))
    return out


def _match_pattern(graph: KnowledgeGraph, base_row: dict, pattern: ast.PathPattern):
    """Yield rows extending `base_row` with this path pattern's bindings."""
    nodes, rels = pattern.nodes, pattern.rels
    k = len(nodes)
    seed = min(range(k), key=lambda i: (_seed_score(nodes[i], base_row), i))

    def bind_node(env: dict, atom: ast.NodePattern, value: NodeRef) -> dict | None:
        if not _node_matches(graph, atom, value):
            return None
        if atom.variable:
            if atom.variable in env:
                if env[atom.variable] != value:
                    return None
                return env
            return {**env, atom.variable: value}
        return env

    def bind_rel(env: dict, rel: ast.RelPattern, value) -> dict | None:
        if rel.variable is None:
            return env
        if rel.variable in env:
            existing = env[rel.variable]
            return env if existing == value else None
        return {**env, rel.variable: value}

    def rel_steps(env, used, current, rel, next_atom, forward):
        """Yield (elements, next_node, env2, used2) continuations.

        `elements` is the slot's traversal in pattern (left-to-right) order
        as (edge, node-arrived-at) pairs.
        """
        if rel.var_length is None:
            for edge, nb in _hop_candidates(graph, current, rel, forward):
                if edge in used:
                    continue
                env2 = bind_node(env, next_atom, nb)
                if env2 is None:
                    continue
                env3 = bind_rel(env2, rel, edge)
                if env3 is None:
                    continue
                elements = [(edge, nb)] if forward else [(edge, current)]
                yield elements, nb, env3, used | {edge}
            return
        lo, hi = rel.var_length

        def walk(node, steps, used_now):
            depth = len(steps)
            if depth >= lo:
                terminal = steps[-1][1]
                env2 = bind_node(env, next_atom, terminal)
                if env2 is not None:
                    if forward:
                        elements = list(steps)
                    else:
                        # steps walked right-to-left; rebuild in pattern order
                        back_nodes = [current] + [n for _, n in steps]
                        elements = [
                            (steps[i][0], back_nodes[i])
                            for i in range(len(steps) - 1, -1, -1)
                        ]
                    edge_list = [e for e, _ in elements]
                    env3 = bind_rel(env2, rel, edge_list)
                    if env3 is not None:
                        yield elements, terminal, env3, used_now
            if depth == hi:
                return
            for edge, nb in _hop_candidates(graph, node, rel, forward):
                if edge in used_now:
                    continue
                yield from walk(nb, steps + [(edge, nb)], used_now | {edge})

        yield from walk(current, [], used)

    def go(env, used, node_vals, rel_elems, pos, moving_right):
        if moving_right:
            if pos == k - 1:
                yield from go(env, used, node_vals, rel_elems, seed, False)
                return
            rel, atom = rels[pos], nodes[pos + 1]
            for elements, nb, env2, used2 in rel_steps(
                env, used, node_vals[pos], rel, atom, forward=True
            ):
                nv = list(node_vals)
                nv[pos + 1] = nb
                re_ = list(rel_elems)
                re_[pos] = elements
                yield from go(env2, used2, nv, re_, pos + 1, True)
        else:
            if pos == 0:
                yield env, node_vals, rel_elems
                return
            rel, atom = rels[pos - 1], nodes[pos - 1]
            for elements, nb, env2, used2 in rel_steps(
                env, used, node_vals[pos], rel, atom, forward=False
            ):
                nv = list(node_vals)
                nv[pos - 1] = nb
                re_ = list(rel_elems)
                re_[pos - 1] = elements
                yield from go(env2, used2, nv, re_, pos - 1, False)

    for candidate in _seed_candidates(graph, nodes[seed], base_row):
        env0 = bind_node(base_row, nodes[seed], candidate)
        if env0 is None:
            continue
        node_vals: list = [None] * k
        node_vals[seed] = candidate
        for env, nv, relems in go(env0, frozenset(), node_vals, [None] * (k - 1), seed, True):
            if pattern.path_variable is not None:
                path_nodes = [nv[0]]
                path_edges = []
                for elements in relems:
                    for edge, node in elements:
                        path_edges.append(edge)
                        path_nodes.append(node)
                path = PathValue(tuple(path_nodes), tuple(path_edges))
                if pattern.path_variable in env:
                    if env[pattern.path_variable] != path:
                        continue
                    yield env
                    continue
                env = {**env, pattern.path_variable: path}
            yield env


def _pattern_new_variables(pattern: ast.PathPattern, row: dict) -> list[str]:
    out = []
    if pattern.path_variable and pattern.path_variable not in row:
        out.append(pattern.path_variable)
    for node in pattern.nodes:
        if node.variable and node.variable not in row:
            out.append(node.variable)
    for rel in pattern.rels:
        if rel.variable and rel.variable not in row:
            out.append(rel.variable)
    return out


def _apply_match(graph: KnowledgeGraph, rows: list[dict], clause: ast.MatchClause) -> list[dict]:
    for pattern in clause.patterns:
        next_rows: list[dict] = []
        for row in rows:
            matched = list(_match_pattern(graph, row, pattern))
            if matched:
                next_rows.extend(matched)
            elif clause.optional:
                nulls = {name: None for name in _pattern_new_variables(pattern, row)}
                next_rows.append({**row, **nulls})
        rows = next_rows
    return rows


# -- projection -----------------------------------------------------------------


def _contains_aggregate(expr: ast.Expr) -> bool:
    if isinstance(expr, ast.FunctionCall):
        if expr.name in AGGREGATE_FUNCTIONS:
            return True
        return any(_contains_aggregate(a) for a in expr.args)
    if isinstance(expr, ast.Property):
        return _contains_aggregate(expr.subject)
    if isinstance(expr, ast.Comparison):
        return _contains_aggregate(expr.left) or _contains_aggregate(expr.right)
    if isinstance(expr, ast.BoolOp):
        return any(_contains_aggregate(o) for o in expr.operands)
    if isinstance(expr, ast.NotOp):
        return _contains_aggregate(expr.operand)
    if isinstance(expr, ast.NullCheck):
        return _contains_aggregate(expr.subject)
    if isinstance(expr, ast.InOp):
        return _contains_aggregate(expr.item) or _contains_aggregate(expr.container)
    if isinstance(expr, ast.Arithmetic):
        return _contains_aggregate(expr.left) or _contains_aggregate(expr.right)
    if isinstance(expr, ast.UnaryMinus):
        return _contains_aggregate(expr.operand)
    if isinstance(expr, ast.ListLiteral):
        return any(_contains_aggregate(i) for i in expr.items)
    if isinstance(expr, ast.Subscript):
        return _contains_aggregate(expr.subject) or _contains_aggregate(expr.index)
    return False


def _eval_aggregate(expr: ast.Expr, group_rows: list[dict], graph: KnowledgeGraph):
    if isinstance(expr, ast.FunctionCall) and expr.name == "collect":
        values = []
        seen: set = set()
        for row in group_rows:
            value = evaluate(expr.args[0], row, graph)
            if value is None:
                continue
            if expr.distinct:
                key = value_key(value)
                if key in seen:
                    continue
                seen.add(key)
            values.append(value)
        return values
    if not _contains_aggregate(expr):
        return evaluate(expr, group_rows[0], graph) if group_rows else None
    if isinstance(expr, ast.FunctionCall):
        args = [_eval_aggregate(a, group_rows, graph) for a in expr.args]
        return _call_function_with_values(expr.name, args)
    if isinstance(expr, ast.Arithmetic):
        left = _eval_aggregate(expr.left, group_rows, graph)
        right = _eval_aggregate(expr.right, group_rows, graph)
        return evaluate(
            ast.Arithmetic(expr.op, ast.Literal(left), ast.Literal(right)), {}, graph
        )
    raise ExecutionError("unsupported expression shape around an aggregate")


def _call_function_with_values(name: str, args: list):
    if name == "size":
        (value,) = args
        if value is None:
            return None
        if isinstance(value, (list, str)):
            return len(value)
    raise ExecutionError(f"cannot apply {name}() over aggregated values")


def _project(
    clause: ast.WithClause | ast.ReturnClause, rows: list[dict], graph: KnowledgeGraph
) -> list[dict]:
    items = clause.items
    names = [ast.column_name(i) for i in items]
    aggregating = any(_contains_aggregate(i.expr) for i in items)
    if not aggregating:
        out = [
            {name: evaluate(item.expr, row, graph) for name, item in zip(names, items)}
            for row in rows
        ]
    else:
        group_items = [(n, i) for n, i in zip(names, items) if not _contains_aggregate(i.expr)]
        agg_items = [(n, i) for n, i in zip(names, items) if _contains_aggregate(i.expr)]
        groups: dict[tuple, tuple[dict, list[dict]]] = {}
        for row in rows:
            key_values = {n: evaluate(i.expr, row, graph) for n, i in group_items}
            key = tuple(value_key(key_values[n]) for n, _ in group_items)
            if key not in groups:
                groups[key] = (key_values, [])
            groups[key][1].append(row)
        if not groups and not group_items:
            # aggregation over zero rows still yields one row
            groups[()] = ({}, [])
        out = []
        for key_values, group_rows in groups.values():
            row_out = dict(key_values)
            for n, i in agg_items:
                row_out[n] = _eval_aggregate(i.expr, group_rows, graph)
            out.append({n: row_out[n] for n in names})
    if clause.distinct:
        seen: set = set()
        deduped = []
        for row in out:
            key = tuple(value_key(row[n]) for n in names)
            if key in seen:
                continue
            seen.add(key)
            deduped.append(row)
        out = deduped
    return out


# -- pipeline -------------------------------------------------------------------


def execute(query: ast.Query, graph: KnowledgeGraph) -> ResultTable:
    rows: list[dict] = [{}]
    columns: list[str] = []
    for clause in query.clauses:
        if isinstance(clause, ast.MatchClause):
            rows = _apply_match(graph, rows, clause)
        elif isinstance(clause, ast.WhereClause):
            rows = [r for r in rows if evaluate(clause.expr, r, graph) is True]
        elif isinstance(clause, (ast.WithClause, ast.ReturnClause)):
            rows = _project(clause, rows, graph)
            columns = [ast.column_name(i) for i in clause.items]
        elif isinstance(clause, ast.OrderByClause):
            for expr, ascending in reversed(clause.keys):
                rows = sorted(
                    rows,
                    key=lambda r, e=expr: sort_key(evaluate(e, r, graph)),
                    reverse=not ascending,
                )
        elif isinstance(clause, ast.LimitClause):
            rows = rows[: clause.count]
        else:
            raise ExecutionError(f"cannot execute clause {clause!r}")
    return ResultTable(columns=columns, rows=rows)
