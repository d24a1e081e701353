"""Deterministic arrow-direction correction for pattern relationships.

Each relationship kind has a fixed schema orientation (REACTS_IN enters the
Reaction node, the other three leave it). Node roles are inferred from
explicit labels, key properties ({name: ...} marks a Molecule, {id: ...} a
Reaction), and bipartite propagation across fixed-length relationships:
every relationship connects one Molecule and one Reaction endpoint.

Rules, applied per relationship atom:

* fixed length, kinds sharing one schema source: when an endpoint role is
  known the arrow is forced toward the schema target; an undirected atom
  with unknown roles is read left-to-right (left endpoint as source).
* fixed length, kinds with conflicting schema sources: left unmodified and
  flagged when endpoint roles make every orientation unsatisfiable.
* variable length over a mixed alternation (REACTS_IN|PRODUCES): a directed
  arrow is normalized to the canonical forward (rightward) reading, which
  restores templates whose only defect is a flipped traversal arrow; an
  undirected atom is kept, since it legitimately traverses both ways.

The rewrite is idempotent and touches nothing but direction fields, so the
re-rendered query differs from the input only in its arrows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..graph import EDGE_SCHEMA, MOLECULE, REACTION
from . import ast


@dataclass
class RewriteResult:
    query: ast.Query
    changed: bool
    flags: list[str]


def _opposite(role: str) -> str:
    return REACTION if role == MOLECULE else MOLECULE


def _local_role(atom: ast.NodePattern) -> str | None:
    if atom.label in (MOLECULE, REACTION):
        return atom.label
    props = dict(atom.properties)
    if "name" in props:
        return MOLECULE
    if "id" in props:
        return REACTION
    return None


def _infer_roles(query: ast.Query):
    """Roles for every node-atom occurrence, keyed by clause/pattern/position."""
    var_roles: dict[str, str] = {}
    occurrences: list[tuple[tuple[int, int, int], ast.NodePattern]] = []
    patterns: list[tuple[int, int, ast.PathPattern]] = []
    for ci, clause in enumerate(query.clauses):
        if not isinstance(clause, ast.MatchClause):
            continue
        for pi, pattern in enumerate(clause.patterns):
            patterns.append((ci, pi, pattern))
            for ni, atom in enumerate(pattern.nodes):
                occurrences.append(((ci, pi, ni), atom))

    pos_roles: dict[tuple[int, int, int], str] = {}
    for pos, atom in occurrences:
        role = _local_role(atom)
        if role is not None:
            pos_roles[pos] = role
            if atom.variable and var_roles.get(atom.variable, role) == role:
                var_roles[atom.variable] = role

    def role_at(pos: tuple[int, int, int], atom: ast.NodePattern) -> str | None:
        if atom.variable and atom.variable in var_roles:
            return var_roles[atom.variable]
        return pos_roles.get(pos)

    # bipartite propagation across fixed-length relationships
    changed = True
    while changed:
        changed = False
        for ci, pi, pattern in patterns:
            for ri, rel in enumerate(pattern.rels):
                if rel.var_length is not None:
                    continue
                pos_a, pos_b = (ci, pi, ri), (ci, pi, ri + 1)
                atom_a, atom_b = pattern.nodes[ri], pattern.nodes[ri + 1]
                ra = role_at(pos_a, atom_a)
                rb = role_at(pos_b, atom_b)
                for pos, atom, known, other in (
                    (pos_a, atom_a, ra, rb),
                    (pos_b, atom_b, rb, ra),
                ):
                    if known is None and other is not None:
                        inferred = _opposite(other)
                        pos_roles[pos] = inferred
                        if atom.variable and atom.variable not in var_roles:
                            var_roles[atom.variable] = inferred
                        changed = True
    return var_roles, pos_roles


def _required_direction(source_role: str, role_left: str | None, role_right: str | None) -> str | None:
    """Arrow direction putting the schema source on the correct endpoint."""
    if role_left is not None and role_right is not None and role_left == role_right:
        return None  # unsatisfiable
    if role_left is not None:
        return ast.RIGHT if role_left == source_role else ast.LEFT
    if role_right is not None:
        return ast.LEFT if role_right == source_role else ast.RIGHT
    return None


def rewrite_directions_full(query: ast.Query) -> RewriteResult:
    var_roles, pos_roles = _infer_roles(query)
    flags: list[str] = []
    changed = False

    def role_at(ci: int, pi: int, ni: int, atom: ast.NodePattern) -> str | None:
        if atom.variable and atom.variable in var_roles:
            return var_roles[atom.variable]
        return pos_roles.get((ci, pi, ni))

    new_clauses: list[ast.Clause] = []
    for ci, clause in enumerate(query.clauses):
        if not isinstance(clause, ast.MatchClause):
            new_clauses.append(clause)
            continue
        new_patterns = []
        for pi, pattern in enumerate(clause.patterns):
            new_rels = []
            for ri, rel in enumerate(pattern.rels):
                kinds = rel.kinds or tuple(EDGE_SCHEMA)
                sources = {EDGE_SCHEMA[k][0] for k in kinds}
                role_left = role_at(ci, pi, ri, pattern.nodes[ri])
                role_right = role_at(ci, pi, ri + 1, pattern.nodes[ri + 1])
                new_dir = rel.direction
                if rel.var_length is not None:
                    if len(sources) > 1 and rel.direction == ast.LEFT:
                        new_dir = ast.RIGHT
                elif len(sources) == 1:
                    (source_role,) = sources
                    required = _required_direction(source_role, role_left, role_right)
                    if required is None and role_left is not None and role_left == role_right:
                        flags.append(
                            f"relationship {'|'.join(kinds)} connects two "
                            f"{role_left} endpoints; cannot orient"
                        )
                    elif required is None:
                        if rel.direction == ast.UNDIRECTED:
                            new_dir = ast.RIGHT  # left-to-right schema reading
                    elif rel.direction != required:
                        new_dir = required
                else:
                    # mixed alternation: either arrow selects a fitting kind,
                    # unless both endpoints share a role (no Reaction between them)
                    if role_left is not None and role_left == role_right:
                        flags.append(
                            f"alternation {'|'.join(kinds)} requires conflicting "
                            f"orientations between two {role_left} endpoints"
                        )
                if new_dir != rel.direction:
                    changed = True
                    new_rels.append(replace(rel, direction=new_dir))
                else:
                    new_rels.append(rel)
            new_patterns.append(replace(pattern, rels=tuple(new_rels)))
        new_clauses.append(replace(clause, patterns=tuple(new_patterns)))
    return RewriteResult(ast.Query(tuple(new_clauses)), changed, flags)


def rewrite_directions(query: ast.Query) -> ast.Query:
    """Flip every relationship arrow that contradicts the schema orientation."""
    return rewrite_directions_full(query).query
