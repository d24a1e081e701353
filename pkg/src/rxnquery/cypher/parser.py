"""Recursive-descent parser for the Cypher subset.

The grammar is deliberately closed: it covers read-only pattern queries of
the shape used by the reaction-graph templates (MATCH/OPTIONAL MATCH with
property anchors and variable-length alternations, WHERE with ternary-null
boolean logic, WITH/RETURN projections with collect(DISTINCT ...), list
comprehensions, ORDER BY, LIMIT). Anything outside the subset raises
UnsupportedConstructError with the offending construct named, which is a
distinct failure mode from a plain syntax error.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..graph import EDGE_KINDS, MOLECULE, REACTION
from . import ast


class CypherError(Exception):
    """Base for parse failures; carries a diagnostic code and position."""

    code = "syntax-error"

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(message)
        self.message = message
        self.line = line
        self.column = column

    def __str__(self) -> str:
        if self.line:
            return f"{self.message} (line {self.line}, column {self.column})"
        return self.message


class CypherSyntaxError(CypherError):
    code = "syntax-error"


class UnsupportedConstructError(CypherError):
    code = "unsupported-construct"

    def __init__(self, construct: str, line: int = 0, column: int = 0, code: str | None = None):
        super().__init__(f"unsupported construct: {construct}", line, column)
        self.construct = construct
        if code is not None:
            self.code = code


# Write clauses and other openCypher features outside the subset. Naming
# them produces a clearer diagnostic than a generic syntax error.
_UNSUPPORTED_KEYWORDS = {
    "CREATE",
    "MERGE",
    "DELETE",
    "DETACH",
    "SET",
    "REMOVE",
    "UNWIND",
    "CALL",
    "FOREACH",
    "UNION",
    "SKIP",
    "CASE",
    "EXISTS",
    "SHORTESTPATH",
    "ALLSHORTESTPATHS",
    "STARTS",
    "ENDS",
    "CONTAINS",
    "XOR",
}

_KEYWORDS = {
    "MATCH",
    "OPTIONAL",
    "WHERE",
    "WITH",
    "RETURN",
    "ORDER",
    "BY",
    "LIMIT",
    "DISTINCT",
    "AND",
    "OR",
    "NOT",
    "IN",
    "IS",
    "NULL",
    "AS",
    "ASC",
    "DESC",
    "ALL",
    "TRUE",
    "FALSE",
} | _UNSUPPORTED_KEYWORDS


@dataclass
class Token:
    type: str  # IDENT, STRING, NUMBER, PUNCT, EOF
    value: object
    line: int
    column: int

    @property
    def upper(self) -> str:
        return str(self.value).upper()


_PUNCT_TWO = {"<=", ">=", "<>", ".."}
_PUNCT_ONE = set("()[]{},.:|=<>-+*/%")

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "'": "'", "\\": "\\"}


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(text)

    def advance(k: int = 1) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if i < n and text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            advance()
            continue
        if ch == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                advance()
            continue
        if ch == "$":
            raise UnsupportedConstructError("query parameter ($...)", line, col)
        start_line, start_col = line, col
        if ch in "\"'":
            quote = ch
            advance()
            buf = []
            while i < n and text[i] != quote:
                if text[i] == "\\" and i + 1 < n:
                    nxt = text[i + 1]
                    if nxt in _ESCAPES:
                        buf.append(_ESCAPES[nxt])
                        advance(2)
                        continue
                    # lone backslash (common inside SMILES): keep it verbatim
                    buf.append("\\")
                    advance()
                    continue
                buf.append(text[i])
                advance()
            if i >= n:
                raise CypherSyntaxError("unterminated string literal", start_line, start_col)
            advance()  # closing quote
            tokens.append(Token("STRING", "".join(buf), start_line, start_col))
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            is_float = False
            if (
                j < n
                and text[j] == "."
                and j + 1 < n
                and text[j + 1].isdigit()
            ):
                is_float = True
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            raw = text[i : j]
            value: object = float(raw) if is_float else int(raw)
            advance(j - i)
            tokens.append(Token("NUMBER", value, start_line, start_col))
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i : j]
            advance(j - i)
            tokens.append(Token("IDENT", word, start_line, start_col))
            continue
        two = text[i : i + 2]
        if two in _PUNCT_TWO:
            advance(2)
            tokens.append(Token("PUNCT", two, start_line, start_col))
            continue
        if ch in _PUNCT_ONE:
            advance()
            tokens.append(Token("PUNCT", ch, start_line, start_col))
            continue
        if ch == ";" and i == n - 1:
            advance()  # trailing semicolon is tolerated
            continue
        raise CypherSyntaxError(f"unexpected character {ch!r}", line, col)
    tokens.append(Token("EOF", None, line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token helpers -----------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.type != "EOF":
            self.pos += 1
        return tok

    def at_punct(self, value: str, offset: int = 0) -> bool:
        tok = self.peek(offset)
        return tok.type == "PUNCT" and tok.value == value

    def at_keyword(self, *words: str, offset: int = 0) -> bool:
        tok = self.peek(offset)
        return tok.type == "IDENT" and tok.upper in words

    def expect_punct(self, value: str) -> Token:
        tok = self.peek()
        if not self.at_punct(value):
            raise CypherSyntaxError(
                f"expected {value!r}, found {tok.value!r}", tok.line, tok.column
            )
        return self.next()

    def expect_keyword(self, word: str) -> Token:
        tok = self.peek()
        if not self.at_keyword(word):
            raise CypherSyntaxError(
                f"expected {word}, found {tok.value!r}", tok.line, tok.column
            )
        return self.next()

    def expect_ident(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.type != "IDENT":
            raise CypherSyntaxError(f"expected {what}, found {tok.value!r}", tok.line, tok.column)
        if tok.upper in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedConstructError(tok.upper, tok.line, tok.column)
        return self.next()

    def fail_unsupported_here(self) -> None:
        tok = self.peek()
        if tok.type == "IDENT" and tok.upper in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedConstructError(tok.upper, tok.line, tok.column)

    # -- query -------------------------------------------------------------

    def parse_query(self) -> ast.Query:
        clauses: list[ast.Clause] = []
        while self.peek().type != "EOF":
            self.fail_unsupported_here()
            tok = self.peek()
            if self.at_keyword("MATCH"):
                self.next()
                clauses.append(ast.MatchClause(self.parse_patterns(), optional=False))
            elif self.at_keyword("OPTIONAL"):
                self.next()
                self.expect_keyword("MATCH")
                clauses.append(ast.MatchClause(self.parse_patterns(), optional=True))
            elif self.at_keyword("WHERE"):
                self.next()
                clauses.append(ast.WhereClause(self.parse_expr()))
            elif self.at_keyword("WITH"):
                self.next()
                distinct = bool(self.at_keyword("DISTINCT")) and bool(self.next())
                clauses.append(ast.WithClause(self.parse_projections(), distinct=distinct))
            elif self.at_keyword("RETURN"):
                self.next()
                distinct = bool(self.at_keyword("DISTINCT")) and bool(self.next())
                clauses.append(ast.ReturnClause(self.parse_projections(), distinct=distinct))
            elif self.at_keyword("ORDER"):
                self.next()
                self.expect_keyword("BY")
                clauses.append(ast.OrderByClause(self.parse_order_keys()))
            elif self.at_keyword("LIMIT"):
                self.next()
                num = self.peek()
                if num.type != "NUMBER" or not isinstance(num.value, int):
                    raise CypherSyntaxError(
                        f"LIMIT expects an integer, found {num.value!r}", num.line, num.column
                    )
                self.next()
                clauses.append(ast.LimitClause(num.value))
            else:
                raise CypherSyntaxError(
                    f"expected a clause keyword, found {tok.value!r}", tok.line, tok.column
                )
        if not clauses:
            raise CypherSyntaxError("empty query", 1, 1)
        return ast.Query(tuple(clauses))

    # -- patterns ------------------------------------------------------------

    def parse_patterns(self) -> tuple[ast.PathPattern, ...]:
        patterns = [self.parse_pattern()]
        while self.at_punct(","):
            self.next()
            patterns.append(self.parse_pattern())
        return tuple(patterns)

    def parse_pattern(self) -> ast.PathPattern:
        path_var = None
        if self.peek().type == "IDENT" and self.at_punct("=", offset=1) and self.at_punct("(", offset=2):
            path_var = self.expect_ident("path variable").value
            self.expect_punct("=")
        nodes = [self.parse_node_atom()]
        rels: list[ast.RelPattern] = []
        while self.at_punct("-") or self.at_punct("<"):
            rels.append(self.parse_rel_atom())
            nodes.append(self.parse_node_atom())
        return ast.PathPattern(tuple(nodes), tuple(rels), path_variable=path_var)

    def parse_node_atom(self) -> ast.NodePattern:
        self.expect_punct("(")
        variable = None
        label = None
        props: tuple[tuple[str, object], ...] = ()
        if self.peek().type == "IDENT":
            variable = self.expect_ident("node variable").value
        if self.at_punct(":"):
            self.next()
            tok = self.expect_ident("node label")
            label = self._normalize_label(str(tok.value))
        if self.at_punct("{"):
            props = self.parse_property_map()
        self.expect_punct(")")
        return ast.NodePattern(variable=variable, label=label, properties=props)

    @staticmethod
    def _normalize_label(label: str) -> str:
        if label.lower() == MOLECULE.lower():
            return MOLECULE
        if label.lower() == REACTION.lower():
            return REACTION
        return label

    def parse_property_map(self) -> tuple[tuple[str, object], ...]:
        self.expect_punct("{")
        pairs: list[tuple[str, object]] = []
        while True:
            key = self.expect_ident("property name").value
            self.expect_punct(":")
            tok = self.peek()
            if tok.type == "STRING" or tok.type == "NUMBER":
                self.next()
                pairs.append((str(key), tok.value))
            elif self.at_keyword("TRUE"):
                self.next()
                pairs.append((str(key), True))
            elif self.at_keyword("FALSE"):
                self.next()
                pairs.append((str(key), False))
            elif self.at_keyword("NULL"):
                self.next()
                pairs.append((str(key), None))
            else:
                raise CypherSyntaxError(
                    f"expected a literal property value, found {tok.value!r}",
                    tok.line,
                    tok.column,
                )
            if self.at_punct(","):
                self.next()
                continue
            break
        self.expect_punct("}")
        return tuple(pairs)

    def parse_rel_atom(self) -> ast.RelPattern:
        if self.at_punct("<"):
            self.next()
            self.expect_punct("-")
            variable, kinds, bounds = self.parse_rel_body()
            self.expect_punct("-")
            if self.at_punct(">"):
                tok = self.next()
                raise UnsupportedConstructError(
                    "bidirectional relationship <-...->", tok.line, tok.column
                )
            return ast.RelPattern(variable, kinds, ast.LEFT, bounds)
        self.expect_punct("-")
        variable, kinds, bounds = self.parse_rel_body()
        self.expect_punct("-")
        if self.at_punct(">"):
            self.next()
            return ast.RelPattern(variable, kinds, ast.RIGHT, bounds)
        return ast.RelPattern(variable, kinds, ast.UNDIRECTED, bounds)

    def parse_rel_body(
        self,
    ) -> tuple[str | None, tuple[str, ...], tuple[int, int] | None]:
        if not self.at_punct("["):
            return None, (), None
        self.next()
        variable = None
        kinds: list[str] = []
        bounds = None
        if self.peek().type == "IDENT":
            variable = self.expect_ident("relationship variable").value
        if self.at_punct(":"):
            self.next()
            kinds.append(self.parse_rel_kind())
            while self.at_punct("|"):
                self.next()
                if self.at_punct(":"):  # tolerate [:A|:B] alternation style
                    self.next()
                kinds.append(self.parse_rel_kind())
        if self.at_punct("*"):
            star = self.next()
            bounds = self.parse_var_length_bounds(star)
        if self.at_punct("{"):
            tok = self.peek()
            raise UnsupportedConstructError(
                "relationship property map", tok.line, tok.column
            )
        self.expect_punct("]")
        return variable, tuple(kinds), bounds

    def parse_rel_kind(self) -> str:
        tok = self.peek()
        if tok.type != "IDENT":
            raise CypherSyntaxError(
                f"expected relationship kind, found {tok.value!r}", tok.line, tok.column
            )
        self.next()
        kind = str(tok.value).upper()
        if kind not in EDGE_KINDS:
            raise UnsupportedConstructError(
                f"relationship kind {tok.value}",
                tok.line,
                tok.column,
                code="unsupported-relationship-kind",
            )
        return kind

    def parse_var_length_bounds(self, star: Token) -> tuple[int, int]:
        lo = None
        hi = None
        if self.peek().type == "NUMBER":
            tok = self.next()
            if not isinstance(tok.value, int):
                raise CypherSyntaxError("variable-length bound must be an integer", tok.line, tok.column)
            lo = tok.value
        if self.at_punct(".."):
            self.next()
            if self.peek().type == "NUMBER":
                tok = self.next()
                if not isinstance(tok.value, int):
                    raise CypherSyntaxError(
                        "variable-length bound must be an integer", tok.line, tok.column
                    )
                hi = tok.value
        elif lo is not None:
            hi = lo  # *N means exactly N hops
        if hi is None:
            raise UnsupportedConstructError(
                "unbounded variable-length relationship (explicit upper bound required)",
                star.line,
                star.column,
            )
        if lo is None:
            lo = 1
        if lo < 1:
            raise UnsupportedConstructError(
                "zero-length variable-length relationship", star.line, star.column
            )
        if lo > hi:
            raise CypherSyntaxError(
                f"variable-length bounds out of order: {lo} > {hi}", star.line, star.column
            )
        return (lo, hi)

    # -- projections ---------------------------------------------------------

    def parse_projections(self) -> tuple[ast.Projection, ...]:
        items = [self.parse_projection()]
        while self.at_punct(","):
            self.next()
            items.append(self.parse_projection())
        return tuple(items)

    def parse_projection(self) -> ast.Projection:
        if self.at_punct("*"):
            tok = self.peek()
            raise UnsupportedConstructError("RETURN * projection", tok.line, tok.column)
        expr = self.parse_expr()
        alias = None
        if self.at_keyword("AS"):
            self.next()
            alias = self.expect_ident("alias").value
        return ast.Projection(expr, alias)

    def parse_order_keys(self) -> tuple[tuple[ast.Expr, bool], ...]:
        keys: list[tuple[ast.Expr, bool]] = []
        while True:
            expr = self.parse_expr()
            ascending = True
            if self.at_keyword("ASC"):
                self.next()
            elif self.at_keyword("DESC"):
                self.next()
                ascending = False
            keys.append((expr, ascending))
            if self.at_punct(","):
                self.next()
                continue
            break
        return tuple(keys)

    # -- expressions -----------------------------------------------------------

    def parse_expr(self) -> ast.Expr:
        return self.parse_or()

    def parse_or(self) -> ast.Expr:
        operands = [self.parse_and()]
        while self.at_keyword("OR"):
            self.next()
            operands.append(self.parse_and())
        if len(operands) == 1:
            return operands[0]
        return ast.BoolOp("OR", tuple(operands))

    def parse_and(self) -> ast.Expr:
        operands = [self.parse_not()]
        while self.at_keyword("AND"):
            self.next()
            operands.append(self.parse_not())
        if len(operands) == 1:
            return operands[0]
        return ast.BoolOp("AND", tuple(operands))

    def parse_not(self) -> ast.Expr:
        if self.at_keyword("NOT"):
            self.next()
            return ast.NotOp(self.parse_not())
        return self.parse_comparison()

    def parse_comparison(self) -> ast.Expr:
        left = self.parse_additive()
        tok = self.peek()
        if tok.type == "PUNCT" and tok.value in ("=", "<>", "<", "<=", ">", ">="):
            self.next()
            right = self.parse_additive()
            return ast.Comparison(str(tok.value), left, right)
        if self.at_keyword("IS"):
            self.next()
            negated = False
            if self.at_keyword("NOT"):
                self.next()
                negated = True
            self.expect_keyword("NULL")
            return ast.NullCheck(left, negated)
        if self.at_keyword("IN"):
            self.next()
            return ast.InOp(left, self.parse_additive())
        if self.at_keyword("STARTS", "ENDS", "CONTAINS"):
            raise UnsupportedConstructError(
                f"string predicate {tok.upper}", tok.line, tok.column
            )
        return left

    def parse_additive(self) -> ast.Expr:
        left = self.parse_multiplicative()
        while self.at_punct("+") or self.at_punct("-"):
            op = str(self.next().value)
            left = ast.Arithmetic(op, left, self.parse_multiplicative())
        return left

    def parse_multiplicative(self) -> ast.Expr:
        left = self.parse_unary()
        while self.at_punct("*") or self.at_punct("/") or self.at_punct("%"):
            op = str(self.next().value)
            left = ast.Arithmetic(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> ast.Expr:
        if self.at_punct("-"):
            self.next()
            return ast.UnaryMinus(self.parse_unary())
        return self.parse_postfix()

    def parse_postfix(self) -> ast.Expr:
        expr = self.parse_atom()
        while True:
            if self.at_punct(".") and self.peek(1).type == "IDENT":
                self.next()
                name = self.expect_ident("property name").value
                expr = ast.Property(expr, str(name))
            elif self.at_punct("["):
                self.next()
                index = self.parse_expr()
                self.expect_punct("]")
                expr = ast.Subscript(expr, index)
            else:
                return expr

    def parse_atom(self) -> ast.Expr:
        tok = self.peek()
        if tok.type == "STRING":
            self.next()
            return ast.Literal(tok.value)
        if tok.type == "NUMBER":
            self.next()
            return ast.Literal(tok.value)
        if self.at_keyword("TRUE"):
            self.next()
            return ast.Literal(True)
        if self.at_keyword("FALSE"):
            self.next()
            return ast.Literal(False)
        if self.at_keyword("NULL"):
            self.next()
            return ast.Literal(None)
        if self.at_punct("("):
            self.next()
            expr = self.parse_expr()
            self.expect_punct(")")
            return expr
        if self.at_punct("["):
            return self.parse_list()
        if tok.type == "IDENT":
            if tok.upper in _UNSUPPORTED_KEYWORDS:
                raise UnsupportedConstructError(tok.upper, tok.line, tok.column)
            if tok.upper == "ALL" and self.at_punct("(", offset=1):
                return self.parse_all_predicate()
            if self.at_punct("(", offset=1):
                return self.parse_function_call()
            self.next()
            return ast.Variable(str(tok.value))
        raise CypherSyntaxError(f"unexpected token {tok.value!r}", tok.line, tok.column)

    def parse_list(self) -> ast.Expr:
        self.expect_punct("[")
        # Comprehension: [var IN expr (WHERE pred)? (| projection)?]
        if self.peek().type == "IDENT" and self.at_keyword("IN", offset=1):
            variable = self.expect_ident("comprehension variable").value
            self.expect_keyword("IN")
            container = self.parse_expr()
            predicate = None
            projection = None
            if self.at_keyword("WHERE"):
                self.next()
                predicate = self.parse_expr()
            if self.at_punct("|"):
                self.next()
                projection = self.parse_expr()
            self.expect_punct("]")
            return ast.ListComprehension(str(variable), container, predicate, projection)
        items: list[ast.Expr] = []
        if not self.at_punct("]"):
            items.append(self.parse_expr())
            while self.at_punct(","):
                self.next()
                items.append(self.parse_expr())
        self.expect_punct("]")
        return ast.ListLiteral(tuple(items))

    def parse_all_predicate(self) -> ast.Expr:
        self.next()  # ALL
        self.expect_punct("(")
        variable = self.expect_ident("quantifier variable").value
        self.expect_keyword("IN")
        container = self.parse_expr()
        self.expect_keyword("WHERE")
        predicate = self.parse_expr()
        self.expect_punct(")")
        return ast.AllPredicate(str(variable), container, predicate)

    def parse_function_call(self) -> ast.Expr:
        name_tok = self.next()
        name = str(name_tok.value).lower()
        self.expect_punct("(")
        distinct = False
        if self.at_keyword("DISTINCT"):
            self.next()
            distinct = True
        args: list[ast.Expr] = []
        if not self.at_punct(")"):
            if self.at_punct("*"):
                tok = self.peek()
                raise UnsupportedConstructError(
                    f"{name}(*) aggregate", tok.line, tok.column
                )
            args.append(self.parse_expr())
            while self.at_punct(","):
                self.next()
                args.append(self.parse_expr())
        self.expect_punct(")")
        return ast.FunctionCall(name, tuple(args), distinct=distinct)


def parse(text: str) -> ast.Query:
    """Parse query text into an AST.

    Raises CypherSyntaxError with line/column on malformed input, and
    UnsupportedConstructError (a distinct code) when the text uses valid
    openCypher outside this engine's subset.
    """
    return _Parser(tokenize(text)).parse_query()
