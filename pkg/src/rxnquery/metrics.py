"""Scoring: query-text similarity, retrieval correctness, error taxonomy.

Text metrics (BLEU, METEOR, ROUGE-L) compare generated and reference query
text over a Cypher-aware tokenization. Retrieval metrics compare executed
results: single-step answers are dictionaries scored per key after a
three-stage key-matching cascade (exact, stem, embedding similarity), and
multi-step answers are ordered reaction-id sequences scored with exact-path
precision/recall/F1 plus partial credit for matching a terminal fragment of
a gold route.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

from . import cypher
from .cypher import ast
from .graph import NodeRef
from .providers import cosine
from .stemmer import stem_key

SEMANTIC_THRESHOLD = 0.93

ROLE_KEYS = ("reactants", "products", "agents", "solvents")

INVALID_QUERY = "invalid_query"
ENDPOINT_ANCHORING = "endpoint_anchoring"
TRAVERSAL_DIRECTION = "traversal_direction"
PATHWAY_LENGTH = "pathway_length"
WRONG_REACTANT_DIRECTIONALITY = "wrong_reactant_directionality"
OTHER = "other"

ERROR_LABELS = (
    INVALID_QUERY,
    ENDPOINT_ANCHORING,
    TRAVERSAL_DIRECTION,
    PATHWAY_LENGTH,
    "reactants_missing",
    "products_missing",
    "agents_missing",
    "solvents_missing",
    WRONG_REACTANT_DIRECTIONALITY,
    OTHER,
)


# -- tokenization -----------------------------------------------------------------

_METRIC_PUNCT = set("()[]{},.:=<>-|")


def tokenize(text: str) -> list[str]:
    """Split on whitespace and Cypher punctuation, keeping punctuation tokens."""
    tokens: list[str] = []
    buf: list[str] = []
    for ch in text:
        if ch.isspace() or ch in _METRIC_PUNCT:
            if buf:
                tokens.append("".join(buf))
                buf = []
            if ch in _METRIC_PUNCT:
                tokens.append(ch)
        else:
            buf.append(ch)
    if buf:
        tokens.append("".join(buf))
    return tokens


# -- text similarity ----------------------------------------------------------------


@dataclass
class TextScores:
    bleu: float
    meteor: float
    rouge_l: float

    def to_dict(self) -> dict:
        return {"bleu": self.bleu, "meteor": self.meteor, "rouge_l": self.rouge_l}


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: list[str], reference: list[str], max_n: int = 4, epsilon: float = 1e-9) -> float:
    """BLEU with n <= 4, brevity penalty, additive-epsilon smoothing."""
    if not candidate:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand = _ngrams(candidate, n)
        ref = _ngrams(reference, n)
        total = sum(cand.values())
        clipped = sum(min(count, ref.get(gram, 0)) for gram, count in cand.items())
        if total == 0:
            precision = epsilon
        elif clipped == 0:
            precision = epsilon / total
        else:
            precision = clipped / total
        log_sum += math.log(precision)
    brevity = 1.0
    if len(candidate) < len(reference):
        brevity = math.exp(1.0 - len(reference) / len(candidate))
    return brevity * math.exp(log_sum / max_n)


def _align(candidate: list[str], reference: list[str]) -> list[tuple[int, int]]:
    """Two-stage greedy alignment: exact matches first, then stem matches.

    Candidate tokens are scanned in order and paired with the earliest
    unmatched reference token.
    """
    matched_c: set[int] = set()
    matched_r: set[int] = set()
    pairs: list[tuple[int, int]] = []

    def run(key):
        ref_keys = [key(t) for t in reference]
        for i, token in enumerate(candidate):
            if i in matched_c:
                continue
            want = key(token)
            for j, have in enumerate(ref_keys):
                if j in matched_r:
                    continue
                if want == have:
                    matched_c.add(i)
                    matched_r.add(j)
                    pairs.append((i, j))
                    break

    run(lambda t: t)
    run(lambda t: stem_key(t.lower()))
    return sorted(pairs)


def meteor(
    candidate: list[str],
    reference: list[str],
    alpha: float = 0.9,
    beta: float = 3.0,
    gamma: float = 0.5,
) -> float:
    """Harmonic precision/recall over exact+stem alignment, chunk penalty."""
    if not candidate or not reference:
        return 0.0
    pairs = _align(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    precision = m / len(candidate)
    recall = m / len(reference)
    f_mean = (precision * recall) / (alpha * precision + (1 - alpha) * recall)
    chunks = 1
    for (ci, ri), (cj, rj) in zip(pairs, pairs[1:]):
        if cj != ci + 1 or rj != ri + 1:
            chunks += 1
    penalty = gamma * (chunks / m) ** beta
    return f_mean * (1.0 - penalty)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[-1]))
        prev = curr
    return prev[-1]


def rouge_l(candidate: list[str], reference: list[str]) -> float:
    """LCS-based F1 (beta = 1)."""
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 2 * precision * recall / (precision + recall)


def score_texts(candidate_text: str, reference_text: str) -> TextScores:
    cand = tokenize(candidate_text)
    ref = tokenize(reference_text)
    return TextScores(bleu=bleu(cand, ref), meteor=meteor(cand, ref), rouge_l=rouge_l(cand, ref))


# -- key matching ----------------------------------------------------------------------

_TRAILING_NAME = re.compile(r"[_\s]*names?$")
_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def normalize_key(key: str) -> str:
    """Lowercase, trim, camelCase -> snake_case, strip trailing name/names."""
    key = key.lower()
    key = key.strip()
    key = _CAMEL_BOUNDARY.sub("_", key).lower()
    key = _TRAILING_NAME.sub("", key)
    return key


@dataclass
class KeyMatchResult:
    mapping: dict[str, str] = field(default_factory=dict)  # predicted -> gold
    stages: dict[str, str] = field(default_factory=dict)  # predicted -> exact|lexical|semantic
    unmatched: list[str] = field(default_factory=list)


def match_keys(
    predicted_keys: list[str],
    gold_keys: list[str],
    embedder=None,
    threshold: float = SEMANTIC_THRESHOLD,
) -> KeyMatchResult:
    """Three-stage cascade over normalized keys; many-to-one mapping allowed."""
    result = KeyMatchResult()
    remaining = list(predicted_keys)

    still = []
    for pred in remaining:
        if pred in gold_keys:
            result.mapping[pred] = pred
            result.stages[pred] = "exact"
        else:
            still.append(pred)
    remaining = still

    still = []
    gold_stems = [(g, stem_key(g)) for g in gold_keys]
    for pred in remaining:
        pred_stem = stem_key(pred)
        for gold, gold_stem in gold_stems:
            if pred_stem == gold_stem:
                result.mapping[pred] = gold
                result.stages[pred] = "lexical"
                break
        else:
            still.append(pred)
    remaining = still

    if embedder is not None and remaining and gold_keys:
        gold_vectors = [(g, embedder.embed(g)) for g in gold_keys]
        still = []
        for pred in remaining:
            vector = embedder.embed(pred)
            best_gold = None
            best_score = -1.0
            for gold, gv in gold_vectors:
                score = cosine(vector, gv)
                if score > best_score:  # ties keep the earlier gold key
                    best_score = score
                    best_gold = gold
            if best_gold is not None and best_score >= threshold:
                result.mapping[pred] = best_gold
                result.stages[pred] = "semantic"
            else:
                still.append(pred)
        remaining = still

    result.unmatched = remaining
    return result


# -- retrieval scoring -------------------------------------------------------------------


@dataclass
class RetrievalScores:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass
class PathScores:
    precision: float
    recall: float
    f1: float
    ppr: float

    def to_dict(self) -> dict:
        return {
            "exact_precision": self.precision,
            "exact_recall": self.recall,
            "exact_f1": self.f1,
            "ppr": self.ppr,
        }


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _atom_to_string(value) -> str | None:
    if value is None:
        return None
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() else repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    if isinstance(value, NodeRef):
        return value.key
    if isinstance(value, dict):
        return value.get("key") or value.get("name") or value.get("id")
    return str(value)


def _collect_values(value, into: list[str]) -> None:
    if isinstance(value, list):
        for item in value:
            _collect_values(item, into)
        return
    atom = _atom_to_string(value)
    if atom is not None:
        into.append(atom)


def pool_rows(rows: list[dict]) -> dict[str, list[str]]:
    """Normalize keys, pool values across rows, dedupe preserving order."""
    pooled: dict[str, list[str]] = {}
    for row in rows:
        for key, value in row.items():
            norm = normalize_key(key)
            values: list[str] = []
            _collect_values(value, values)
            bucket = pooled.setdefault(norm, [])
            for v in values:
                if v not in bucket:
                    bucket.append(v)
    return pooled


def score_single_step(
    predicted_rows: list[dict],
    gold_rows: list[dict],
    embedder=None,
    threshold: float = SEMANTIC_THRESHOLD,
) -> RetrievalScores:
    """Micro-averaged P/R/F1 over key-matched value sets.

    Values from several predicted keys mapping to one gold key are
    aggregated; gold keys with no match contribute their whole value set as
    false negatives, and unmatched predicted keys as false positives.
    """
    pred = pool_rows(predicted_rows)
    gold = pool_rows(gold_rows)
    matches = match_keys(list(pred), list(gold), embedder=embedder, threshold=threshold)

    aggregated: dict[str, set[str]] = {g: set() for g in gold}
    for pred_key, gold_key in matches.mapping.items():
        aggregated[gold_key].update(pred[pred_key])

    tp = fp = fn = 0
    for gold_key, gold_values in gold.items():
        gset = set(gold_values)
        pset = aggregated.get(gold_key, set())
        tp += len(gset & pset)
        fp += len(pset - gset)
        fn += len(gset - pset)
    for pred_key in matches.unmatched:
        fp += len(set(pred[pred_key]))
    precision, recall, f1 = _prf(tp, fp, fn)
    return RetrievalScores(tp, fp, fn, precision, recall, f1)


def _dedupe_paths(paths: list) -> list[tuple[str, ...]]:
    seen: set[tuple[str, ...]] = set()
    out: list[tuple[str, ...]] = []
    for path in paths:
        key = tuple(str(x) for x in path)
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


def _common_suffix_length(gold: tuple[str, ...], predicted: tuple[str, ...]) -> int:
    n = 0
    while (
        n < len(gold)
        and n < len(predicted)
        and gold[len(gold) - 1 - n] == predicted[len(predicted) - 1 - n]
    ):
        n += 1
    return n


def score_multi_step(predicted_paths: list, gold_paths: list) -> PathScores:
    """Exact-path P/R/F1 plus partial path recall.

    Partial credit per gold path is the longest shared terminal fragment
    (suffix ending at the gold path's final reaction) over any predicted
    path, normalized by the gold path length; the mean over gold paths is
    the PPR.
    """
    pred = _dedupe_paths(predicted_paths)
    gold = _dedupe_paths(gold_paths)
    inter = len(set(pred) & set(gold))
    precision = inter / len(pred) if pred else 0.0
    recall = inter / len(gold) if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    if not gold:
        return PathScores(precision, recall, f1, 0.0)
    total = 0.0
    for g in gold:
        best = 0
        for p in pred:
            best = max(best, _common_suffix_length(g, p))
        total += best / len(g)
    return PathScores(precision, recall, f1, total / len(gold))


# -- error classification ----------------------------------------------------------------


def _find_size_comparisons(query: ast.Query) -> list[int]:
    """Values Y from `size(relationships(p)) = Y` comparisons in WHERE clauses."""
    values: list[int] = []
    for clause in query.clauses:
        if not isinstance(clause, ast.WhereClause):
            continue
        for expr in ast.walk(clause.expr):
            if not (isinstance(expr, ast.Comparison) and expr.op == "="):
                continue
            for a, b in ((expr.left, expr.right), (expr.right, expr.left)):
                if (
                    isinstance(a, ast.FunctionCall)
                    and a.name == "size"
                    and a.args
                    and isinstance(a.args[0], ast.FunctionCall)
                    and a.args[0].name == "relationships"
                    and isinstance(b, ast.Literal)
                    and isinstance(b.value, int)
                ):
                    values.append(b.value)
    return values


def _target_anchored_at_start(query: ast.Query, target: str) -> bool:
    """True when the target molecule is bound at the start of a directed
    variable-length traversal (paths leave the target instead of ending there)."""
    for clause in query.clauses:
        if not isinstance(clause, ast.MatchClause):
            continue
        for pattern in clause.patterns:
            for i, rel in enumerate(pattern.rels):
                if rel.var_length is None:
                    continue
                left, right = pattern.nodes[i], pattern.nodes[i + 1]
                left_is_target = ("name", target) in left.properties
                right_is_target = ("name", target) in right.properties
                if rel.direction == ast.RIGHT and left_is_target and not right_is_target:
                    return True
                if rel.direction == ast.LEFT and right_is_target and not left_is_target:
                    return True
    return False


def classify_error(
    setting: str,
    target: str | None,
    n_steps: int | None,
    query_text: str | None,
    execution_failed: bool,
    predicted,
    gold,
    retrieval_perfect: bool,
    embedder=None,
) -> str | None:
    """Rule-based error label; None when the retrieval matched the gold answer."""
    if execution_failed:
        return INVALID_QUERY
    if retrieval_perfect:
        return None

    query = None
    if query_text:
        try:
            query = cypher.parse(query_text)
        except cypher.CypherError:
            return INVALID_QUERY

    if setting == "multi_step":
        if query is not None and target and _target_anchored_at_start(query, target):
            return ENDPOINT_ANCHORING
        if query is not None:
            rewrite = cypher.rewrite_directions_full(query)
            if rewrite.changed:
                return TRAVERSAL_DIRECTION
            if n_steps is not None:
                expected = 2 * n_steps
                sizes = _find_size_comparisons(query)
                bounds = [
                    rel.var_length[1]
                    for clause in query.clauses
                    if isinstance(clause, ast.MatchClause)
                    for pattern in clause.patterns
                    for rel in pattern.rels
                    if rel.var_length is not None
                ]
                if sizes and all(s != expected for s in sizes):
                    return PATHWAY_LENGTH
                if not sizes and bounds and all(b != expected for b in bounds):
                    return PATHWAY_LENGTH
        return OTHER

    # single-step
    pred_pooled = pool_rows(predicted or [])
    gold_pooled = pool_rows(gold or [])
    matches = match_keys(list(pred_pooled), list(gold_pooled), embedder=embedder)
    matched_gold = set(matches.mapping.values())
    for role in ROLE_KEYS:
        if gold_pooled.get(role) and role not in matched_gold:
            return f"{role}_missing"
    if query is not None:
        rewrite = cypher.rewrite_directions_full(query)
        if rewrite.changed:
            return WRONG_REACTANT_DIRECTIONALITY
    return OTHER
