"""Replace SMILES strings with stable placeholders and restore them.

Masking keeps prompts free of chemistry so correctors and similarity
search operate on task structure, and it avoids special-character
interference when query text is fed back to a model. Two detection routes:

* quoted string literals that are known molecule names, or that look
  SMILES-shaped while sitting in a `name:` / `name =` position;
* bare whitespace-delimited tokens in natural-language text that are known
  molecule names or SMILES-shaped.

Identical strings share one placeholder, numbered in first-occurrence
order. `unmask(mask(t)) == t` holds for any input.
"""

from __future__ import annotations

import re

PLACEHOLDER_RE = re.compile(r"<SMILES_(\d+)>")

_SMILES_CHARS = re.compile(r"^[A-Za-z0-9@+\-=#$%\[\]()/\\.]+$")
_SMILES_FEATURE = re.compile(r"[=#\[\]()@\\/]|[A-Za-z][0-9]")
_NAME_POSITION = re.compile(r"name\s*[:=]\s*$", re.IGNORECASE)
_CALL_PREFIX = re.compile(r"^[A-Za-z_]\w*\(")
_TOKEN_TRIM = ".,;:!?"


class MaskingError(Exception):
    pass


def looks_like_smiles(token: str) -> bool:
    if len(token) < 2 or "<" in token or ">" in token:
        return False
    if token.isdigit():
        return False
    if not _SMILES_CHARS.match(token):
        return False
    return bool(_SMILES_FEATURE.search(token))


def _function_call_shape(core: str) -> bool:
    """ident(...) with nothing but punctuation after the matching close,
    e.g. nodes(p) or labels(x)] - as opposed to a parenthesized SMILES like
    CC(=O)O161, which continues with atoms after the group closes."""
    m = _CALL_PREFIX.match(core)
    if not m:
        return False
    depth = 1
    i = m.end()
    while i < len(core) and depth:
        if core[i] == "(":
            depth += 1
        elif core[i] == ")":
            depth -= 1
        i += 1
    if depth:
        return True  # unbalanced open paren: a call fragment, not a molecule
    return not any(ch.isalnum() for ch in core[i:])


def _bare_token_is_smiles(core: str, known) -> bool:
    if core in known:
        return True
    if len(core) < 3:
        return False
    if not (core[0].isalpha() or core[0] == "["):
        return False
    if _function_call_shape(core):
        return False
    return looks_like_smiles(core)


def _quoted_spans(text: str) -> list[tuple[int, int, str]]:
    """(content_start, content_end, content) for every quoted literal."""
    spans = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in "\"'":
            quote = ch
            j = i + 1
            while j < n:
                if text[j] == "\\" and j + 1 < n:
                    j += 2
                    continue
                if text[j] == quote:
                    break
                j += 1
            if j >= n:
                break  # unterminated; leave the tail untouched
            spans.append((i + 1, j, text[i + 1 : j]))
            i = j + 1
            continue
        i += 1
    return spans


def mask_smiles(
    text: str, known_names: set[str] | frozenset[str] | None = None
) -> tuple[str, dict[str, str]]:
    """Return (masked text, placeholder -> original map)."""
    known = known_names or frozenset()
    replacements: list[tuple[int, int, str]] = []  # (start, end, content)

    quoted = _quoted_spans(text)
    for start, end, content in quoted:
        if content in known or (
            _NAME_POSITION.search(text[: start - 1]) and looks_like_smiles(content)
        ):
            replacements.append((start, end, content))

    in_quotes = [False] * len(text)
    for start, end, _ in quoted:
        for k in range(start - 1, min(end + 1, len(text))):
            in_quotes[k] = True

    for match in re.finditer(r"\S+", text):
        start, end = match.start(), match.end()
        if any(in_quotes[start:end]):
            continue
        token = match.group()
        lead = 0
        while lead < len(token) and token[lead] in _TOKEN_TRIM:
            lead += 1
        trail = len(token)
        while trail > lead and token[trail - 1] in _TOKEN_TRIM:
            trail -= 1
        core = token[lead:trail]
        # dangling close-parens come from prose/code, never from SMILES,
        # whose parentheses always balance
        while core.endswith(")") and core.count("(") < core.count(")"):
            trail -= 1
            core = core[:-1]
        if not core:
            continue
        if _bare_token_is_smiles(core, known):
            replacements.append((start + lead, start + trail, core))

    if not replacements:
        return text, {}

    replacements.sort(key=lambda r: r[0])
    next_index = max(
        (int(m.group(1)) + 1 for m in PLACEHOLDER_RE.finditer(text)), default=0
    )
    by_content: dict[str, str] = {}
    mapping: dict[str, str] = {}
    out = []
    cursor = 0
    for start, end, content in replacements:
        if start < cursor:
            continue  # overlapping span already consumed
        placeholder = by_content.get(content)
        if placeholder is None:
            placeholder = f"<SMILES_{next_index}>"
            next_index += 1
            by_content[content] = placeholder
            mapping[placeholder] = content
        out.append(text[cursor:start])
        out.append(placeholder)
        cursor = end
    out.append(text[cursor:])
    return "".join(out), mapping


def unmask_smiles(text: str, mapping: dict[str, str], strict: bool = True) -> str:
    def _sub(match: re.Match) -> str:
        placeholder = match.group(0)
        if placeholder not in mapping:
            if strict:
                raise MaskingError(f"unknown placeholder {placeholder}")
            return placeholder
        return mapping[placeholder]

    return PLACEHOLDER_RE.sub(_sub, text)
