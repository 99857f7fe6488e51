"""Lexical helpers shared by the region locator and the AST builder.

Everything operates on plain text. The goal is robustness on sources the
detection tool itself rejects, not parsing fidelity.
"""
from __future__ import annotations

import re

from .errors import LexFailure

RUST_KEYWORDS = frozenset(
    """
    as async await break const continue crate dyn else enum extern false fn
    for if impl in let loop match mod move mut pub ref return self Self
    static struct super trait true type union unsafe use where while
    """.split()
)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_CHAR_LIT_RE = re.compile(r"'(\\[^']*|[^'\\])'")


def mask_comments_and_strings(source: str) -> str:
    """Return ``source`` with comment and string interiors blanked to spaces.

    Offsets and newlines are preserved, so spans computed on the masked text
    are valid in the original. Handles line comments, nested block comments,
    raw strings (``r"..."``, ``r#"..."#``), byte strings, and char literals.
    Lifetimes (``'a``) pass through untouched.
    """
    out = list(source)
    i, n = 0, len(source)

    def blank(a: int, b: int) -> None:
        for j in range(a, min(b, n)):
            if out[j] != "\n":
                out[j] = " "

    def skip_raw_string(start: int) -> int:
        # start points at 'r'; hashes may follow before the opening quote
        j = start + 1
        hashes = 0
        while j < n and source[j] == "#":
            hashes += 1
            j += 1
        if j >= n or source[j] != '"':
            return start  # not a raw string after all
        closer = '"' + "#" * hashes
        end = source.find(closer, j + 1)
        end = n if end == -1 else end + len(closer)
        blank(start, end)
        return end

    while i < n:
        c = source[i]
        nxt = source[i + 1] if i + 1 < n else ""
        if c == "/" and nxt == "/":
            j = source.find("\n", i)
            j = n if j == -1 else j
            blank(i, j)
            i = j
        elif c == "/" and nxt == "*":
            depth, j = 1, i + 2
            while j < n and depth:
                if source.startswith("/*", j):
                    depth, j = depth + 1, j + 2
                elif source.startswith("*/", j):
                    depth, j = depth - 1, j + 2
                else:
                    j += 1
            blank(i, j)
            i = j
        elif c == "r" and nxt in ('"', "#") and (i == 0 or not source[i - 1].isalnum() and source[i - 1] != "_"):
            j = skip_raw_string(i)
            i = j if j > i else i + 1
        elif c == "b" and nxt == '"':
            i += 1  # fall through to the string branch on the quote
        elif c == '"':
            j = i + 1
            while j < n:
                if source[j] == "\\":
                    j += 2
                elif source[j] == '"':
                    j += 1
                    break
                else:
                    j += 1
            blank(i + 1, j - 1)
            i = j
        elif c == "'":
            m = _CHAR_LIT_RE.match(source, i)
            if m:
                blank(i + 1, m.end() - 1)
                i = m.end()
            else:
                i += 1
        else:
            i += 1
    return "".join(out)


def find_matching_brace(masked: str, open_idx: int) -> int:
    """Index of the ``}`` matching ``masked[open_idx] == '{'``."""
    if masked[open_idx] != "{":
        raise LexFailure(f"no opening brace at offset {open_idx}")
    depth = 0
    for j in range(open_idx, len(masked)):
        ch = masked[j]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return j
    raise LexFailure(f"unbalanced braces from offset {open_idx}")


def identifiers(text: str) -> set[str]:
    """Non-keyword identifiers occurring in ``text``."""
    return {m.group(0) for m in _IDENT_RE.finditer(text)} - RUST_KEYWORDS


def keyword_occurrences(masked: str, keyword: str) -> list[int]:
    """Offsets of whole-word ``keyword`` in already-masked text."""
    return [m.start() for m in re.finditer(rf"\b{re.escape(keyword)}\b", masked)]


def estimate_tokens(text: str) -> int:
    """Cheap provider-token estimate, about four characters per token."""
    return max(1, (len(text) + 3) // 4)


def line_of_offset(source: str, offset: int) -> int:
    """1-based line number containing ``offset``."""
    return source.count("\n", 0, max(0, offset)) + 1


def line_span(source: str, line: int) -> tuple[int, int]:
    """(start, end) offsets of a 1-based line, excluding the newline."""
    start = 0
    for _ in range(line - 1):
        nl = source.find("\n", start)
        if nl == -1:
            return len(source), len(source)
        start = nl + 1
    end = source.find("\n", start)
    return start, len(source) if end == -1 else end
