"""Knowledge base: AST extraction, unsafe-focused pruning, feature hashing,
and similarity search over previously successful repairs.

The store is a line-delimited JSON file guarded by an advisory lock, so
concurrent benchmark runs on one host do not interleave writes. Vectors are
256-bucket feature hashes over node-kind bigrams plus UB-kind labels; two
structurally identical pruned trees always hash identically, which is what
makes search results reproducible.
"""
from __future__ import annotations

import fcntl
import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Iterable

import numpy as np

from .detector import UbKind, UbReport
from .errors import ProviderFailure
from .lexutil import (
    find_matching_brace,
    identifiers,
    line_span,
    mask_comments_and_strings,
)
from .prompts import fill, load_template

if TYPE_CHECKING:  # pragma: no cover
    from .feedback import EvalTriplet
    from .provider import Provider

log = logging.getLogger(__name__)

VECTOR_DIMS = 256

_ITEM_KEYWORDS = ("fn", "impl", "trait", "mod", "struct", "enum", "union", "match")
_LOOP_KEYWORDS = ("loop", "while", "for")


class AstMode(str, Enum):
    PROVIDER = "provider"
    LOCAL_PARSER = "local"


@dataclass
class AstNode:
    id: int
    kind: str
    span: tuple[int, int]
    children: list[int] = field(default_factory=list)
    is_unsafe: bool = False


@dataclass
class Ast:
    """A tree of AstNode in pre-order; nodes[0] is the file root."""

    nodes: list[AstNode]
    source: str
    mode_used: str = AstMode.LOCAL_PARSER.value

    @property
    def root(self) -> AstNode:
        return self.nodes[0]


@dataclass
class PrunedAst:
    nodes: list[AstNode]
    provenance: str


def _phrase_before(masked: str, seg_start: int, brace: int) -> int:
    """Offset where the item phrase introducing ``{`` at ``brace`` starts."""
    cut = max(
        masked.rfind(";", seg_start, brace),
        masked.rfind("{", seg_start, brace),
        masked.rfind("}", seg_start, brace),
    )
    start = seg_start if cut == -1 else cut + 1
    while start < brace and masked[start] in " \t\n":
        start += 1
    return start


def _classify_phrase(phrase: str) -> tuple[str, bool]:
    tokens = re.findall(r"[A-Za-z_][A-Za-z0-9_]*", phrase)
    if not tokens:
        return "block", False
    # leading = qualifier on an item (unsafe fn); trailing = block expression
    # in statement or let position (let x = unsafe { .. })
    is_unsafe = tokens[0] == "unsafe" or tokens[-1] == "unsafe"
    body = [t for t in tokens if t != "unsafe"]
    if is_unsafe and not body:
        return "unsafe_block", True
    for kw in _ITEM_KEYWORDS:
        if kw in body:
            return kw, is_unsafe
    if any(kw in body for kw in _LOOP_KEYWORDS):
        return "loop", is_unsafe
    if is_unsafe and tokens[-1] == "unsafe":
        return "unsafe_block", True
    return "block", is_unsafe


def _local_parse(source: str) -> Ast:
    masked = mask_comments_and_strings(source)
    nodes = [AstNode(id=0, kind="file", span=(0, len(source)))]

    def scan(lo: int, hi: int, parent: int) -> None:
        cursor = lo
        while cursor < hi:
            brace = masked.find("{", cursor, hi)
            if brace == -1:
                return
            close = find_matching_brace(masked, brace)
            start = _phrase_before(masked, cursor, brace)
            kind, is_unsafe = _classify_phrase(masked[start:brace])
            node = AstNode(
                id=len(nodes), kind=kind, span=(start, close + 1), is_unsafe=is_unsafe
            )
            nodes.append(node)
            nodes[parent].children.append(node.id)
            scan(brace + 1, close, node.id)
            cursor = close + 1

    scan(0, len(source), 0)
    return Ast(nodes=nodes, source=source, mode_used=AstMode.LOCAL_PARSER.value)


def render_tree(ast: Ast) -> str:
    """Line-per-node rendering in the grammar the provider is asked for."""
    lines: list[str] = []

    def walk(nid: int, depth: int) -> None:
        n = ast.nodes[nid]
        suffix = " unsafe" if n.is_unsafe else ""
        lines.append("  " * depth + f"{n.kind} {n.span[0]}..{n.span[1]}{suffix}")
        for child in n.children:
            walk(child, depth + 1)

    walk(0, 0)
    return "\n".join(lines)


_TREE_LINE_RE = re.compile(r"^( *)([A-Za-z_][A-Za-z0-9_]*) (\d+)\.\.(\d+)( unsafe)?\s*$")


class AstParseFailure(ProviderFailure):
    """Provider answer did not parse as a tree."""


def parse_tree_text(text: str, source: str) -> Ast:
    nodes: list[AstNode] = []
    stack: list[tuple[int, int]] = []  # (depth, node id)
    for raw in text.splitlines():
        if not raw.strip():
            continue
        m = _TREE_LINE_RE.match(raw)
        if not m:
            raise AstParseFailure(f"bad tree line: {raw!r}")
        depth = len(m.group(1)) // 2
        start, end = int(m.group(3)), int(m.group(4))
        if not (0 <= start <= end <= len(source)):
            raise AstParseFailure(f"span out of range: {raw!r}")
        node = AstNode(
            id=len(nodes),
            kind=m.group(2),
            span=(start, end),
            is_unsafe=bool(m.group(5)),
        )
        if depth == 0:
            if nodes:
                raise AstParseFailure("multiple roots")
        else:
            while stack and stack[-1][0] >= depth:
                stack.pop()
            if not stack:
                raise AstParseFailure(f"orphan node: {raw!r}")
            nodes[stack[-1][1]].children.append(node.id)
        nodes.append(node)
        stack.append((depth, node.id))
    if not nodes:
        raise AstParseFailure("empty tree")
    return Ast(nodes=nodes, source=source, mode_used=AstMode.PROVIDER.value)


def extract_ast(
    source: str,
    mode: AstMode = AstMode.LOCAL_PARSER,
    provider: "Provider | None" = None,
) -> Ast:
    """Build the simplified AST, via the provider or the local parser.

    Provider mode falls back to the local parser on malformed output; the
    returned tree's ``mode_used`` says which path produced it.
    """
    if mode is AstMode.PROVIDER and provider is not None:
        from .provider import PromptRecord

        prompt = fill(load_template("ast_extraction.txt"), snippet=source)
        response = provider.complete(PromptRecord.user(prompt))
        try:
            return parse_tree_text(response, source)
        except AstParseFailure as exc:
            log.warning("provider tree rejected (%s); local fallback", exc)
            ast = _local_parse(source)
            ast.mode_used = "local_fallback"
            return ast
    return _local_parse(source)


def prune(ast: Ast, miri_errors: Iterable[UbReport] = ()) -> PrunedAst:
    """Unsafe-focused pruning.

    Pass 1 keeps every node whose masked span contains the ``unsafe``
    keyword (head occurrences made the node ``is_unsafe`` at parse time).
    Pass 2 runs only when errors are present: a kept non-head node survives
    only if it shares an identifier with some unsafe head or its span
    overlaps an error line.
    """
    errors = list(miri_errors)
    masked = mask_comments_and_strings(ast.source)
    kw_re = re.compile(r"\bunsafe\b")

    def contains_kw(node: AstNode) -> bool:
        return bool(kw_re.search(masked, node.span[0], node.span[1]))

    kept = [n for n in ast.nodes if contains_kw(n)]
    if errors and kept:
        heads = [n for n in kept if n.is_unsafe]
        head_idents = [identifiers(masked[h.span[0]:h.span[1]]) for h in heads]
        err_spans = [
            line_span(ast.source, e.line) for e in errors if e.line is not None
        ]

        def relevant(node: AstNode) -> bool:
            node_idents = identifiers(masked[node.span[0]:node.span[1]])
            if any(node_idents & hi for hi in head_idents):
                return True
            return any(
                es < node.span[1] and ee > node.span[0] for es, ee in err_spans
            )

        kept = [n for n in kept if n.is_unsafe or relevant(n)]
    provenance = f"{ast.mode_used}:{hashlib.sha256(ast.source.encode('utf-8')).hexdigest()[:12]}"
    return PrunedAst(nodes=kept, provenance=provenance)


@dataclass
class FeatureVector:
    values: np.ndarray

    @property
    def dims(self) -> int:
        return int(self.values.shape[0])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    @property
    def is_zero(self) -> bool:
        return self.norm == 0.0

    def to_list(self) -> list[float]:
        return [float(v) for v in self.values]

    @classmethod
    def from_list(cls, values: list[float]) -> "FeatureVector":
        return cls(np.asarray(values, dtype=np.float64))


def cosine(a: FeatureVector, b: FeatureVector) -> float:
    na, nb = a.norm, b.norm
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a.values, b.values) / (na * nb))


def _bucket(feature: str, dims: int) -> int:
    digest = hashlib.sha256(feature.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dims


def hashed_features(pruned: PrunedAst, ub_kinds: Iterable[UbKind] = ()) -> list[str]:
    """The raw feature strings vectorize() hashes, exposed for tests."""
    feats: list[str] = []
    for n in pruned.nodes:
        parent: AstNode | None = None
        for m in pruned.nodes:
            if m.id == n.id:
                continue
            if m.span[0] <= n.span[0] and n.span[1] <= m.span[1]:
                if m.span == n.span and m.id > n.id:
                    continue
                if parent is None or (m.span[1] - m.span[0]) < (
                    parent.span[1] - parent.span[0]
                ):
                    parent = m
        feats.append(f"{parent.kind}>{n.kind}" if parent else f"^{n.kind}")
    feats.extend(f"ub:{k.value}" for k in ub_kinds)
    return feats


def vectorize(
    pruned: PrunedAst, ub_kinds: Iterable[UbKind] = (), dims: int = VECTOR_DIMS
) -> FeatureVector:
    """Term-frequency feature hashing; empty input gives the zero vector
    (flagged by callers as non-searchable)."""
    values = np.zeros(dims, dtype=np.float64)
    for feat in hashed_features(pruned, ub_kinds):
        values[_bucket(feat, dims)] += 1.0
    return FeatureVector(values)


def solution_template(solution_dict: dict) -> dict:
    """Abstract a concrete solution: region references become placeholders."""
    steps = [
        {**step, "target_region": "<region>"} for step in solution_dict.get("steps", [])
    ]
    return {"steps": steps}


@dataclass
class KnowledgeEntry:
    vector: FeatureVector
    ub_kind: UbKind
    solution: dict
    triplet: "EvalTriplet"
    created: float = 0.0

    def to_dict(self) -> dict:
        return {
            "vector": self.vector.to_list(),
            "ub_kind": self.ub_kind.value,
            "solution": self.solution,
            "triplet": self.triplet.to_dict(),
            "created": self.created,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KnowledgeEntry":
        from .feedback import EvalTriplet

        return cls(
            vector=FeatureVector.from_list(data["vector"]),
            ub_kind=UbKind(data["ub_kind"]),
            solution=data["solution"],
            triplet=EvalTriplet.from_dict(data["triplet"]),
            created=float(data.get("created", 0.0)),
        )


class KnowledgeBase:
    """Append-only JSONL store of successful repairs, searchable by cosine."""

    def __init__(
        self, path: Path | str | None = None, clock: Callable[[], float] = time.time
    ) -> None:
        self.path = Path(path) if path else None
        self.clock = clock
        self.entries: list[KnowledgeEntry] = []
        if self.path and self.path.is_file():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self.entries.append(KnowledgeEntry.from_dict(json.loads(line)))

    def insert(self, entry: KnowledgeEntry) -> None:
        if not entry.triplet.accuracy:
            raise ValueError("only detection-clean solutions may enter the store")
        if entry.created == 0.0:
            entry.created = self.clock()
        self.entries.append(entry)
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fcntl.flock(fh, fcntl.LOCK_EX)
                try:
                    fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
                    fh.flush()
                finally:
                    fcntl.flock(fh, fcntl.LOCK_UN)

    def search(self, vector: FeatureVector, k: int = 3) -> list[tuple[float, KnowledgeEntry]]:
        """Top-k entries by cosine similarity, newer entries winning ties."""
        if vector.is_zero:
            raise ValueError("zero vectors are not searchable")
        if not self.entries:
            return []
        scored = [
            (cosine(vector, e.vector), i, e) for i, e in enumerate(self.entries)
        ]
        scored.sort(key=lambda t: (-t[0], -t[2].created, -t[1]))
        return [(sim, entry) for sim, _, entry in scored[:k]]
