"""Locates unsafe regions and maps them to fix strategies.

Region location is lexical plus bracket matching, not semantic analysis:
good enough for code the compiler rejects, cheap enough to re-run after
every patch. Operation classification covers the five reasons a region
needs ``unsafe`` at all; strategy ordering is a shipped policy table
(``data/strategy_policy.tsv``) keyed by UB kind.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .detector import UbKind
from .errors import LexFailure, Unclassifiable
from .lexutil import find_matching_brace, keyword_occurrences, mask_comments_and_strings

log = logging.getLogger(__name__)


class UnsafeOpKind(str, Enum):
    RAW_POINTER_DEREF = "raw_pointer_deref"
    UNSAFE_FN_CALL = "unsafe_fn_call"
    UNSAFE_TRAIT_IMPL = "unsafe_trait_impl"
    MUTABLE_STATIC_ACCESS = "mutable_static_access"
    UNION_FIELD_ACCESS = "union_field_access"


class FixStrategy(str, Enum):
    SAFE_ALTERNATIVE = "SafeAlternative"
    ASSERTION_GUARD = "AssertionGuard"
    SEMANTIC_MODIFICATION = "SemanticModification"


DEFAULT_STRATEGY_ORDER = (
    FixStrategy.SAFE_ALTERNATIVE,
    FixStrategy.ASSERTION_GUARD,
    FixStrategy.SEMANTIC_MODIFICATION,
)


@dataclass
class UnsafeRegion:
    """One top-level unsafe span in a file.

    ``byte_span`` is a half-open (start, end) offset pair into the decoded
    file text. Nested unsafe occurrences are folded into the outermost
    region and counted in ``nested_unsafe``.
    """

    file: str
    byte_span: tuple[int, int]
    snippet: str
    enclosing_context: str
    nested_unsafe: int = 0

    @property
    def start(self) -> int:
        return self.byte_span[0]

    @property
    def end(self) -> int:
        return self.byte_span[1]


@dataclass
class CodeFeature:
    """What fast thinking knows about one region: ops, UB kinds, summary."""

    region: UnsafeRegion
    op_kinds: frozenset[UnsafeOpKind]
    ub_kinds: frozenset[UbKind]
    context_summary: str
    ref: str = ""

    def to_dict(self) -> dict:
        return {
            "ref": self.ref,
            "file": self.region.file,
            "span": list(self.region.byte_span),
            "op_kinds": sorted(k.value for k in self.op_kinds),
            "ub_kinds": sorted(k.value for k in self.ub_kinds),
            "context_summary": self.context_summary,
        }


# Known unsafe std APIs with safe counterparts. The regexes double as the
# safe_replace agent's catalogue gate and feed its prompt hints.
SAFE_API_CATALOGUE: list[tuple[re.Pattern[str], str]] = [
    (re.compile(r"\bget_unchecked(_mut)?\s*\("), "indexing or .get()/.get_mut()"),
    (re.compile(r"\bfrom_utf8_unchecked\s*\("), "str::from_utf8 with error handling"),
    (re.compile(r"\bunwrap_unchecked\s*\("), ".unwrap() or pattern matching"),
    (re.compile(r"\bfrom_raw_parts(_mut)?\s*\("), "slice borrowing or Vec ownership"),
    (re.compile(r"\btransmute\s*(::)?"), "From/TryFrom or to_bits/from_bits"),
    (re.compile(r"\bset_len\s*\("), "truncate/resize/extend"),
    (re.compile(r"\bcopy_nonoverlapping\s*\("), "copy_from_slice/clone_from_slice"),
    (re.compile(r"\bas_ptr\s*\(\)|\bas_mut_ptr\s*\(\)"), "safe indexing on the container"),
    (re.compile(r"\bread_volatile\s*\(|\bwrite_volatile\s*\("), "plain reads/writes"),
    (re.compile(r"\bassume_init\s*\("), "full initialization before use"),
    (re.compile(r"\bstatic\s+mut\b|[A-Z][A-Z0-9_]{2,}"), "Mutex/RwLock/atomics or OnceLock"),
]

_UNSAFE_API_NAMES = re.compile(
    r"\b(get_unchecked(_mut)?|from_utf8_unchecked|unwrap_unchecked|from_raw(_parts)?(_mut)?"
    r"|transmute|set_len|copy(_nonoverlapping)?|read(_volatile|_unaligned)?"
    r"|write(_volatile|_unaligned|_bytes)?|offset|byte_add|assume_init|as_ref|as_mut"
    r"|alloc|dealloc|drop_in_place|from_ptr)\s*\(",
)
_SCREAMING_IDENT = re.compile(r"\b[A-Z][A-Z0-9_]{2,}\b")
_FIELD_ACCESS = re.compile(r"\b([a-z_][a-z0-9_]*)\s*\.\s*[a-z_][a-z0-9_]*\b")
_CALL = re.compile(r"\b([a-z_][a-z0-9_]*)\s*(::<[^>]*>)?\s*\(")


def locate_unsafe_regions(source: str, file: str | Path) -> list[UnsafeRegion]:
    """Top-level unsafe spans in ``source``, in file order.

    Each region starts at the ``unsafe`` keyword and covers the item it
    introduces: a block, an fn/impl/trait with a braced body, or a bodyless
    declaration terminated by ``;``. Occurrences nested inside an earlier
    region are folded into it.
    """
    file = str(file)
    masked = mask_comments_and_strings(source)
    regions: list[UnsafeRegion] = []
    for start in keyword_occurrences(masked, "unsafe"):
        if regions and start < regions[-1].end:
            regions[-1].nested_unsafe += 1
            continue
        brace = masked.find("{", start)
        semi = masked.find(";", start)
        if brace == -1 and semi == -1:
            raise LexFailure(f"{file}: unterminated unsafe item at offset {start}")
        if brace != -1 and (semi == -1 or brace < semi):
            end = find_matching_brace(masked, brace) + 1
        else:
            end = semi + 1
        snippet = source[start:end]
        regions.append(
            UnsafeRegion(
                file=file,
                byte_span=(start, end),
                snippet=snippet,
                enclosing_context=_enclosing_item(source, masked, start, end),
            )
        )
    return regions


def _enclosing_item(source: str, masked: str, start: int, end: int) -> str:
    """Smallest fn/impl item whose braces contain [start, end), else nearby lines."""
    best: tuple[int, int] | None = None
    for kw in ("fn", "impl"):
        for kw_start in keyword_occurrences(masked, kw):
            if kw_start >= start:
                break
            brace = masked.find("{", kw_start)
            if brace == -1:
                continue
            try:
                close = find_matching_brace(masked, brace)
            except LexFailure:
                continue
            if kw_start <= start and end <= close + 1:
                if best is None or kw_start > best[0]:
                    best = (kw_start, close + 1)
    if best and (best[0], best[1]) != (start, end):
        return source[best[0]:best[1]]
    line_start = source.rfind("\n", 0, max(0, start - 1))
    line_start = 0 if line_start == -1 else line_start + 1
    ctx_end = source.find("\n", min(len(source), end))
    ctx_end = len(source) if ctx_end == -1 else ctx_end
    return source[line_start:ctx_end]


def _is_unary_star(masked: str, idx: int) -> bool:
    j = idx - 1
    while j >= 0 and masked[j] in " \t\n":
        j -= 1
    if j < 0:
        return True
    prev = masked[j]
    if prev in "=({[,;&|!<>+-*/%":
        return True
    # keyword immediately before the star (return *p, in *p, etc.)
    word = re.search(r"([A-Za-z_][A-Za-z0-9_]*)$", masked[: j + 1])
    return bool(word and word.group(1) in {"return", "in", "as", "match", "if", "while"})


def classify_ops(region: UnsafeRegion) -> frozenset[UnsafeOpKind]:
    """The unsafe-operation kinds a region exhibits, lexically determined.

    Raises Unclassifiable when no pattern matches; callers treat that as a
    semantic-modification-first region rather than a crash.
    """
    masked = mask_comments_and_strings(region.snippet)
    context = region.enclosing_context
    found: set[UnsafeOpKind] = set()

    if re.match(r"\s*unsafe\s+impl\b", masked) or re.match(r"\s*unsafe\s+trait\b", masked):
        found.add(UnsafeOpKind.UNSAFE_TRAIT_IMPL)
    for m in re.finditer(r"\*", masked):
        if _is_unary_star(masked, m.start()):
            after = masked[m.end():m.end() + 48]
            if re.match(r"\s*(const\b|mut\b)", after):
                continue  # raw-pointer type, not a deref
            if re.match(r"\s*[A-Za-z_(]", after):
                found.add(UnsafeOpKind.RAW_POINTER_DEREF)
                break
    if _UNSAFE_API_NAMES.search(masked):
        found.add(UnsafeOpKind.UNSAFE_FN_CALL)
    else:
        for m in _CALL.finditer(masked):
            if re.search(rf"unsafe\s+fn\s+{re.escape(m.group(1))}\b", context) or re.search(
                rf"\bextern\b[^;{{]*fn\s+{re.escape(m.group(1))}\b", context
            ):
                found.add(UnsafeOpKind.UNSAFE_FN_CALL)
                break
    if re.match(r"\s*unsafe\s+fn\b", masked) and re.search(r"\bextern\b", masked):
        found.add(UnsafeOpKind.UNSAFE_FN_CALL)
    for m in _SCREAMING_IDENT.finditer(masked):
        name = m.group(0)
        if re.search(rf"static\s+mut\s+{name}\b", context) or re.search(
            rf"static\s+mut\s+{name}\b", masked
        ):
            found.add(UnsafeOpKind.MUTABLE_STATIC_ACCESS)
            break
    if _FIELD_ACCESS.search(masked) and re.search(r"\bunion\b", context + masked):
        found.add(UnsafeOpKind.UNION_FIELD_ACCESS)

    if not found:
        raise Unclassifiable(f"{region.file}: no unsafe-operation pattern matched")
    return frozenset(found)


def has_safe_api_match(snippet: str) -> bool:
    """True when the catalogue knows a safe counterpart for this region."""
    return any(pattern.search(snippet) for pattern, _ in SAFE_API_CATALOGUE)


def safe_api_hints(snippet: str) -> list[str]:
    return [hint for pattern, hint in SAFE_API_CATALOGUE if pattern.search(snippet)]


def load_policy_table(path: Path | None = None) -> dict[str, list[FixStrategy]]:
    """Parse the ``<ub_kind>\\t<strategy,strategy,strategy>`` policy table."""
    if path is None:
        text = (resources.files("ubmend") / "data/strategy_policy.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    table: dict[str, list[FixStrategy]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.rstrip()
        if not line or line.startswith("#"):
            continue
        key, _, order = line.partition("\t")
        strategies = [FixStrategy(tok.strip()) for tok in order.split(",")]
        if sorted(s.value for s in strategies) != sorted(s.value for s in FixStrategy):
            raise ValueError(f"policy row {lineno} must permute all three strategies")
        table[key.strip()] = strategies
    if "default" not in table:
        raise ValueError("policy table needs a 'default' row")
    return table


_POLICY: dict[str, list[FixStrategy]] | None = None


def _policy() -> dict[str, list[FixStrategy]]:
    global _POLICY
    if _POLICY is None:
        _POLICY = load_policy_table()
    return _POLICY


def map_strategies(
    feature: CodeFeature, policy: dict[str, list[FixStrategy]] | None = None
) -> list[FixStrategy]:
    """Ordered permutation of all three strategies for one feature.

    A catalogued safe-API match promotes SafeAlternative to the front; with
    several UB kinds the per-kind table rows are merged by rank sum.
    """
    policy = policy if policy is not None else _policy()
    kinds = sorted(k.value for k in feature.ub_kinds)
    if not kinds:
        order = list(policy["default"])
    else:
        rank: dict[FixStrategy, int] = {s: 0 for s in FixStrategy}
        for kind in kinds:
            row = policy.get(kind, policy["default"])
            for pos, strategy in enumerate(row):
                rank[strategy] += pos
        default_pos = {s: i for i, s in enumerate(policy["default"])}
        order = sorted(FixStrategy, key=lambda s: (rank[s], default_pos[s]))
    if has_safe_api_match(feature.region.snippet):
        order.remove(FixStrategy.SAFE_ALTERNATIVE)
        order.insert(0, FixStrategy.SAFE_ALTERNATIVE)
    return order
