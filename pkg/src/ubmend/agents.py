"""The three fix agents: safe replacement, assertion guard, semantic change.

Each agent renders its prompt template, asks the provider, and extracts a
patch from the first fenced code block (the full revised region). Patches
record both sides of the edit so apply/revert round-trips are byte-exact.
"""
from __future__ import annotations

import difflib
import re
from dataclasses import dataclass

from .classifier import CodeFeature, FixStrategy, UnsafeRegion, has_safe_api_match
from .errors import AgentFailure, NoGuardExpressible, NoSafeEquivalent, ProviderFailure
from .fast import AgentKind
from .prompts import fill, load_template
from .provider import PromptRecord, Provider

_FENCE_RE = re.compile(r"```(?:rust)?\n(.*?)```", re.DOTALL)
_GUARDISH_RE = re.compile(
    r"^\s*$|^\s*(assert|debug_assert|if\b|return\b|let\b.*=.*(len|align_offset|is_null)|//|#)",
)

_TEMPLATE_FOR_AGENT = {
    AgentKind.SAFE_REPLACE: "safe_replace.txt",
    AgentKind.ADD_ASSERTION: "add_assertion.txt",
    AgentKind.MODIFY_SEMANTICS: "modify_semantics.txt",
}
_STRATEGY_NAME = {
    AgentKind.SAFE_REPLACE: FixStrategy.SAFE_ALTERNATIVE.value,
    AgentKind.ADD_ASSERTION: FixStrategy.ASSERTION_GUARD.value,
    AgentKind.MODIFY_SEMANTICS: FixStrategy.SEMANTIC_MODIFICATION.value,
}


@dataclass
class PatchRecord:
    """One applied edit: region span plus before/after text."""

    file: str
    before_span: tuple[int, int]
    before_text: str
    after_text: str
    agent: AgentKind
    rationale: str = ""

    def to_dict(self) -> dict:
        return {
            "file": self.file,
            "before_span": list(self.before_span),
            "before_text": self.before_text,
            "after_text": self.after_text,
            "agent": self.agent.value,
            "rationale": self.rationale,
        }


def apply_patch(patch: PatchRecord, workspace) -> None:
    """Replace the span in the working copy; the span must still match."""
    text = workspace.read(patch.file)
    start, end = patch.before_span
    if text[start:end] != patch.before_text:
        raise AgentFailure(f"{patch.file}: region drifted; patch does not apply")
    workspace.write(patch.file, text[:start] + patch.after_text + text[end:])


def revert_patch(patch: PatchRecord, workspace) -> None:
    """Undo apply_patch; the patched span must still match after_text."""
    text = workspace.read(patch.file)
    start = patch.before_span[0]
    end = start + len(patch.after_text)
    if text[start:end] != patch.after_text:
        raise AgentFailure(f"{patch.file}: cannot revert, region drifted")
    workspace.write(patch.file, text[:start] + patch.before_text + text[end:])


def build_prompt(
    agent: AgentKind, region: UnsafeRegion, feature: CodeFeature, context: str | None
) -> str:
    errors = "\n".join(f"- {k.value}" for k in sorted(feature.ub_kinds, key=lambda k: k.value))
    ctx = region.enclosing_context
    if feature.context_summary:
        ctx += f"\n\nSummary: {feature.context_summary}"
    if context:
        ctx += f"\n\nKnowledge from previous repairs:\n{context}"
    return fill(
        load_template(_TEMPLATE_FOR_AGENT[agent]),
        strategy=_STRATEGY_NAME[agent],
        errors=errors or "(unclassified)",
        snippet=region.snippet,
        context=ctx,
    )


def _extract_block(response: str) -> tuple[str, str]:
    """(revised region, rationale) from a provider answer."""
    m = _FENCE_RE.search(response)
    if not m:
        raise ProviderFailure("response contains no fenced code block")
    rationale = response[: m.start()].strip().splitlines()
    return m.group(1).rstrip("\n"), rationale[0] if rationale else ""


def _ask(
    agent: AgentKind,
    region: UnsafeRegion,
    feature: CodeFeature,
    provider: Provider,
    context: str | None,
) -> str:
    prompt = build_prompt(agent, region, feature, context)
    return provider.complete(PromptRecord.user(prompt))


def insert_only_diff(before: str, after: str) -> list[str] | None:
    """Inserted lines if ``after`` is ``before`` plus insertions, else None."""
    matcher = difflib.SequenceMatcher(
        a=before.splitlines(), b=after.splitlines(), autojunk=False
    )
    inserted: list[str] = []
    for op, _, _, b1, b2 in matcher.get_opcodes():
        if op == "equal":
            continue
        if op != "insert":
            return None
        inserted.extend(matcher.b[b1:b2])
    return inserted


def safe_replace(
    region: UnsafeRegion,
    feature: CodeFeature,
    provider: Provider,
    context: str | None = None,
) -> PatchRecord:
    """Swap the unsafe operation for a catalogued safe equivalent.

    Abstains (NoSafeEquivalent) when the catalogue has nothing for this
    region, when the provider says so, or when the answer fails to remove
    or shrink the unsafe region.
    """
    if not has_safe_api_match(region.snippet):
        raise NoSafeEquivalent(f"{region.file}: no catalogued equivalent")
    response = _ask(AgentKind.SAFE_REPLACE, region, feature, provider, context)
    if "NO SAFE EQUIVALENT" in response:
        raise NoSafeEquivalent(f"{region.file}: provider abstained")
    after, rationale = _extract_block(response)
    before_unsafe = region.snippet.count("unsafe")
    if after.count("unsafe") >= before_unsafe and before_unsafe:
        raise NoSafeEquivalent(f"{region.file}: answer does not reduce the unsafe region")
    return PatchRecord(
        file=region.file,
        before_span=region.byte_span,
        before_text=region.snippet,
        after_text=after,
        agent=AgentKind.SAFE_REPLACE,
        rationale=rationale,
    )


def add_assertion(
    region: UnsafeRegion,
    feature: CodeFeature,
    provider: Provider,
    context: str | None = None,
) -> PatchRecord:
    """Prepend guard checks; the original unsafe expression must survive.

    The answer is rejected (NoGuardExpressible) unless it is the original
    region plus inserted guard-shaped lines. That structural check is what
    keeps this agent honest.
    """
    response = _ask(AgentKind.ADD_ASSERTION, region, feature, provider, context)
    if "NO GUARD EXPRESSIBLE" in response:
        raise NoGuardExpressible(f"{region.file}: provider abstained")
    after, rationale = _extract_block(response)
    inserted = insert_only_diff(region.snippet, after)
    if inserted is None:
        raise NoGuardExpressible(f"{region.file}: answer rewrites the unsafe expression")
    if not inserted:
        raise NoGuardExpressible(f"{region.file}: answer inserts no guard")
    for line in inserted:
        if not _GUARDISH_RE.match(line):
            raise NoGuardExpressible(f"{region.file}: inserted line is not a guard: {line!r}")
    return PatchRecord(
        file=region.file,
        before_span=region.byte_span,
        before_text=region.snippet,
        after_text=after,
        agent=AgentKind.ADD_ASSERTION,
        rationale=rationale,
    )


def modify_semantics(
    region: UnsafeRegion,
    feature: CodeFeature,
    provider: Provider,
    context: str | None = None,
) -> PatchRecord:
    """Free-form rewrite of the region; the least constrained agent."""
    response = _ask(AgentKind.MODIFY_SEMANTICS, region, feature, provider, context)
    after, rationale = _extract_block(response)
    return PatchRecord(
        file=region.file,
        before_span=region.byte_span,
        before_text=region.snippet,
        after_text=after,
        agent=AgentKind.MODIFY_SEMANTICS,
        rationale=rationale,
    )


AGENT_FUNCTIONS = {
    AgentKind.SAFE_REPLACE: safe_replace,
    AgentKind.ADD_ASSERTION: add_assertion,
    AgentKind.MODIFY_SEMANTICS: modify_semantics,
}
