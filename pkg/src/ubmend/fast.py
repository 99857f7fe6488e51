"""Fast thinking: distill error features, then draft candidate repair plans.

One provider call summarizes each affected region; a single further call
asks for up to k alternative plans in a line-oriented grammar::

    SOLUTION <i>:
    STEP <n>: <AGENT> <region-ref> :: <instruction>

Parsing is deliberately lenient (junk lines are dropped, duplicate plans
folded); a fully unparseable answer is retried once and then replaced by
template plans, one per leading strategy.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum

from .classifier import (
    CodeFeature,
    FixStrategy,
    UnsafeRegion,
    classify_ops,
    locate_unsafe_regions,
    map_strategies,
)
from .detector import TargetPackage, UbReport
from .errors import DegenerateOutput, Unclassifiable
from .lexutil import line_of_offset
from .prompts import fill, load_template
from .provider import PromptRecord, Provider

log = logging.getLogger(__name__)

DEFAULT_SOLUTION_COUNT = 10


class AgentKind(str, Enum):
    SAFE_REPLACE = "SafeReplace"
    ADD_ASSERTION = "AddAssertion"
    MODIFY_SEMANTICS = "ModifySemantics"
    REASON = "Reason"
    ROLLBACK = "Rollback"


class Provenance(str, Enum):
    GENERATED = "generated"
    FEEDBACK_RANKED = "feedback_ranked"
    KNOWLEDGE_SEEDED = "knowledge_seeded"


AGENT_FOR_STRATEGY = {
    FixStrategy.SAFE_ALTERNATIVE: AgentKind.SAFE_REPLACE,
    FixStrategy.ASSERTION_GUARD: AgentKind.ADD_ASSERTION,
    FixStrategy.SEMANTIC_MODIFICATION: AgentKind.MODIFY_SEMANTICS,
}
STRATEGY_FOR_AGENT = {v: k for k, v in AGENT_FOR_STRATEGY.items()}
FIX_AGENTS = frozenset(AGENT_FOR_STRATEGY.values())

_DEFAULT_INSTRUCTION = {
    FixStrategy.SAFE_ALTERNATIVE: "replace the unsafe operation with the catalogued safe API",
    FixStrategy.ASSERTION_GUARD: "insert guard assertions before each risky operation",
    FixStrategy.SEMANTIC_MODIFICATION: "rewrite the region to remove the undefined behavior",
}

_STEP_RE = re.compile(r"^\s*STEP\s+\d+\s*:\s*([A-Za-z]+)\s+(\S+)\s*::\s*(.+?)\s*$")
_SOLUTION_RE = re.compile(r"^\s*SOLUTION\s+\d+\s*:", re.IGNORECASE)


@dataclass
class RepairStep:
    agent: AgentKind
    target_region: str
    instruction: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "agent": self.agent.value,
            "target_region": self.target_region,
            "instruction": self.instruction,
            "params": self.params,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RepairStep":
        return cls(
            agent=AgentKind(data["agent"]),
            target_region=data["target_region"],
            instruction=data["instruction"],
            params=dict(data.get("params", {})),
        )


@dataclass
class RepairSolution:
    id: str
    steps: list[RepairStep]
    source_features: CodeFeature | None = None
    provenance: Provenance = Provenance.GENERATED

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "steps": [s.to_dict() for s in self.steps],
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RepairSolution":
        return cls(
            id=data["id"],
            steps=[RepairStep.from_dict(s) for s in data["steps"]],
            provenance=Provenance(data.get("provenance", "generated")),
        )


def region_ref(file: str, ordinal: int) -> str:
    return f"{file}#{ordinal}"


def parse_region_ref(ref: str) -> tuple[str, int]:
    file, _, ordinal = ref.rpartition("#")
    return file, int(ordinal)


def normalize_steps(steps: list[RepairStep]) -> tuple:
    return tuple(
        (s.agent.value, s.target_region, " ".join(s.instruction.split()).lower())
        for s in steps
    )


def strategy_order(feature: CodeFeature) -> list[FixStrategy]:
    """map_strategies, except unclassifiable regions go semantics-first."""
    if not feature.op_kinds:
        return [
            FixStrategy.SEMANTIC_MODIFICATION,
            FixStrategy.SAFE_ALTERNATIVE,
            FixStrategy.ASSERTION_GUARD,
        ]
    return map_strategies(feature)


def format_errors(reports: list[UbReport]) -> str:
    if not reports:
        return "(none)"
    return "\n".join(
        f"- {r.kind.value}: {r.message}" + (f" (line {r.line})" if r.line else "")
        for r in reports
    )


def _report_hits_region(report: UbReport, rel: str, source: str, region: UnsafeRegion) -> bool:
    rf = report.file.replace("\\", "/")
    rel_norm = rel.replace("\\", "/")
    if not (rf == rel_norm or rf.endswith("/" + rel_norm) or rel_norm.endswith("/" + rf)):
        if rf.rsplit("/", 1)[-1] != rel_norm.rsplit("/", 1)[-1]:
            return False
    if report.line is None:
        return False
    first = line_of_offset(source, region.start)
    last = line_of_offset(source, max(region.start, region.end - 1))
    return first <= report.line <= last


def extract_features(
    target: TargetPackage, reports: list[UbReport], provider: Provider
) -> list[CodeFeature]:
    """One CodeFeature per unsafe region that overlaps a UB report.

    Reports that land in no region are logged as taxonomy escapes; if none
    overlap at all, a whole-file fallback feature keeps the pipeline moving.
    """
    if not reports:
        return []
    features: list[CodeFeature] = []
    claimed: set[int] = set()
    for rel in target.entry_files:
        source = target.read(rel)
        regions = locate_unsafe_regions(source, rel)
        for ordinal, region in enumerate(regions):
            hit_idx = [
                i for i, r in enumerate(reports) if _report_hits_region(r, rel, source, region)
            ]
            if not hit_idx:
                continue
            claimed.update(hit_idx)
            features.append(
                _build_feature(
                    region, region_ref(rel, ordinal), [reports[i] for i in hit_idx], provider
                )
            )
    for i, report in enumerate(reports):
        if i not in claimed:
            log.warning("taxonomy escape: report %s maps to no unsafe region", report.to_dict())
    if not features:
        rel = _fallback_file(target, reports)
        source = target.read(rel)
        regions = locate_unsafe_regions(source, rel)
        if regions:
            region, ordinal = regions[0], 0
        else:
            region = UnsafeRegion(
                file=rel,
                byte_span=(0, len(source)),
                snippet=source,
                enclosing_context=source,
            )
            ordinal = 0
        features.append(
            _build_feature(region, region_ref(rel, ordinal), list(reports), provider)
        )
    return features


def _fallback_file(target: TargetPackage, reports: list[UbReport]) -> str:
    names = {r.file.replace("\\", "/").rsplit("/", 1)[-1] for r in reports if r.file}
    for rel in target.entry_files:
        if rel.replace("\\", "/").rsplit("/", 1)[-1] in names:
            return rel
    return target.entry_files[0]


def _build_feature(
    region: UnsafeRegion, ref: str, hits: list[UbReport], provider: Provider
) -> CodeFeature:
    try:
        op_kinds = classify_ops(region)
    except Unclassifiable:
        log.warning("region %s unclassifiable; semantics-first fallback", ref)
        op_kinds = frozenset()
    prompt = fill(
        load_template("feature_extraction.txt"),
        errors=format_errors(hits),
        snippet=region.snippet,
        context=region.enclosing_context,
    )
    summary = provider.complete(PromptRecord.user(prompt)).strip()
    return CodeFeature(
        region=region,
        op_kinds=op_kinds,
        ub_kinds=frozenset(r.kind for r in hits),
        context_summary=summary,
        ref=ref,
    )


def _feature_lines(features: list[CodeFeature]) -> str:
    lines = []
    for f in features:
        order = ",".join(s.value for s in strategy_order(f))
        ub = ",".join(sorted(k.value for k in f.ub_kinds)) or "unknown"
        ops = ",".join(sorted(k.value for k in f.op_kinds)) or "unclassified"
        lines.append(f"FEATURE {f.ref} :: strategies={order} :: ub={ub} :: ops={ops}")
        lines.append(f"  summary: {f.context_summary}")
    return "\n".join(lines)


def parse_plan(text: str) -> list[list[RepairStep]]:
    solutions: list[list[RepairStep]] = []
    current: list[RepairStep] | None = None
    for line in text.splitlines():
        if _SOLUTION_RE.match(line):
            if current:
                solutions.append(current)
            current = []
            continue
        m = _STEP_RE.match(line)
        if not m:
            continue
        agent_token, ref, instruction = m.group(1), m.group(2), m.group(3)
        try:
            agent = AgentKind(agent_token)
        except ValueError:
            matches = [a for a in AgentKind if a.value.lower() == agent_token.lower()]
            if not matches:
                continue
            agent = matches[0]
        if current is None:
            current = []
        current.append(RepairStep(agent=agent, target_region=ref, instruction=instruction))
    if current:
        solutions.append(current)
    return [s for s in solutions if s]


def fallback_solutions(features: list[CodeFeature]) -> list[list[RepairStep]]:
    """One template plan per strategy in the leading feature's order."""
    if not features:
        return []
    plans = []
    for strategy in strategy_order(features[0]):
        plans.append(
            [
                RepairStep(
                    agent=AGENT_FOR_STRATEGY[strategy],
                    target_region=f.ref,
                    instruction=_DEFAULT_INSTRUCTION[strategy],
                )
                for f in features
            ]
        )
    return plans


def generate_solutions(
    features: list[CodeFeature],
    k: int = DEFAULT_SOLUTION_COUNT,
    provider: Provider | None = None,
    kb_enabled: bool = True,
) -> list[RepairSolution]:
    """Candidate solutions in the provider's preference order, deduplicated.

    Requires at least one feature and k >= 1; ids are unique within the
    returned list. At most k solutions come back even if the provider
    rambles.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not features:
        raise ValueError("generate_solutions needs at least one feature")
    assert provider is not None, "provider required"
    prompt_text = fill(
        load_template("plan_generation.txt"),
        count=str(k),
        knowledge="on" if kb_enabled else "off",
        features=_feature_lines(features),
        errors="\n".join(
            f"- {f.ref}: {','.join(sorted(kk.value for kk in f.ub_kinds)) or 'unknown'}"
            for f in features
        ),
    )
    plans = parse_plan(provider.complete(PromptRecord.user(prompt_text)))
    if not plans:
        log.warning("degenerate plan output; retrying once")
        retry = prompt_text + "\nReminder: answer only with SOLUTION and STEP lines."
        plans = parse_plan(provider.complete(PromptRecord.user(retry)))
        if not plans:
            log.warning("still degenerate; falling back to template plans")
            plans = fallback_solutions(features)
            if not plans:
                raise DegenerateOutput("no plans parseable and no fallback available")
    seen: set[tuple] = set()
    solutions: list[RepairSolution] = []
    for steps in plans:
        key = normalize_steps(steps)
        if key in seen:
            continue
        seen.add(key)
        solutions.append(
            RepairSolution(
                id=f"s{len(solutions) + 1:02d}",
                steps=steps,
                source_features=features[0],
            )
        )
        if len(solutions) == k:
            break
    return solutions
