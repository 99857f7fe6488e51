"""Command-line entry points: repair one target or benchmark a dataset.

``fix`` drives the full pipeline on a single target and prints the verdict;
``bench`` runs the same logic per manifest case, in parallel, and reports
pass/exec rates with Wilson confidence intervals plus a per-kind timing
table (no-knowledge vs knowledge columns). With replay transcripts and
``--fixed-clock`` the bench JSON report is byte-identical across runs:
knowledge and experience writes are deferred until every case finished and
applied in case-id order.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import difflib
import json
import logging
import os
import shlex
import sys
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Callable, Sequence

from .detector import (
    DetectorConfig,
    TargetPackage,
    UbKind,
    run_detection,
)
from .errors import (
    DetectionTimeout,
    NonUbCompileError,
    ProviderFailure,
    ReplayMiss,
    StorageFailure,
    TargetRejected,
    ToolMissing,
    UbmendError,
)
from .fast import (
    AgentKind,
    Provenance,
    RepairSolution,
    RepairStep,
    extract_features,
    generate_solutions,
    parse_region_ref,
)
from .feedback import (
    EvalTriplet,
    ExperienceRecord,
    FeedbackEngine,
    ReferenceBundle,
    signature_of,
)
from .kb import AstMode, FeatureVector, KnowledgeBase, extract_ast, prune, vectorize
from .provider import (
    Provider,
    ProviderConfig,
    ProviderMode,
    TranscriptRecorder,
    create_provider,
)
from .rollback import RollbackStats
from .slow import ErrorTrace, SessionConfig, SessionOutcome, Verdict, run_session
from .workspace import WorkingCopy

log = logging.getLogger(__name__)

DEFAULT_CONFIDENCE = 0.95
JOBS_CAP = 8


class LogicalClock:
    """Deterministic monotonic stand-in: every call advances one second."""

    def __init__(self, start: float = 0.0) -> None:
        self._value = start
        self._lock = threading.Lock()

    def __call__(self) -> float:
        with self._lock:
            self._value += 1.0
            return self._value


def compute_ci(
    successes: int, trials: int, confidence: float = DEFAULT_CONFIDENCE
) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2.0 * trials)) / denom
    half = (
        z * ((p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) ** 0.5) / denom
    )
    return (max(0.0, centre - half), min(1.0, centre + half))


@dataclass
class CaseResult:
    id: str
    kind: str
    verdict: str
    acceptability: bool | None
    baseline_errors: int
    final_errors: int
    thoughts: int
    rollbacks: int
    tokens: int
    seconds_kb: float | None
    seconds_plain: float | None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "verdict": self.verdict,
            "acceptability": self.acceptability,
            "baseline_errors": self.baseline_errors,
            "final_errors": self.final_errors,
            "thoughts": self.thoughts,
            "rollbacks": self.rollbacks,
            "tokens": self.tokens,
            "seconds_kb": self.seconds_kb,
            "seconds_plain": self.seconds_plain,
            "note": self.note,
        }

    @property
    def passed(self) -> bool:
        return self.verdict in (Verdict.PASS.value, Verdict.SEMANTIC_PASS.value)

    @property
    def accepted(self) -> bool:
        return self.passed and self.acceptability is True


@dataclass
class BenchReport:
    cases: list[CaseResult]
    pass_rate: float
    exec_rate: float
    ci_95: dict[str, tuple[float, float]]
    per_kind: dict[str, dict]
    totals: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "cases": [c.to_dict() for c in self.cases],
            "pass_rate": self.pass_rate,
            "exec_rate": self.exec_rate,
            "ci_95": {k: list(v) for k, v in self.ci_95.items()},
            "per_kind": self.per_kind,
            "totals": self.totals,
        }


def build_report(cases: list[CaseResult]) -> BenchReport:
    cases = sorted(cases, key=lambda c: c.id)
    n = len(cases)
    passed = sum(1 for c in cases if c.passed)
    accepted = sum(1 for c in cases if c.accepted)
    per_kind: dict[str, dict] = {}
    for kind in sorted({c.kind for c in cases}):
        group = [c for c in cases if c.kind == kind]
        kb_times = [c.seconds_kb for c in group if c.seconds_kb is not None]
        plain_times = [c.seconds_plain for c in group if c.seconds_plain is not None]
        per_kind[kind] = {
            "cases": len(group),
            "passed": sum(1 for c in group if c.passed),
            "accepted": sum(1 for c in group if c.accepted),
            "avg_seconds_no_kb": (
                sum(plain_times) / len(plain_times) if plain_times else None
            ),
            "avg_seconds_kb": sum(kb_times) / len(kb_times) if kb_times else None,
        }
    return BenchReport(
        cases=cases,
        pass_rate=passed / n if n else 0.0,
        exec_rate=accepted / n if n else 0.0,
        ci_95={
            "pass_rate": compute_ci(passed, n) if n else (0.0, 1.0),
            "exec_rate": compute_ci(accepted, n) if n else (0.0, 1.0),
        },
        per_kind=per_kind,
        totals={
            "cases": n,
            "passed": passed,
            "accepted": accepted,
            "tokens": sum(c.tokens for c in cases),
        },
    )


def _fmt_seconds(value: float | None) -> str:
    return f"{value:.3f}" if value is not None else "-"


def _fmt_accept(value: bool | None) -> str:
    if value is None:
        return "unknown"
    return "yes" if value else "no"


def _align(rows: list[list[str]]) -> str:
    if not rows:
        return ""
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        for row in rows
    )


def render_report(report: BenchReport, fmt: str = "table") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    rows = [
        [
            "id",
            "kind",
            "base",
            "verdict",
            "accepted",
            "time_no_kb/s",
            "time_kb/s",
            "tokens",
        ]
    ]
    for c in report.cases:
        rows.append(
            [
                c.id,
                c.kind,
                str(c.baseline_errors),
                c.verdict,
                _fmt_accept(c.acceptability),
                _fmt_seconds(c.seconds_plain),
                _fmt_seconds(c.seconds_kb),
                str(c.tokens),
            ]
        )
    lines = [_align(rows)]
    kind_rows = [["kind", "cases", "passed", "accepted", "time_no_kb/s", "time_kb/s"]]
    for kind, row in report.per_kind.items():
        kind_rows.append(
            [
                kind,
                str(row["cases"]),
                str(row["passed"]),
                str(row["accepted"]),
                _fmt_seconds(row["avg_seconds_no_kb"]),
                _fmt_seconds(row["avg_seconds_kb"]),
            ]
        )
    if report.cases:
        plain = [c.seconds_plain for c in report.cases if c.seconds_plain is not None]
        kb = [c.seconds_kb for c in report.cases if c.seconds_kb is not None]
        kind_rows.append(
            [
                "Average",
                str(report.totals["cases"]),
                str(report.totals["passed"]),
                str(report.totals["accepted"]),
                _fmt_seconds(sum(plain) / len(plain) if plain else None),
                _fmt_seconds(sum(kb) / len(kb) if kb else None),
            ]
        )
    lines.append("")
    lines.append(_align(kind_rows))
    lines.append("")
    if report.totals["cases"]:
        lo, hi = report.ci_95["pass_rate"]
        lines.append(
            f"pass_rate: {report.totals['passed']}/{report.totals['cases']}"
            f" = {report.pass_rate:.3f}  CI95 [{lo:.3f}, {hi:.3f}]"
        )
        lo, hi = report.ci_95["exec_rate"]
        lines.append(
            f"exec_rate: {report.totals['accepted']}/{report.totals['cases']}"
            f" = {report.exec_rate:.3f}  CI95 [{lo:.3f}, {hi:.3f}]"
        )
    return "\n".join(lines)


@dataclass
class PipelineSettings:
    """Everything repair_one needs besides the target itself."""

    detector: DetectorConfig
    solutions_k: int
    budget: int
    ast_mode: AstMode
    kb_enabled: bool
    clock: Callable[[], float]
    session_dir: Path | None = None


def _lead_kind(reports) -> UbKind:
    counts = Counter(r.kind for r in reports)
    return counts.most_common(1)[0][0] if counts else UbKind.UNKNOWN


def _seeded_solution(record: ExperienceRecord, ref: str) -> RepairSolution | None:
    steps = [
        RepairStep(agent=AgentKind(agent), target_region=ref, instruction=instruction)
        for agent, instruction in record.solution_signature
    ]
    if not steps:
        return None
    return RepairSolution(id="s00", steps=steps, provenance=Provenance.KNOWLEDGE_SEEDED)


def repair_one(
    target: TargetPackage,
    provider: Provider,
    engine: FeedbackEngine,
    settings: PipelineSettings,
    reference: ReferenceBundle | None = None,
) -> tuple[SessionOutcome, EvalTriplet, dict[str, str]]:
    """Full pipeline on one target: detect, plan, repair, evaluate, learn.

    Returns the session outcome (triplet attached), the evaluation triplet,
    and the original sources for diffing.
    """
    clock = settings.clock
    start = clock()
    tokens_before = provider.tokens_used
    ws = WorkingCopy(target, settings.session_dir)
    originals = ws.files()
    baseline = run_detection(
        ws.target, timeout=settings.detector.timeout, config=settings.detector, clock=clock
    )
    kb = engine.kb if settings.kb_enabled else None
    config = SessionConfig(
        budget=settings.budget,
        detector=settings.detector,
        kb=kb,
        kb_enabled=settings.kb_enabled,
        ast_mode=settings.ast_mode,
        session_dir=ws.session_dir,
        clock=clock,
    )
    vector: FeatureVector | None = None
    solutions: list[RepairSolution] = []
    if baseline.clean:
        outcome = SessionOutcome(
            Verdict.PASS,
            ws.files(),
            ErrorTrace(counts=[0], thoughts=[], iteration_budget=settings.budget),
        )
    else:
        features = extract_features(ws.target, list(baseline.reports), provider)
        if settings.kb_enabled:
            lead_file, _ = parse_region_ref(features[0].ref)
            ast = extract_ast(ws.read(lead_file), settings.ast_mode, provider)
            vector = vectorize(
                prune(ast, baseline.reports),
                ub_kinds=sorted({r.kind for r in baseline.reports}, key=lambda k: k.value),
            )
        solutions = generate_solutions(
            features, k=settings.solutions_k, provider=provider, kb_enabled=settings.kb_enabled
        )
        if settings.kb_enabled and vector is not None and not vector.is_zero:
            hit = engine.best_hit(vector)
            if hit is not None:
                seeded = _seeded_solution(hit[1], features[0].ref)
                if seeded is not None:
                    solutions.insert(0, seeded)
                    config.skip_reason_steps = True
            solutions = engine.rank_solutions(solutions, vector)
        outcome = run_session(
            ws.target,
            solutions,
            settings.budget,
            provider=provider,
            config=config,
            workspace=ws,
            baseline=baseline,
        )
    elapsed = clock() - start
    tokens = provider.tokens_used - tokens_before
    triplet = engine.evaluate(
        outcome,
        reference,
        entry_file=target.entry_files[0],
        overhead_seconds=elapsed,
        overhead_tokens=tokens,
    )
    if outcome.verdict is Verdict.PASS and triplet.acceptability is True:
        outcome.verdict = Verdict.SEMANTIC_PASS
    outcome.triplet = triplet
    if (
        settings.kb_enabled
        and vector is not None
        and not vector.is_zero
        and outcome.solution_id is not None
    ):
        used = next((s for s in solutions if s.id == outcome.solution_id), None)
        if used is not None:
            record = ExperienceRecord(
                feature_vector=vector,
                ub_kind=_lead_kind(baseline.reports),
                solution_id=used.id,
                triplet=triplet,
                solution_signature=signature_of(used),
            )
            engine.record_experience(record, solution=used if triplet.accuracy else None)
    return outcome, triplet, originals


def _diff_stats(before: dict[str, str], after: dict[str, str]) -> list[tuple[str, int, int]]:
    out: list[tuple[str, int, int]] = []
    for rel in sorted(set(before) | set(after)):
        old, new = before.get(rel, ""), after.get(rel, "")
        if old == new:
            continue
        added = removed = 0
        for line in difflib.unified_diff(old.splitlines(), new.splitlines(), lineterm=""):
            if line.startswith("+") and not line.startswith("+++"):
                added += 1
            elif line.startswith("-") and not line.startswith("---"):
                removed += 1
        out.append((rel, added, removed))
    return out


def _make_clock(fixed: bool) -> Callable[[], float]:
    return LogicalClock() if fixed else time.monotonic


def _detector_config(args: argparse.Namespace) -> DetectorConfig:
    if args.detector_cmd:
        command = tuple(shlex.split(args.detector_cmd))
        return DetectorConfig(command=command, timeout=args.timeout)
    return DetectorConfig(timeout=args.timeout)


def _provider_config(args: argparse.Namespace) -> ProviderConfig:
    return ProviderConfig(
        mode=ProviderMode(args.provider),
        model_name=args.model,
        temperature=args.temperature,
        transcript_path=Path(args.transcript) if args.transcript else None,
    )


def _wrap_recording(provider: Provider, args: argparse.Namespace) -> Provider:
    if args.transcript and ProviderMode(args.provider) is not ProviderMode.REPLAY:
        return TranscriptRecorder(provider)
    return provider


def cmd_fix(args: argparse.Namespace) -> int:
    clock = _make_clock(args.fixed_clock)
    try:
        target = TargetPackage.from_path(args.path)
        target.validate()
        provider = _wrap_recording(create_provider(_provider_config(args)), args)
        kb = None if args.no_kb else KnowledgeBase(args.kb, clock=clock)
        engine = FeedbackEngine(args.experience, kb=kb, clock=clock)
        reference = ReferenceBundle.from_dir(args.reference) if args.reference else None
    except (TargetRejected, ProviderFailure, StorageFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    settings = PipelineSettings(
        detector=_detector_config(args),
        solutions_k=args.solutions,
        budget=args.max_iterations,
        ast_mode=AstMode(args.ast_mode),
        kb_enabled=not args.no_kb,
        clock=clock,
    )
    try:
        outcome, triplet, originals = repair_one(
            target, provider, engine, settings, reference=reference
        )
    except (ToolMissing, NonUbCompileError, ReplayMiss, StorageFailure, ProviderFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DetectionTimeout as exc:
        print(Verdict.FAILED.value)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if isinstance(provider, TranscriptRecorder) and args.transcript:
        provider.write(args.transcript)
    changed = _diff_stats(originals, outcome.final_source)
    if args.report == "json":
        payload = {
            "schema_version": 1,
            "target": str(args.path),
            "verdict": outcome.verdict.value,
            "baseline_errors": outcome.trace.counts[0],
            "final_errors": outcome.final_errors,
            "triplet": triplet.to_dict(),
            "trace": outcome.trace.to_dict(),
            "rollbacks": outcome.stats.rollback_count,
            "changed_files": [
                {"file": rel, "added": a, "removed": r} for rel, a, r in changed
            ],
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(outcome.verdict.value)
        print(f"target: {args.path}")
        print(f"errors: {outcome.trace.counts[0]} -> {outcome.final_errors}")
        print(
            f"thoughts: {len(outcome.trace.thoughts)}, rollbacks: {outcome.stats.rollback_count}"
        )
        print(f"acceptability: {_fmt_accept(triplet.acceptability)}")
        print(
            f"time: {triplet.overhead_seconds:.3f}s, tokens: {triplet.overhead_tokens}"
        )
        if changed:
            print("changed files:")
            for rel, a, r in changed:
                print(f"  {rel} (+{a} -{r})")
    return 0 if outcome.verdict in (Verdict.PASS, Verdict.SEMANTIC_PASS) else 1


@dataclass
class ManifestCase:
    id: str
    path: Path
    ub_kind: str
    reference: Path | None


def load_manifest(path: Path | str) -> list[ManifestCase]:
    path = Path(path)
    if not path.is_file():
        raise StorageFailure(f"no such manifest: {path}")
    base = path.parent
    cases: list[ManifestCase] = []
    seen: set[str] = set()
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            cid = str(entry["id"])
            case_path = base / entry["path"]
            kind = str(entry.get("ub_kind", UbKind.UNKNOWN.value))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise StorageFailure(f"{path}:{ln}: bad manifest line: {exc}") from exc
        if cid in seen:
            raise StorageFailure(f"{path}:{ln}: duplicate case id {cid!r}")
        seen.add(cid)
        if not case_path.exists():
            raise StorageFailure(f"{path}:{ln}: case path does not exist: {case_path}")
        ref = entry.get("reference")
        cases.append(
            ManifestCase(
                id=cid,
                path=case_path,
                ub_kind=kind,
                reference=base / ref if ref else None,
            )
        )
    if not cases:
        raise StorageFailure(f"empty manifest: {path}")
    return cases


def _bench_case(
    case: ManifestCase,
    args: argparse.Namespace,
    initial_kb: list,
    initial_exp: list[ExperienceRecord],
) -> tuple[CaseResult, list, list[ExperienceRecord], list]:
    """One manifest case: a knowledge run plus a no-knowledge timing run.

    Returns the row, the knowledge entries and experience records the case
    produced (deferred; applied later in case-id order), and any transcript
    entries recorded.
    """
    clock = _make_clock(args.fixed_clock)
    detector = _detector_config(args)
    recorded: list = []

    def one_run(kb_enabled: bool) -> tuple[SessionOutcome, EvalTriplet, list, list]:
        provider = _wrap_recording(create_provider(_provider_config(args)), args)
        kb = KnowledgeBase(None, clock=clock)
        kb.entries = list(initial_kb)
        engine = FeedbackEngine(None, kb=kb, clock=clock)
        engine.records = list(initial_exp)
        target = TargetPackage.from_path(case.path)
        target.validate()
        reference = ReferenceBundle.from_dir(case.reference) if case.reference else None
        settings = PipelineSettings(
            detector=detector,
            solutions_k=args.solutions,
            budget=args.max_iterations,
            ast_mode=AstMode(args.ast_mode),
            kb_enabled=kb_enabled,
            clock=clock,
        )
        outcome, triplet, _ = repair_one(target, provider, engine, settings, reference)
        if isinstance(provider, TranscriptRecorder):
            recorded.extend(provider.entries[key] for key in provider._order)
        return (
            outcome,
            triplet,
            kb.entries[len(initial_kb):],
            engine.records[len(initial_exp):],
        )

    try:
        if args.no_kb:
            outcome, triplet, new_kb, new_exp = one_run(kb_enabled=False)
            seconds_kb, seconds_plain = None, triplet.overhead_seconds
            tokens = triplet.overhead_tokens
        else:
            outcome, triplet, new_kb, new_exp = one_run(kb_enabled=True)
            seconds_kb = triplet.overhead_seconds
            tokens = triplet.overhead_tokens
            _, plain_triplet, _, _ = one_run(kb_enabled=False)
            seconds_plain = plain_triplet.overhead_seconds
    except UbmendError as exc:
        log.warning("case %s failed: %s", case.id, exc)
        return (
            CaseResult(
                id=case.id,
                kind=case.ub_kind,
                verdict=Verdict.FAILED.value,
                acceptability=False,
                baseline_errors=0,
                final_errors=0,
                thoughts=0,
                rollbacks=0,
                tokens=0,
                seconds_kb=None,
                seconds_plain=None,
                note=f"{type(exc).__name__}: {exc}",
            ),
            [],
            [],
            recorded,
        )
    result = CaseResult(
        id=case.id,
        kind=case.ub_kind,
        verdict=outcome.verdict.value,
        acceptability=triplet.acceptability,
        baseline_errors=outcome.trace.counts[0],
        final_errors=outcome.final_errors,
        thoughts=len(outcome.trace.thoughts),
        rollbacks=outcome.stats.rollback_count,
        tokens=tokens,
        seconds_kb=seconds_kb,
        seconds_plain=seconds_plain,
    )
    return result, new_kb, new_exp, recorded


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        cases = load_manifest(args.manifest)
        _provider_config(args).validate()
    except (StorageFailure, ProviderFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    clock = _make_clock(args.fixed_clock)
    kb = None if args.no_kb else KnowledgeBase(args.kb, clock=clock)
    engine = FeedbackEngine(args.experience, kb=kb, clock=clock)
    initial_kb = list(kb.entries) if kb else []
    initial_exp = list(engine.records)
    jobs = args.jobs or min(JOBS_CAP, os.cpu_count() or 1)
    results: list[CaseResult] = []
    pending: dict[str, tuple[list, list]] = {}
    transcripts: dict[str, list] = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {
            pool.submit(_bench_case, case, args, initial_kb, initial_exp): case
            for case in cases
        }
        for future in concurrent.futures.as_completed(futures):
            case = futures[future]
            row, new_kb, new_exp, recorded = future.result()
            results.append(row)
            pending[case.id] = (new_kb, new_exp)
            transcripts[case.id] = recorded
    for cid in sorted(pending):
        new_kb, new_exp = pending[cid]
        if kb is not None:
            for entry in new_kb:
                kb.insert(entry)
        for record in new_exp:
            engine.record_experience(record, solution=None)
    if args.transcript and ProviderMode(args.provider) is not ProviderMode.REPLAY:
        merged: dict[str, object] = {}
        order: list[str] = []
        for cid in sorted(transcripts):
            for entry in transcripts[cid]:
                if entry.hash not in merged:
                    merged[entry.hash] = entry
                    order.append(entry.hash)
        out = Path(args.transcript)
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = out.with_suffix(out.suffix + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            for key in order:
                fh.write(json.dumps(merged[key].to_dict(), sort_keys=True) + "\n")
        tmp.replace(out)
    report = build_report(results)
    print(render_report(report, args.report))
    return 0


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument(
        "--provider",
        choices=[m.value for m in ProviderMode],
        default=ProviderMode.SCRIPTED_MOCK.value,
        help="model backend (default: mock)",
    )
    shared.add_argument("--model", default="gpt-4", help="model name for live/replay hashing")
    shared.add_argument("--temperature", type=float, default=0.5)
    shared.add_argument(
        "--max-iterations",
        type=_positive_int,
        default=5,
        metavar="P",
        help="fix-thought budget per solution",
    )
    shared.add_argument(
        "--solutions", type=_positive_int, default=10, metavar="K", help="candidate solutions to request"
    )
    shared.add_argument("--kb", metavar="PATH", help="knowledge-base JSONL file")
    shared.add_argument(
        "--no-kb", action="store_true", help="disable knowledge lookups and seeding"
    )
    shared.add_argument(
        "--transcript",
        metavar="PATH",
        help="transcript JSONL: read in replay mode, recorded otherwise",
    )
    shared.add_argument("--report", choices=["json", "table"], default="table")
    shared.add_argument(
        "--timeout", type=float, default=120.0, help="detection timeout in seconds"
    )
    shared.add_argument(
        "--detector-cmd",
        metavar="CMD",
        help="detection command line; {file} and {root} placeholders allowed",
    )
    shared.add_argument("--experience", metavar="PATH", help="experience log JSONL file")
    shared.add_argument(
        "--ast-mode",
        choices=[m.value for m in AstMode],
        default=AstMode.LOCAL_PARSER.value,
        help="syntax-tree extraction backend",
    )
    shared.add_argument(
        "--fixed-clock",
        action="store_true",
        help="logical clock for reproducible timing fields",
    )
    parser = argparse.ArgumentParser(
        prog="ubmend", description="Detect and repair undefined behavior in Rust targets."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fix = sub.add_parser("fix", parents=[shared], help="repair one target package")
    fix.add_argument("path", help="Rust file or package directory")
    fix.add_argument(
        "--reference", metavar="DIR", help="reference bundle for the acceptability check"
    )
    fix.set_defaults(func=cmd_fix)
    bench = sub.add_parser("bench", parents=[shared], help="run a dataset manifest")
    bench.add_argument("manifest", help="JSONL manifest: {id, path, ub_kind, reference}")
    bench.add_argument("--jobs", type=_positive_int, metavar="N", help=f"parallel cases (default: min(cpu, {JOBS_CAP}))")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
