"""Outcome evaluation and the experience loop.

Every repair is scored as a triplet: did the errors go away (accuracy),
does the program still behave like the reference (acceptability), and what
did it cost (wall seconds plus provider tokens). Accuracy gates
acceptability: an unrepaired program is never acceptable. Triplets feed an
append-only experience log; future candidate solutions are re-ranked by
similarity-weighted past outcomes, and fixes that worked are promoted into
the knowledge base.
"""
from __future__ import annotations

import fcntl
import json
import logging
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Sequence

from .detector import UbKind
from .errors import StorageFailure
from .fast import FIX_AGENTS, Provenance, RepairSolution
from .kb import FeatureVector, KnowledgeBase, KnowledgeEntry, cosine, solution_template

if TYPE_CHECKING:  # pragma: no cover
    from .slow import SessionOutcome

log = logging.getLogger(__name__)

WEIGHT_ACCEPTED = 1.0
WEIGHT_REPAIRED = 0.5
WEIGHT_FAILED = -0.25
BYPASS_SIMILARITY = 0.95

REFERENCE_RUN_TIMEOUT = 30.0


@dataclass
class EvalTriplet:
    """accuracy: errors eliminated; acceptability: reference behaviour kept
    (None when it could not be checked); overhead: seconds and tokens spent."""

    accuracy: bool
    acceptability: bool | None
    overhead_seconds: float
    overhead_tokens: int

    def __post_init__(self) -> None:
        if not self.accuracy:
            # a failed repair cannot be acceptable, whatever the run said
            self.acceptability = False

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "acceptability": self.acceptability,
            "overhead_seconds": self.overhead_seconds,
            "overhead_tokens": self.overhead_tokens,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalTriplet":
        return cls(
            accuracy=bool(data["accuracy"]),
            acceptability=data["acceptability"],
            overhead_seconds=float(data["overhead_seconds"]),
            overhead_tokens=int(data["overhead_tokens"]),
        )


class ReferenceExecutionFailure(Exception):
    """The acceptability check itself failed; the verdict is unknown."""


@dataclass
class ReferenceBundle:
    """Ground truth for acceptability: the bytes the program must print,
    the exit status it must report, and an optional extra test command."""

    expected_stdout: bytes
    expected_exit: int = 0
    tests_cmd: str | None = None

    @classmethod
    def from_dir(cls, path: Path | str) -> "ReferenceBundle":
        root = Path(path)
        stdout_file = root / "expected_stdout.txt"
        if not stdout_file.is_file():
            raise StorageFailure(f"reference bundle missing expected_stdout.txt: {root}")
        exit_file = root / "expected_exit.txt"
        expected_exit = int(exit_file.read_text().strip()) if exit_file.is_file() else 0
        tests_file = root / "tests.cmd"
        tests_cmd = tests_file.read_text().strip() if tests_file.is_file() else None
        return cls(expected_stdout=stdout_file.read_bytes(), expected_exit=expected_exit, tests_cmd=tests_cmd)

    def check(self, final_source: dict[str, str], entry_file: str, rustc: str = "rustc") -> bool:
        """Compile and run the repaired program, compare behaviour byte-exact.

        Raises ReferenceExecutionFailure when the check cannot produce a
        verdict (compile failure, missing toolchain, run timeout).
        """
        with tempfile.TemporaryDirectory(prefix="ubmend-ref-") as tmp:
            root = Path(tmp)
            for rel, text in final_source.items():
                dest = root / rel
                dest.parent.mkdir(parents=True, exist_ok=True)
                dest.write_text(text, encoding="utf-8")
            binary = root / "candidate"
            try:
                compiled = subprocess.run(
                    [rustc, "--edition=2021", entry_file, "-o", str(binary)],
                    cwd=root,
                    capture_output=True,
                    timeout=REFERENCE_RUN_TIMEOUT,
                )
            except (FileNotFoundError, subprocess.TimeoutExpired) as exc:
                raise ReferenceExecutionFailure(f"compiler unavailable: {exc}") from exc
            if compiled.returncode != 0:
                raise ReferenceExecutionFailure(
                    "repaired program does not compile: " + compiled.stderr.decode(errors="replace")[:400]
                )
            try:
                run = subprocess.run(
                    [str(binary)], cwd=root, capture_output=True, timeout=REFERENCE_RUN_TIMEOUT
                )
            except subprocess.TimeoutExpired as exc:
                raise ReferenceExecutionFailure("repaired program timed out") from exc
            if run.returncode != self.expected_exit or run.stdout != self.expected_stdout:
                return False
            if self.tests_cmd:
                try:
                    tests = subprocess.run(
                        self.tests_cmd.replace("{prog}", str(binary)),
                        shell=True,
                        cwd=root,
                        capture_output=True,
                        timeout=REFERENCE_RUN_TIMEOUT,
                    )
                except subprocess.TimeoutExpired as exc:
                    raise ReferenceExecutionFailure("reference tests timed out") from exc
                return tests.returncode == 0
            return True


def signature_of(solution: RepairSolution) -> tuple[tuple[str, str], ...]:
    """Shape of a solution with region refs abstracted away.

    Two plans that apply the same agents with the same instructions count as
    the same experience even when aimed at different files.
    """
    return tuple(
        (step.agent.value, " ".join(step.instruction.split()).lower())
        for step in solution.steps
        if step.agent in FIX_AGENTS
    )


@dataclass
class ExperienceRecord:
    feature_vector: FeatureVector
    ub_kind: UbKind
    solution_id: str
    triplet: EvalTriplet
    solution_signature: tuple[tuple[str, str], ...]

    def to_dict(self) -> dict:
        return {
            "feature_vector": self.feature_vector.to_list(),
            "ub_kind": self.ub_kind.value,
            "solution_id": self.solution_id,
            "triplet": self.triplet.to_dict(),
            "solution_signature": [list(pair) for pair in self.solution_signature],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperienceRecord":
        return cls(
            feature_vector=FeatureVector.from_list(data["feature_vector"]),
            ub_kind=UbKind(data["ub_kind"]),
            solution_id=str(data["solution_id"]),
            triplet=EvalTriplet.from_dict(data["triplet"]),
            solution_signature=tuple(
                (str(agent), str(instr)) for agent, instr in data["solution_signature"]
            ),
        )


class FeedbackEngine:
    """Evaluate outcomes, remember them, and bias future ranking.

    Weights: acceptability-confirmed repairs pull hardest, bare repairs
    half as hard, failures push away a quarter as hard. A candidate scores
    the max similarity-times-weight over records sharing its signature;
    unseen candidates score 0 and keep their original order (the sort is
    stable).
    """

    def __init__(
        self,
        log_path: Path | str | None = None,
        kb: KnowledgeBase | None = None,
        weights: tuple[float, float, float] = (WEIGHT_ACCEPTED, WEIGHT_REPAIRED, WEIGHT_FAILED),
        clock: Callable[[], float] = time.time,
    ) -> None:
        self.log_path = Path(log_path) if log_path else None
        self.kb = kb
        self.weights = weights
        self.clock = clock
        self.records: list[ExperienceRecord] = []
        if self.log_path and self.log_path.exists():
            self._load()

    def _load(self) -> None:
        for ln, line in enumerate(self.log_path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                self.records.append(ExperienceRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise StorageFailure(f"{self.log_path}:{ln}: bad experience record: {exc}") from exc

    def evaluate(
        self,
        outcome: "SessionOutcome",
        reference: ReferenceBundle | None,
        entry_file: str,
        overhead_seconds: float,
        overhead_tokens: int,
        rustc: str = "rustc",
    ) -> EvalTriplet:
        from .slow import Verdict

        accuracy = outcome.verdict in (Verdict.PASS, Verdict.SEMANTIC_PASS)
        acceptability: bool | None = None
        if accuracy and reference is not None:
            try:
                acceptability = reference.check(outcome.final_source, entry_file, rustc=rustc)
            except ReferenceExecutionFailure as exc:
                log.warning("acceptability unknown: %s", exc)
                acceptability = None
        return EvalTriplet(
            accuracy=accuracy,
            acceptability=acceptability,
            overhead_seconds=overhead_seconds,
            overhead_tokens=overhead_tokens,
        )

    def record_experience(
        self,
        record: ExperienceRecord,
        solution: RepairSolution | None = None,
    ) -> None:
        """Append to the log; successful repairs also enter the knowledge base."""
        self.records.append(record)
        if self.log_path is not None:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            line = json.dumps(record.to_dict(), sort_keys=True)
            with open(self.log_path, "a", encoding="utf-8") as handle:
                fcntl.flock(handle, fcntl.LOCK_EX)
                try:
                    handle.write(line + "\n")
                finally:
                    fcntl.flock(handle, fcntl.LOCK_UN)
        if (
            record.triplet.accuracy
            and self.kb is not None
            and solution is not None
            and not record.feature_vector.is_zero
        ):
            self.kb.insert(
                KnowledgeEntry(
                    vector=record.feature_vector,
                    ub_kind=record.ub_kind,
                    solution=solution_template(solution.to_dict()),
                    triplet=record.triplet,
                )
            )

    def _weight(self, triplet: EvalTriplet) -> float:
        accepted, repaired, failed = self.weights
        if triplet.accuracy and triplet.acceptability:
            return accepted
        if triplet.accuracy:
            return repaired
        return failed

    def rank_solutions(
        self,
        candidates: Sequence[RepairSolution],
        feature_vector: FeatureVector,
    ) -> list[RepairSolution]:
        """Stable re-rank by experience score, highest first."""
        if not self.records or feature_vector.is_zero:
            return list(candidates)
        scored: list[tuple[float, RepairSolution]] = []
        for candidate in candidates:
            signature = signature_of(candidate)
            best: float | None = None
            for record in self.records:
                if record.solution_signature != signature:
                    continue
                if record.feature_vector.is_zero:
                    continue
                value = cosine(feature_vector, record.feature_vector) * self._weight(record.triplet)
                if best is None or value > best:
                    best = value
            if best is not None and best != 0.0:
                candidate.provenance = Provenance.FEEDBACK_RANKED
            scored.append((best if best is not None else 0.0, candidate))
        scored.sort(key=lambda pair: -pair[0])
        return [candidate for _, candidate in scored]

    def best_hit(
        self, feature_vector: FeatureVector, threshold: float = BYPASS_SIMILARITY
    ) -> tuple[float, ExperienceRecord] | None:
        """Closest successful past repair at or above the threshold, if any."""
        if feature_vector.is_zero:
            return None
        best: tuple[float, ExperienceRecord] | None = None
        for record in self.records:
            if not record.triplet.accuracy or record.feature_vector.is_zero:
                continue
            sim = cosine(feature_vector, record.feature_vector)
            if sim >= threshold and (best is None or sim > best[0]):
                best = (sim, record)
        return best
