"""Snapshot store and adaptive rollback-target selection.

Snapshots hold full file contents (targets are token-bounded, so cheap and
simple beats deltas) and are additionally persisted under the session
directory as ``snapshots/<index>/`` for post-mortems. Snapshot index i is
position i in the session's error-count sequence: 0 is the pre-repair
baseline, i >= 1 is the state after fix thought i.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from .errors import StorageFailure

if TYPE_CHECKING:  # pragma: no cover
    from .workspace import WorkingCopy


@dataclass
class Snapshot:
    index: int
    files: dict[str, str]
    error_count: int


@dataclass
class RollbackStats:
    """Bookkeeping for rollback overhead.

    ``thoughts_since_snapshot`` counts fix thoughts executed since the most
    recent restore (or session start); ``discarded_thoughts`` accumulates
    (current index - restored index) per rollback, the work a rollback
    throws away.
    """

    rollback_count: int = 0
    thoughts_since_snapshot: int = 0
    discarded_thoughts: int = 0

    def to_dict(self) -> dict:
        return {
            "rollback_count": self.rollback_count,
            "thoughts_since_snapshot": self.thoughts_since_snapshot,
            "discarded_thoughts": self.discarded_thoughts,
        }


def argmin_rollback_target(counts: Sequence[int]) -> int:
    """Index of the minimum error count; ties go to the highest index."""
    if not counts:
        raise StorageFailure("no snapshots recorded")
    best = 0
    for i, value in enumerate(counts):
        if value <= counts[best]:
            best = i
    return best


class SnapshotStore:
    def __init__(self, session_dir: Path | str | None = None) -> None:
        self.snapshots: dict[int, Snapshot] = {}
        self.stats = RollbackStats()
        self._dir = Path(session_dir) / "snapshots" if session_dir else None

    def record(self, index: int, files: dict[str, str], error_count: int) -> Snapshot:
        if index in self.snapshots:
            raise StorageFailure(f"snapshot index {index} already recorded")
        if error_count < 0:
            raise StorageFailure("error_count must be non-negative")
        snap = Snapshot(index=index, files=dict(files), error_count=error_count)
        self.snapshots[index] = snap
        if self._dir is not None:
            base = self._dir / str(index)
            for rel, text in snap.files.items():
                dest = base / rel
                dest.parent.mkdir(parents=True, exist_ok=True)
                dest.write_text(text, encoding="utf-8")
        return snap

    def note_thought(self) -> None:
        self.stats.thoughts_since_snapshot += 1

    def latest_index(self) -> int:
        if not self.snapshots:
            raise StorageFailure("no snapshots recorded")
        return max(self.snapshots)

    def select_rollback_target(self) -> int:
        """Argmin error count over recorded snapshots, newest tie wins."""
        if not self.snapshots:
            raise StorageFailure("no snapshots recorded")
        ordered = [self.snapshots[i].error_count for i in sorted(self.snapshots)]
        return sorted(self.snapshots)[argmin_rollback_target(ordered)]

    def restore(self, index: int, workspace: "WorkingCopy") -> Snapshot:
        """Write snapshot ``index`` back into the working copy, byte-exact."""
        try:
            snap = self.snapshots[index]
        except KeyError:
            raise StorageFailure(f"no snapshot with index {index}") from None
        workspace.restore(snap.files)
        current = self.latest_index()
        self.stats.rollback_count += 1
        self.stats.discarded_thoughts += current - index
        self.stats.thoughts_since_snapshot = 0
        return snap
