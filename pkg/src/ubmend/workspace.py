"""Isolated working copies: every patch and detection run happens here."""
from __future__ import annotations

import shutil
import tempfile
from pathlib import Path

from .detector import TargetPackage

_TRACKED_EXTRA = ("Cargo.toml", "Cargo.lock")


class WorkingCopy:
    """A private copy of a target's sources under a session directory."""

    def __init__(self, target: TargetPackage, session_dir: Path | str | None = None) -> None:
        base = Path(session_dir) if session_dir else Path(tempfile.mkdtemp(prefix="ubmend-"))
        self.root = base / "work"
        self.root.mkdir(parents=True, exist_ok=True)
        self.session_dir = base
        for rel in _tracked_files(target):
            dest = self.root / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(target.root_path / rel, dest)
        self.target = TargetPackage(
            root_path=self.root,
            entry_files=list(target.entry_files),
            token_budget=target.token_budget,
        )

    def read(self, rel: str) -> str:
        return (self.root / rel).read_text(encoding="utf-8")

    def write(self, rel: str, text: str) -> None:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")

    def files(self) -> dict[str, str]:
        """Current content of every tracked source, keyed by relative path."""
        out: dict[str, str] = {}
        for path in sorted(self.root.rglob("*")):
            if path.is_file():
                rel = str(path.relative_to(self.root))
                out[rel] = path.read_text(encoding="utf-8")
        return out

    def restore(self, files: dict[str, str]) -> None:
        for rel, text in files.items():
            self.write(rel, text)
        for path in list(self.root.rglob("*")):
            if path.is_file() and str(path.relative_to(self.root)) not in files:
                path.unlink()


def _tracked_files(target: TargetPackage) -> list[str]:
    tracked = list(target.entry_files)
    root = target.root_path
    for pattern in _TRACKED_EXTRA:
        if (root / pattern).is_file():
            tracked.append(pattern)
    for path in root.rglob("*.rs"):
        rel = str(path.relative_to(root))
        if "target" not in path.relative_to(root).parts and rel not in tracked:
            tracked.append(rel)
    return tracked
