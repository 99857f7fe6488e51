"""Shared fixtures: stub detector wiring and provider factories."""

from __future__ import annotations

import shlex
import shutil
import sys
from pathlib import Path

import pytest

from ubmend.detector import DetectorConfig
from ubmend.provider import ProviderConfig, ProviderMode, ScriptedMockProvider

TESTS_DIR = Path(__file__).parent
TOOLS_DIR = TESTS_DIR / "tools"
FIXTURES_DIR = TESTS_DIR / "fixtures"
CORPUS_DIR = FIXTURES_DIR / "corpus"
SEQUENCES_DIR = FIXTURES_DIR / "sequences"

STUB_DETECTOR = (sys.executable, str(TOOLS_DIR / "fake_miri.py"), "{file}")
STUB_DETECTOR_ARG = shlex.join(STUB_DETECTOR)


def stub_detector_config(timeout: float = 30.0) -> DetectorConfig:
    return DetectorConfig(command=STUB_DETECTOR, timeout=timeout)


@pytest.fixture
def detector_config() -> DetectorConfig:
    return stub_detector_config()


@pytest.fixture
def mock_provider() -> ScriptedMockProvider:
    return ScriptedMockProvider(ProviderConfig(mode=ProviderMode.SCRIPTED_MOCK))


@pytest.fixture
def make_target(tmp_path: Path):
    """Write a single-file target into the test tmpdir."""

    def _make(source: str, name: str = "main.rs") -> Path:
        path = tmp_path / name
        path.write_text(source, encoding="utf-8")
        return path

    return _make


def copy_fixture(src: Path, dest_dir: Path) -> Path:
    """Copy a fixture file or tree under dest_dir, returning the copy."""
    dest_dir.mkdir(parents=True, exist_ok=True)
    target = dest_dir / src.name
    if src.is_file():
        shutil.copy2(src, target)
    else:
        shutil.copytree(src, target)
    return target
