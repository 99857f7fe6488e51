"""Command-line surface: exit codes, report formats, interval math, manifests."""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from conftest import CORPUS_DIR, STUB_DETECTOR_ARG, copy_fixture
from ubmend.cli import compute_ci, load_manifest, main

needs_rustc = pytest.mark.skipif(shutil.which("rustc") is None, reason="rustc not installed")

CLEAN_SOURCE = 'fn main() {\n    println!("ok");\n}\n'

UB_INSIDE_AND_OUT = (
    "fn main() {\n"
    "    let mut value = 3i32;\n"
    "    let alias = &mut value as *mut i32;\n"
    "    unsafe {\n"
    "        //~UB Undefined Behavior: trying to retag from <90> for Unique permission\n"
    "        let _ = *alias;\n"
    "    }\n"
    "    // the detector flags this line too, but it sits outside any\n"
    "    // rewritable region, so no agent can remove it\n"
    "    //~UB Undefined Behavior: trying to retag from <91> for Unique permission\n"
    "}\n"
)


def _base_args(*extra: str) -> list[str]:
    return ["--detector-cmd", STUB_DETECTOR_ARG, "--fixed-clock", *extra]


def _fix(path: Path, *extra: str) -> list[str]:
    return ["fix", str(path), *_base_args(*extra)]


def _bench(manifest: Path, *extra: str) -> list[str]:
    return ["bench", str(manifest), *_base_args(*extra)]


def _bench_dir(tmp_path: Path, kinds: list[str], with_refs: bool = False) -> Path:
    base = tmp_path / "bench"
    base.mkdir(exist_ok=True)
    lines = []
    for i, kind in enumerate(kinds, 1):
        copy_fixture(CORPUS_DIR / kind, base)
        entry = {"id": f"b{i:02d}", "path": f"{kind}/main.rs", "ub_kind": kind}
        if with_refs and (CORPUS_DIR / "refs" / kind).is_dir():
            copy_fixture(CORPUS_DIR / "refs" / kind, base / "refs")
            entry["reference"] = f"refs/{kind}"
        lines.append(json.dumps(entry))
    manifest = base / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def test_compute_ci_matches_frozen_oracle_values():
    # frozen output of an independent numerical root finder
    frozen = {
        (0, 10): (0.0, 0.2775327998628915),
        (10, 10): (0.7224672001371085, 1.0),
        (9, 10): (0.5958499732047615, 0.9821237869049271),
        (8, 10): (0.4901624715366418, 0.9433178485456247),
        (1, 13): (0.013710421242556598, 0.3331395092109959),
    }
    for (s, n), (lo, hi) in frozen.items():
        got_lo, got_hi = compute_ci(s, n, 0.95)
        assert got_lo == pytest.approx(lo, abs=1e-9)
        assert got_hi == pytest.approx(hi, abs=1e-9)


def test_compute_ci_rejects_bad_inputs():
    with pytest.raises(ValueError):
        compute_ci(0, 0)
    with pytest.raises(ValueError):
        compute_ci(-1, 10)
    with pytest.raises(ValueError):
        compute_ci(11, 10)


def test_compute_ci_bounds_are_ordered_and_clamped():
    for s, n in [(0, 1), (1, 1), (3, 7), (25, 40)]:
        lo, hi = compute_ci(s, n)
        assert 0.0 <= lo <= hi <= 1.0


def test_fix_ub_free_file_prints_pass(tmp_path, capsys):
    path = tmp_path / "main.rs"
    path.write_text(CLEAN_SOURCE, encoding="utf-8")
    assert main(_fix(path, "--no-kb")) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "pass"
    assert "errors: 0 -> 0" in out


def test_fix_repairs_corpus_case_and_exits_zero(tmp_path, capsys):
    case = copy_fixture(CORPUS_DIR / "stack_borrow", tmp_path)
    assert main(_fix(case, "--no-kb")) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "pass"
    assert "errors: 1 -> 0" in out
    assert "acceptability: unknown" in out


def test_fix_json_report_shape(tmp_path, capsys):
    case = copy_fixture(CORPUS_DIR / "stack_borrow", tmp_path)
    assert main(_fix(case, "--no-kb", "--report", "json")) == 0
    payload = json.loads(capsys.readouterr().out)
    assert set(payload) == {
        "schema_version",
        "target",
        "verdict",
        "baseline_errors",
        "final_errors",
        "triplet",
        "trace",
        "rollbacks",
        "changed_files",
    }
    assert payload["schema_version"] == 1
    assert payload["verdict"] == "pass"
    assert payload["baseline_errors"] == 1
    assert payload["final_errors"] == 0
    assert payload["triplet"]["accuracy"] is True
    assert payload["triplet"]["acceptability"] is None
    assert payload["changed_files"]


@needs_rustc
def test_fix_with_reference_upgrades_to_semantic_pass(tmp_path, capsys):
    case = copy_fixture(CORPUS_DIR / "stack_borrow", tmp_path)
    ref = copy_fixture(CORPUS_DIR / "refs" / "stack_borrow", tmp_path / "refs")
    code = main(_fix(case, "--no-kb", "--report", "json", "--reference", str(ref)))
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["verdict"] == "semantic_pass"
    assert payload["triplet"]["acceptability"] is True


def test_fix_unfixable_case_exits_one(tmp_path, capsys):
    path = tmp_path / "main.rs"
    path.write_text(UB_INSIDE_AND_OUT, encoding="utf-8")
    assert main(_fix(path, "--no-kb", "--solutions", "2")) == 1
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "failed"
    # the untouchable report survives; the final state is the best seen
    assert "-> 1" in out


def test_fix_bad_temperature_is_usage_error(tmp_path, capsys):
    path = tmp_path / "main.rs"
    path.write_text(CLEAN_SOURCE, encoding="utf-8")
    assert main(_fix(path, "--temperature", "3.0")) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_fix_replay_without_transcript_is_usage_error(tmp_path, capsys):
    path = tmp_path / "main.rs"
    path.write_text(CLEAN_SOURCE, encoding="utf-8")
    assert main(_fix(path, "--provider", "replay")) == 2
    assert "transcript" in capsys.readouterr().err


def test_fix_missing_target_is_usage_error(tmp_path, capsys):
    assert main(_fix(tmp_path / "absent.rs")) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_fix_missing_detector_tool_is_usage_error(tmp_path, capsys):
    path = tmp_path / "main.rs"
    path.write_text(UB_INSIDE_AND_OUT, encoding="utf-8")
    args = ["fix", str(path), "--detector-cmd", "no-such-detector-binary {file}", "--fixed-clock"]
    assert main(args) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_fix_record_then_replay_reproduces_report(tmp_path, capsys):
    case = copy_fixture(CORPUS_DIR / "stack_borrow", tmp_path)
    transcript = tmp_path / "t.jsonl"
    assert (
        main(_fix(case, "--no-kb", "--report", "json", "--transcript", str(transcript))) == 0
    )
    recorded = capsys.readouterr().out
    assert transcript.is_file()
    code = main(
        _fix(
            case,
            "--no-kb",
            "--report",
            "json",
            "--provider",
            "replay",
            "--transcript",
            str(transcript),
        )
    )
    assert code == 0
    assert capsys.readouterr().out == recorded


def test_nonpositive_count_flags_are_rejected(tmp_path):
    path = tmp_path / "main.rs"
    path.write_text(CLEAN_SOURCE, encoding="utf-8")
    for flag in ("--solutions", "--max-iterations"):
        with pytest.raises(SystemExit) as exc:
            main(_fix(path, flag, "0"))
        assert exc.value.code == 2


def test_bench_small_manifest_json_report(tmp_path, capsys):
    manifest = _bench_dir(tmp_path, ["stack_borrow", "unaligned_pointer"])
    before = (manifest.parent / "stack_borrow" / "main.rs").read_bytes()
    assert main(_bench(manifest, "--report", "json")) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["schema_version"] == 1
    assert [c["id"] for c in payload["cases"]] == ["b01", "b02"]
    assert payload["totals"]["cases"] == 2
    assert payload["pass_rate"] == 1.0
    assert payload["ci_95"]["pass_rate"][0] == pytest.approx(0.3423802275066531, abs=1e-9)
    # repairs run on working copies; the corpus files stay untouched
    assert (manifest.parent / "stack_borrow" / "main.rs").read_bytes() == before


def test_bench_table_report_summarizes_rates(tmp_path, capsys):
    manifest = _bench_dir(tmp_path, ["stack_borrow"])
    assert main(_bench(manifest, "--report", "table", "--no-kb")) == 0
    out = capsys.readouterr().out
    assert "pass_rate: 1/1" in out
    assert "exec_rate: 0/1" in out
    assert "b01" in out


def test_bench_jobs_flag_does_not_change_output(tmp_path, capsys):
    manifest = _bench_dir(tmp_path, ["stack_borrow", "unaligned_pointer"])
    assert main(_bench(manifest, "--report", "json", "--jobs", "1")) == 0
    serial = capsys.readouterr().out
    assert main(_bench(manifest, "--report", "json", "--jobs", "2")) == 0
    assert capsys.readouterr().out == serial


def test_bench_duplicate_case_id_is_usage_error(tmp_path, capsys):
    case = tmp_path / "main.rs"
    case.write_text(CLEAN_SOURCE, encoding="utf-8")
    manifest = tmp_path / "m.jsonl"
    line = json.dumps({"id": "dup", "path": "main.rs", "ub_kind": "unknown"})
    manifest.write_text(line + "\n" + line + "\n", encoding="utf-8")
    assert main(_bench(manifest)) == 2
    assert "duplicate case id" in capsys.readouterr().err


def test_bench_missing_case_path_is_usage_error(tmp_path, capsys):
    manifest = tmp_path / "m.jsonl"
    manifest.write_text(
        json.dumps({"id": "x", "path": "absent.rs", "ub_kind": "unknown"}) + "\n",
        encoding="utf-8",
    )
    assert main(_bench(manifest)) == 2
    assert "does not exist" in capsys.readouterr().err


def test_bench_empty_manifest_is_usage_error(tmp_path, capsys):
    manifest = tmp_path / "m.jsonl"
    manifest.write_text("\n\n", encoding="utf-8")
    assert main(_bench(manifest)) == 2
    assert "empty manifest" in capsys.readouterr().err


def test_bench_malformed_manifest_line_is_usage_error(tmp_path, capsys):
    manifest = tmp_path / "m.jsonl"
    manifest.write_text("{not json\n", encoding="utf-8")
    assert main(_bench(manifest)) == 2
    assert "bad manifest line" in capsys.readouterr().err


def test_bench_missing_manifest_file_is_usage_error(tmp_path, capsys):
    assert main(_bench(tmp_path / "absent.jsonl")) == 2
    assert "no such manifest" in capsys.readouterr().err


def test_load_manifest_resolves_paths_relative_to_manifest(tmp_path):
    sub = tmp_path / "nested"
    sub.mkdir()
    (sub / "case.rs").write_text(CLEAN_SOURCE, encoding="utf-8")
    manifest = sub / "m.jsonl"
    manifest.write_text(
        json.dumps({"id": "c", "path": "case.rs", "ub_kind": "validity"}) + "\n",
        encoding="utf-8",
    )
    cases = load_manifest(manifest)
    assert cases[0].path == sub / "case.rs"
    assert cases[0].ub_kind == "validity"
    assert cases[0].reference is None
