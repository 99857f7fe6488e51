"""Patch application and the three repair agents."""

from __future__ import annotations

import pytest

from ubmend.agents import (
    PatchRecord,
    add_assertion,
    apply_patch,
    build_prompt,
    insert_only_diff,
    modify_semantics,
    revert_patch,
    safe_replace,
)
from ubmend.classifier import CodeFeature, locate_unsafe_regions
from ubmend.detector import TargetPackage, UbKind
from ubmend.errors import (
    AgentFailure,
    NoGuardExpressible,
    NoSafeEquivalent,
    ProviderFailure,
)
from ubmend.fast import AgentKind
from ubmend.provider import ProviderConfig, PromptRecord, ScriptedMockProvider
from ubmend.workspace import WorkingCopy

SOURCE = (
    "fn main() {\n"
    "    let v = vec![1, 2, 3];\n"
    "    let x = unsafe { *v.get_unchecked(0) };\n"
    '    println!("{x}");\n'
    "}\n"
)


def _workspace(tmp_path, source=SOURCE):
    f = tmp_path / "main.rs"
    f.write_text(source)
    return WorkingCopy(TargetPackage.from_path(f))


def _region_feature(source=SOURCE, ub=UbKind.STACK_BORROW):
    region = locate_unsafe_regions(source, "main.rs")[0]
    feature = CodeFeature(
        region=region,
        op_kinds=frozenset(),
        ub_kinds=frozenset({ub}),
        context_summary="",
        ref="main.rs#0",
    )
    return region, feature


def _scripted(response: str) -> ScriptedMockProvider:
    return ScriptedMockProvider(ProviderConfig(), rules=[("", response)])


def test_apply_then_revert_round_trip(tmp_path):
    ws = _workspace(tmp_path)
    region, _ = _region_feature()
    patch = PatchRecord(
        file="main.rs",
        before_span=region.byte_span,
        before_text=region.snippet,
        after_text="v[0]",
        agent=AgentKind.MODIFY_SEMANTICS,
    )
    before = ws.files()
    apply_patch(patch, ws)
    assert "get_unchecked" not in ws.read("main.rs")
    revert_patch(patch, ws)
    assert ws.files() == before


def test_apply_rejects_drifted_region(tmp_path):
    ws = _workspace(tmp_path)
    region, _ = _region_feature()
    patch = PatchRecord(
        file="main.rs",
        before_span=region.byte_span,
        before_text="something else entirely",
        after_text="v[0]",
        agent=AgentKind.MODIFY_SEMANTICS,
    )
    with pytest.raises(AgentFailure):
        apply_patch(patch, ws)


def test_revert_rejects_drifted_region(tmp_path):
    ws = _workspace(tmp_path)
    region, _ = _region_feature()
    patch = PatchRecord(
        file="main.rs",
        before_span=region.byte_span,
        before_text=region.snippet,
        after_text="v[0]",
        agent=AgentKind.MODIFY_SEMANTICS,
    )
    apply_patch(patch, ws)
    ws.write("main.rs", ws.read("main.rs").replace("v[0]", "v[1]"))
    with pytest.raises(AgentFailure):
        revert_patch(patch, ws)


def test_insert_only_diff():
    before = "unsafe {\n    *p\n}"
    with_guard = "unsafe {\n    assert!(!p.is_null());\n    *p\n}"
    assert insert_only_diff(before, with_guard) == ["    assert!(!p.is_null());"]
    assert insert_only_diff(before, before) == []
    rewritten = "unsafe {\n    *q\n}"
    assert insert_only_diff(before, rewritten) is None
    deleted = "unsafe {\n}"
    assert insert_only_diff(before, deleted) is None


def test_build_prompt_carries_snippet_errors_and_knowledge():
    region, feature = _region_feature()
    prompt = build_prompt(AgentKind.SAFE_REPLACE, region, feature, "Instruction: do it")
    assert region.snippet in prompt
    assert "stack_borrow" in prompt
    assert "Instruction: do it" in prompt


def test_safe_replace_happy_path(mock_provider):
    region, feature = _region_feature()
    patch = safe_replace(region, feature, mock_provider)
    assert patch.agent == AgentKind.SAFE_REPLACE
    assert "get_unchecked" not in patch.after_text
    assert patch.before_text == region.snippet


def test_safe_replace_gate_abstains_without_catalogue_match(mock_provider):
    src = "fn main() { let y = unsafe { *p };\n}\n"
    region, feature = _region_feature(src)
    with pytest.raises(NoSafeEquivalent):
        safe_replace(region, feature, mock_provider)
    assert mock_provider.calls == 0


def test_safe_replace_rejects_non_reducing_answer():
    region, feature = _region_feature()
    echo = f"no change\n\n```rust\n{region.snippet}\n```"
    with pytest.raises(NoSafeEquivalent):
        safe_replace(region, feature, _scripted(echo))


def test_safe_replace_provider_abstention():
    region, feature = _region_feature()
    with pytest.raises(NoSafeEquivalent):
        safe_replace(region, feature, _scripted("NO SAFE EQUIVALENT"))


MULTILINE = (
    "fn main() {\n"
    "    let v = vec![1, 2, 3];\n"
    "    let x = unsafe {\n"
    "        *v.get_unchecked(0)\n"
    "    };\n"
    '    println!("{x}");\n'
    "}\n"
)


def test_add_assertion_happy_path():
    region, feature = _region_feature(MULTILINE)
    guarded = region.snippet.replace(
        "unsafe {\n", "unsafe {\n        debug_assert!(!v.is_empty());\n", 1
    )
    patch = add_assertion(region, feature, _scripted(f"guard first\n\n```rust\n{guarded}\n```"))
    inserted = insert_only_diff(patch.before_text, patch.after_text)
    assert inserted and all("debug_assert" in l or not l.strip() for l in inserted)


def test_add_assertion_rejects_rewrites():
    region, feature = _region_feature()
    rewritten = "rewrote instead\n\n```rust\nunsafe { *v.get_unchecked(1) }\n```"
    with pytest.raises(NoGuardExpressible):
        add_assertion(region, feature, _scripted(rewritten))


def test_add_assertion_rejects_non_guard_insertions():
    region, feature = _region_feature()
    sneaky = region.snippet.replace("unsafe {", 'unsafe {\n    launch_missiles();', 1)
    with pytest.raises(NoGuardExpressible):
        add_assertion(region, feature, _scripted(f"x\n\n```rust\n{sneaky}\n```"))


def test_add_assertion_rejects_empty_insertion():
    region, feature = _region_feature()
    with pytest.raises(NoGuardExpressible):
        add_assertion(region, feature, _scripted(f"x\n\n```rust\n{region.snippet}\n```"))


def test_modify_semantics_free_form():
    region, feature = _region_feature()
    patch = modify_semantics(region, feature, _scripted("why\n\n```rust\nv[0]\n```"))
    assert patch.after_text == "v[0]"
    assert patch.rationale == "why"


def test_agents_raise_on_missing_fence():
    region, feature = _region_feature()
    with pytest.raises(ProviderFailure):
        modify_semantics(region, feature, _scripted("no code block here"))
