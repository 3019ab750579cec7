from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from skillkit.extraction import (
    ExtractionConfig,
    Pattern,
    PatternSet,
    SynthesisStalled,
    analyze_trajectory,
    consolidate,
    extract,
    level_sizes,
    merge_call_count,
    merge_plan,
    synthesize_skills,
)
from skillkit.gateway import ChatResponse, MalformedModelOutput, ScriptedProvider, ToolCall
from skillkit.pool import ExperiencePool, Step, Trajectory
from skillkit.store import SkillBudget, SkillStore

from conftest import FunctionProvider


def simulate_merge(count: int, group_size: int) -> tuple[list[int], int]:
    """Walk the consolidation tree one level at a time, counting real merges.

    Kept deliberately independent of merge_plan: it only chunks a running
    count into consecutive groups and charges for groups of two or more.
    """
    sizes = [count]
    calls = 0
    n = count
    while n > 1:
        groups = [min(group_size, n - start) for start in range(0, n, group_size)]
        calls += sum(1 for g in groups if g >= 2)
        n = len(groups)
        sizes.append(n)
    return sizes, calls


def make_config(**kw) -> ExtractionConfig:
    kw.setdefault("concurrency", 1)
    return ExtractionConfig(**kw)


def make_trajectory(i: int, outcome: bool = True) -> Trajectory:
    return Trajectory(id=f"t{i}", task=f"task {i}", steps=(Step(action="act"),),
                      outcome=outcome, reward=float(outcome))


def pattern_reply(titles: list[str], kind: str = "success") -> ChatResponse:
    doc = {"patterns": [{"pattern": t, "description": f"{t} description", "type": kind}
                        for t in titles],
           "summary": "observed patterns"}
    return ChatResponse(text=json.dumps(doc))


# --- merge arithmetic ---------------------------------------------------------

def test_single_set_needs_no_levels():
    assert merge_plan(1, 10) == []
    assert level_sizes(1, 10) == [1]
    assert merge_call_count(1, 10) == 0


def test_twenty_sets_at_group_ten():
    assert merge_plan(20, 10) == [[10, 10], [2]]
    assert level_sizes(20, 10) == [20, 2, 1]
    assert merge_call_count(20, 10) == 3


def test_twenty_five_sets_costs_four_calls():
    assert level_sizes(25, 10) == [25, 3, 1]
    assert merge_call_count(25, 10) == 4


def test_hundred_sets_costs_eleven_calls():
    assert level_sizes(100, 10) == [100, 10, 1]
    assert merge_call_count(100, 10) == 11


def test_trailing_singleton_passes_through_free():
    # 11 -> groups [10, 1]: the lone set is carried, not merged, so level
    # one costs a single call and the final pairing costs one more.
    assert merge_plan(11, 10) == [[10, 1], [2]]
    assert merge_call_count(11, 10) == 2


def test_plan_rejects_degenerate_arguments():
    with pytest.raises(ValueError):
        merge_plan(0, 10)
    with pytest.raises(ValueError):
        merge_plan(5, 1)


@given(st.integers(min_value=1, max_value=200), st.integers(min_value=2, max_value=16))
def test_plan_matches_brute_force_simulator(count, group_size):
    sizes, calls = simulate_merge(count, group_size)
    assert level_sizes(count, group_size) == sizes
    assert merge_call_count(count, group_size) == calls


@given(st.integers(min_value=2, max_value=200), st.integers(min_value=2, max_value=16))
def test_every_level_shrinks(count, group_size):
    sizes = level_sizes(count, group_size)
    assert sizes[-1] == 1
    assert all(a > b for a, b in zip(sizes, sizes[1:]))


# --- analyze_trajectory --------------------------------------------------------

def test_analysis_keeps_first_k_patterns():
    provider = ScriptedProvider([pattern_reply(["p1", "p2", "p3", "p4", "p5"])])
    result = analyze_trajectory(make_trajectory(0), make_config(max_patterns=3), provider)
    assert [p.title for p in result.patterns] == ["p1", "p2", "p3"]
    assert result.source == ("t0",)


def test_analysis_accepts_empty_list():
    provider = ScriptedProvider([ChatResponse(text="[]")])
    result = analyze_trajectory(make_trajectory(0), make_config(), provider)
    assert result.patterns == ()


def test_failure_trajectory_yields_failure_patterns():
    provider = ScriptedProvider([pattern_reply(["trap"], kind="failure")])
    result = analyze_trajectory(make_trajectory(0, outcome=False), make_config(), provider)
    assert result.patterns[0].kind == "failure"


def test_off_polarity_entries_dropped():
    provider = ScriptedProvider([pattern_reply(["mistake"], kind="failure")])
    result = analyze_trajectory(make_trajectory(0, outcome=True), make_config(), provider)
    assert result.patterns == ()


def test_malformed_analysis_reply_reasks_once_then_raises():
    provider = ScriptedProvider([ChatResponse(text="no json here"),
                                 ChatResponse(text="still not json")])
    with pytest.raises(MalformedModelOutput):
        analyze_trajectory(make_trajectory(0), make_config(), provider)
    assert provider.consumed == 2


def test_analysis_recovers_on_reask():
    provider = ScriptedProvider([ChatResponse(text="oops"), pattern_reply(["good"])])
    result = analyze_trajectory(make_trajectory(0), make_config(), provider)
    assert [p.title for p in result.patterns] == ["good"]


def test_guidance_lands_in_analysis_system_prompt():
    provider = ScriptedProvider([pattern_reply(["p"])])
    config = make_config(guidance="Prefer prevention rules over narratives.")
    analyze_trajectory(make_trajectory(0), config, provider)
    assert "Prefer prevention rules over narratives." in provider.requests[0].system


# --- consolidate ----------------------------------------------------------------

def one_set(i: int) -> PatternSet:
    return PatternSet((Pattern("success", f"pattern-{i}", "desc"),), "", (f"t{i}",))


def test_consolidate_single_set_makes_no_calls():
    provider = FunctionProvider(lambda req: (_ for _ in ()).throw(AssertionError("no call")))
    merged = consolidate([one_set(0)], make_config(), provider)
    assert merged == one_set(0)
    assert provider.requests == []


def test_consolidate_eleven_sets_spends_two_calls_at_group_ten():
    replies = iter([pattern_reply([f"merged-{i}"]) for i in range(2)])
    provider = FunctionProvider(lambda req: next(replies))
    merged = consolidate([one_set(i) for i in range(11)], make_config(group_size=10), provider)
    assert len(provider.requests) == 2
    # Final set traces back to every input trajectory.
    assert len(merged.source) == 11


def test_consolidate_preserves_source_order():
    provider = FunctionProvider(lambda req: pattern_reply(["m"]))
    merged = consolidate([one_set(i) for i in range(25)], make_config(group_size=10), provider)
    assert merged.source == tuple(f"t{i}" for i in range(25))
    assert len(provider.requests) == 4


# --- synthesize_skills ------------------------------------------------------------

GOOD_SKILL_ARGS = {
    "name": "act-then-verify",
    "description": "Verify state after each action.",
    "body": "After each action, read the observation before planning the next.",
}


def tool_reply(name: str, arguments: dict) -> ChatResponse:
    return ChatResponse(tool_calls=(ToolCall(name=name, arguments=arguments, id="c1"),))


def final_pattern_set() -> PatternSet:
    return PatternSet((Pattern("success", "verify", "check state"),), "summary", ("t0",))


def test_synthesis_create_then_finish():
    provider = ScriptedProvider([
        tool_reply("create_skill", GOOD_SKILL_ARGS),
        tool_reply("finish", {}),
    ])
    store = synthesize_skills(final_pattern_set(), make_config(), provider)
    assert store.sealed
    assert store.names == ("act-then-verify",)


def test_synthesis_text_only_turns_get_reminder_then_stall():
    config = make_config(synthesis_turn_cap=4)
    provider = ScriptedProvider([ChatResponse(text="thinking...")] * 4)
    with pytest.raises(SynthesisStalled):
        synthesize_skills(final_pattern_set(), config, provider)
    # Every turn after the first must carry the protocol reminder.
    last = provider.requests[-1]
    assert any("tool" in m.content for m in last.messages if m.role == "user")


def test_synthesis_finish_on_empty_store_is_rejected_in_band():
    provider = ScriptedProvider([
        tool_reply("finish", {}),
        tool_reply("create_skill", GOOD_SKILL_ARGS),
        tool_reply("finish", {}),
    ])
    store = synthesize_skills(final_pattern_set(), make_config(), provider)
    assert store.names == ("act-then-verify",)


def test_synthesis_budget_violation_reported_in_band():
    config = make_config(budget=SkillBudget(max_skills=1, max_skill_chars=100))
    long_args = dict(GOOD_SKILL_ARGS, body="x" * 101)
    provider = ScriptedProvider([
        tool_reply("create_skill", long_args),
        tool_reply("create_skill", GOOD_SKILL_ARGS),
        tool_reply("finish", {}),
    ])
    store = synthesize_skills(final_pattern_set(), config, provider)
    assert store.names == ("act-then-verify",)
    tool_results = [m.content for r in provider.requests for m in r.messages if m.role == "tool"]
    assert any("Shorten and retry" in text for text in tool_results)


def test_synthesis_turn_cap_with_skills_seals_anyway():
    config = make_config(synthesis_turn_cap=2)
    provider = ScriptedProvider([
        tool_reply("create_skill", GOOD_SKILL_ARGS),
        ChatResponse(text="still going"),
    ])
    store = synthesize_skills(final_pattern_set(), config, provider)
    assert store.sealed and len(store) == 1


def test_synthesis_requires_empty_unsealed_store():
    primed = SkillStore(SkillBudget(max_skills=2))
    primed.create_skill(
        __import__("skillkit.store", fromlist=["Skill"]).Skill(
            name="old", description="d", body="b", references={}, scripts={}))
    provider = ScriptedProvider([tool_reply("finish", {})])
    with pytest.raises(ValueError):
        synthesize_skills(final_pattern_set(), make_config(), provider, store=primed)


# --- extract (end to end) -----------------------------------------------------------

def test_extract_runs_all_three_stages():
    pool = ExperiencePool(tuple(make_trajectory(i, i % 2 == 0) for i in range(4)))
    script = [pattern_reply(["p"], kind=("success" if i % 2 == 0 else "failure"))
              for i in range(4)]
    script.append(pattern_reply(["merged"]))  # one merge call for 4 sets at G=10
    script.append(tool_reply("create_skill", GOOD_SKILL_ARGS))
    script.append(tool_reply("finish", {}))
    provider = ScriptedProvider(script)
    store = extract(pool, make_config(), provider)
    assert store.sealed and store.names == ("act-then-verify",)
    assert provider.consumed == len(script)


def test_extract_rejects_empty_pool():
    provider = ScriptedProvider([ChatResponse(text="x")])
    with pytest.raises(Exception):
        extract(ExperiencePool(()), make_config(), provider)
