"""Run the full extraction pipeline against a canned model script.

Builds a six-trajectory experience pool in memory, walks it through
per-trajectory analysis, hierarchical merge, and tool-driven synthesis
using a scripted provider, then prints the consolidation plan and the
injection-ready skill document. No network access involved.

Usage:
    python3 scripts/run_scripted_extraction.py
"""

from __future__ import annotations

import json

from skillkit.config import AppConfig, extraction_config
from skillkit.extraction import extract, merge_call_count, merge_plan
from skillkit.gateway import ChatResponse, ScriptedProvider, ToolCall
from skillkit.injection import render_single
from skillkit.pool import ExperiencePool, Step, Trajectory

TASKS = (
    ("fill the Q3 revenue column", True),
    ("dedupe the supplier sheet", True),
    ("fix the broken VLOOKUP range", False),
    ("sum hours per project", True),
    ("merge two inventory tabs", False),
    ("normalize the date column", True),
)


def demo_pool() -> ExperiencePool:
    trajectories = []
    for i, (task, won) in enumerate(TASKS):
        steps = (
            Step(action=f"open_sheet('{task.split()[-1]}')",
                 observation="sheet loaded"),
            Step(action="apply_edit(range)",
                 observation="ok" if won else "wrong range"),
        )
        trajectories.append(Trajectory(
            id=f"demo-{i}", task=task, steps=steps,
            outcome=won, reward=1.0 if won else 0.0,
            domain="spreadsheet", target_model="demo-agent"))
    return ExperiencePool(tuple(trajectories))


def analysis_reply(won: bool) -> ChatResponse:
    kind = "success" if won else "failure"
    pattern = ("re-read the target range before editing" if won
               else "assumed the range instead of checking it")
    return ChatResponse(text=json.dumps({
        "patterns": [{"pattern": pattern,
                      "description": f"recurring {kind} behaviour",
                      "type": kind}],
        "summary": f"one {kind} pattern"}))


def demo_script() -> list[ChatResponse]:
    entries = [analysis_reply(won) for _, won in TASKS]
    entries.append(ChatResponse(text=json.dumps({
        "patterns": [
            {"pattern": "verify the cell range against the task before editing",
             "description": "successful runs re-check coordinates; failed runs "
                            "assume them",
             "type": "success"},
            {"pattern": "never reuse row offsets across sheets",
             "description": "offset reuse caused both failures",
             "type": "failure"},
        ],
        "summary": "verification beats assumption"})))
    entries.append(ChatResponse(tool_calls=(ToolCall(
        name="create_skill",
        arguments={
            "name": "range-verification-first",
            "description": "Confirm the exact target range before any edit.",
            "body": "Re-read the task statement and the sheet header before "
                    "writing. If an edit fails verification, re-derive the "
                    "range from scratch instead of shifting offsets.",
        },
        id="demo-create"),)))
    entries.append(ChatResponse(tool_calls=(ToolCall(
        name="finish", arguments={}, id="demo-finish"),)))
    return entries


def main() -> int:
    pool = demo_pool()
    config = extraction_config(AppConfig(), "scripted-demo")
    count = len(pool.trajectories)
    print(f"pool: {count} trajectories "
          f"({len(pool.successes)} success, {len(pool.failures)} failure)")
    plan = merge_plan(count, config.group_size)
    print(f"merge plan: {plan} -> {merge_call_count(count, config.group_size)} "
          f"merge call(s)")

    provider = ScriptedProvider(demo_script())
    store = extract(pool, config, provider)
    print(f"model calls consumed: {provider.consumed}")
    print(f"store sealed: {store.sealed}, skills: {list(store.names)}")
    print()
    print(render_single(store.skills[0]))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
