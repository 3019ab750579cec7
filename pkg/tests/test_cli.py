from __future__ import annotations

import json

import pytest

from skillkit.cli import main
from skillkit.injection import render_single
from skillkit.judge import SkillPair, SkillResult, load_rubric, load_verdicts, save_pairs
from skillkit.metrics import RunRecord, save_run_records
from skillkit.pool import Step, Trajectory, save_trajectories
from skillkit.store import Skill, load_skills, save_skills

# --- scaffolding ----------------------------------------------------------------


def write_config(tmp_path, script_entries, *, seed=0, record_to=None,
                 judge=None, extraction=None):
    (tmp_path / "script.json").write_text(json.dumps(script_entries))
    lines = ["providers:", "  model:", "    kind: scripted", "    script: script.json"]
    if record_to:
        lines.append(f"    record_to: {record_to}")
    lines.append(f"seed: {seed}")
    for section, values in (("judge", judge), ("extraction", extraction)):
        if values:
            lines.append(f"{section}:")
            lines.extend(f"  {key}: {value}" for key, value in values.items())
    path = tmp_path / "config.yaml"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def make_trajectory(index: int, outcome: bool) -> Trajectory:
    return Trajectory(
        id=f"t{index}",
        task=f"task {index}",
        steps=(Step(action="inspect(sheet)", observation="3 columns"),),
        outcome=outcome,
        reward=1.0 if outcome else 0.0,
        domain="spreadsheet",
        target_model="agent-small",
    )


def write_pool(tmp_path, n_success: int, n_failure: int) -> str:
    outcomes = [True] * n_success + [False] * n_failure
    # Alternate outcomes so pool order is not a give-away for polarity bugs.
    outcomes.sort(key=lambda _: 0)
    trajectories = []
    flags = ([True, False] * max(n_success, n_failure))
    taken_s = taken_f = 0
    for index, flag in enumerate(flags):
        if flag and taken_s < n_success:
            trajectories.append(make_trajectory(index, True))
            taken_s += 1
        elif not flag and taken_f < n_failure:
            trajectories.append(make_trajectory(index, False))
            taken_f += 1
        if taken_s == n_success and taken_f == n_failure:
            break
    path = tmp_path / "pool.jsonl"
    save_trajectories(path, trajectories)
    return str(path)


def analysis_reply(kind: str):
    return {"text": json.dumps({
        "patterns": [{
            "pattern": f"pattern from a {kind} run",
            "description": "observed across the trajectory",
            "type": kind,
        }],
        "summary": "one recurring behaviour",
    })}


def merge_reply():
    return {"text": json.dumps({
        "patterns": [{
            "pattern": "verify the sheet before editing",
            "description": "survivors of the merge",
            "type": "success",
        }],
        "summary": "merged",
    })}


def synthesis_replies(name="verify-before-commit"):
    return [
        {"tool_calls": [{"name": "create_skill", "arguments": {
            "name": name,
            "description": "Check target state before each mutating action.",
            "body": "Read the target range first. Apply the edit. Re-read to confirm.",
        }}]},
        {"tool_calls": [{"name": "finish", "arguments": {}}]},
    ]


def extraction_script(outcomes):
    script = [analysis_reply("success" if flag else "failure") for flag in outcomes]
    script.append(merge_reply())
    script.extend(synthesis_replies())
    return script


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# --- extract --------------------------------------------------------------------


def test_extract_end_to_end(tmp_path, capsys):
    pool = write_pool(tmp_path, 2, 2)
    config = write_config(tmp_path, extraction_script([True, False, True, False]))
    out = tmp_path / "skills.json"
    code, stdout, _ = run(capsys, [
        "extract", "--config", config, "--pool", pool,
        "--provider", "model", "--out", str(out)])
    assert code == 0
    assert "pool: 4 trajectories, 2 success / 2 failure" in stdout
    assert "consolidation levels: 1, merge calls: 1" in stdout
    assert "skill: verify-before-commit" in stdout
    assert f"wrote {out}" in stdout
    skills = load_skills(out)
    assert [s.name for s in skills] == ["verify-before-commit"]


def test_extract_output_is_deterministic(tmp_path, capsys):
    pool = write_pool(tmp_path, 2, 2)
    config = write_config(tmp_path, extraction_script([True, False, True, False]))
    args = ["extract", "--config", config, "--pool", pool, "--provider", "model"]
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    assert run(capsys, args + ["--out", str(first)])[0] == 0
    assert run(capsys, args + ["--out", str(second)])[0] == 0
    assert first.read_bytes() == second.read_bytes()


def test_extract_subsample_summary(tmp_path, capsys):
    pool = write_pool(tmp_path, 8, 8)
    # Polarity of the analysis replies does not matter here: off-polarity
    # patterns are dropped, not fatal, and only the pool line is asserted.
    script = [analysis_reply("success")] * 8 + [merge_reply()] + synthesis_replies()
    config = write_config(tmp_path, script)
    code, stdout, _ = run(capsys, [
        "extract", "--config", config, "--pool", pool, "--provider", "model",
        "--out", str(tmp_path / "s.json"), "--ratio", "0.75", "--size", "8",
        "--seed", "3"])
    assert code == 0
    assert "pool: 8 trajectories, 6 success / 2 failure" in stdout


def test_extract_ratio_needs_size(tmp_path, capsys):
    code, _, stderr = run(capsys, [
        "extract", "--config", str(tmp_path / "missing.yaml"),
        "--pool", "p.jsonl", "--provider", "model",
        "--out", "s.json", "--ratio", "0.5"])
    assert code == 2
    assert "--ratio and --size" in stderr


def test_extract_guidance_file_lands_in_prompts(tmp_path, capsys):
    pool = write_pool(tmp_path, 1, 1)
    script = extraction_script([True, False])
    config = write_config(tmp_path, script, record_to="record.jsonl")
    guidance = tmp_path / "guidance.md"
    guidance.write_text("Prefer checks that name a concrete failure mode.\n")
    code, _, _ = run(capsys, [
        "extract", "--config", config, "--pool", pool, "--provider", "model",
        "--out", str(tmp_path / "s.json"), "--guidance", str(guidance)])
    assert code == 0
    recorded = [json.loads(line)
                for line in (tmp_path / "record.jsonl").read_text().splitlines()]
    assert len(recorded) == len(script)
    hits = [doc for doc in recorded
            if "Prefer checks that name a concrete failure mode." in doc["system"]]
    assert hits, "guidance text never reached a prompt"


def test_guidance_flags_are_exclusive(tmp_path, capsys):
    code, _, _ = run(capsys, [
        "extract", "--config", "c.yaml", "--pool", "p.jsonl",
        "--provider", "model", "--out", "s.json",
        "--guidance", "g.md", "--guidance-text", "inline"])
    assert code == 2


def test_undeclared_provider_is_usage_error(tmp_path, capsys):
    pool = write_pool(tmp_path, 1, 1)
    config = write_config(tmp_path, extraction_script([True, False]))
    code, _, stderr = run(capsys, [
        "extract", "--config", config, "--pool", pool,
        "--provider", "phantom", "--out", str(tmp_path / "s.json")])
    assert code == 2
    assert "undeclared model" in stderr and "model" in stderr


def test_bad_config_is_usage_error(tmp_path, capsys):
    config = tmp_path / "config.yaml"
    config.write_text("providers: {}\nwhatever: 1\n")
    code, _, stderr = run(capsys, [
        "extract", "--config", str(config), "--pool", "p.jsonl",
        "--provider", "model", "--out", "s.json"])
    assert code == 2
    assert "error:" in stderr


# --- render ---------------------------------------------------------------------

SKILL = Skill(
    name="grid-coordinate-hygiene",
    description="Keep spreadsheet edits anchored to verified cell coordinates.",
    body="Before writing a formula, re-read the task statement and confirm "
         "the target range. Never assume row offsets carry over between sheets.",
)
OTHER = Skill(
    name="retry-with-narrower-scope",
    description="Shrink the edit scope after a failed verification pass.",
    body="If verification fails twice, split the change into per-sheet steps "
         "and re-verify each.",
)


def test_render_single_matches_library(tmp_path, capsys):
    path = tmp_path / "one.json"
    save_skills(path, [SKILL])
    code, stdout, _ = run(capsys, ["render", "--skills", str(path)])
    assert code == 0
    assert stdout == render_single(SKILL) + "\n"


def test_render_single_rejects_multi_skill_files(tmp_path, capsys):
    path = tmp_path / "two.json"
    save_skills(path, [SKILL, OTHER])
    code, _, stderr = run(capsys, ["render", "--skills", str(path), "--mode", "single"])
    assert code == 1
    assert "mode mismatch" in stderr


def test_render_multi_to_file(tmp_path, capsys):
    path = tmp_path / "two.json"
    save_skills(path, [SKILL, OTHER])
    out = tmp_path / "preamble.txt"
    code, stdout, _ = run(capsys, [
        "render", "--skills", str(path), "--mode", "multi", "--out", str(out)])
    assert code == 0
    assert f"wrote {out}" in stdout
    text = out.read_text()
    for tool in ("list_skills", "view_skill", "read_skill_file"):
        assert tool in text
    assert "2 reusable procedural skills" in text


def test_render_empty_file_fails(tmp_path, capsys):
    path = tmp_path / "none.json"
    save_skills(path, [])
    code, _, stderr = run(capsys, ["render", "--skills", str(path)])
    assert code == 1
    assert "no skills" in stderr


# --- report ---------------------------------------------------------------------


def cell_records(delta: float = 2.0):
    base = [RunRecord(None, "agent", "dom", i, 60.0 + i) for i in range(3)]
    skill = [RunRecord("ext", "agent", "dom", i, 60.0 + i + delta) for i in range(3)]
    return base + skill


def test_report_json(tmp_path, capsys):
    runs = tmp_path / "runs.jsonl"
    save_run_records(runs, cell_records())
    code, stdout, _ = run(capsys, ["report", "--runs", str(runs), "--json"])
    assert code == 0
    doc = json.loads(stdout)
    overall = doc["overall_negative_transfer"]
    assert overall == {"negative": 0, "cells": 1, "rate": 0.0}
    assert doc["domains"]["dom"]["delta"]["ext"]["agent"] == pytest.approx(2.0)


def test_report_text_summary_line(tmp_path, capsys):
    runs = tmp_path / "runs.jsonl"
    save_run_records(runs, cell_records(delta=-1.0))
    code, stdout, _ = run(capsys, [
        "report", "--runs", str(runs), "--color", "never"])
    assert code == 0
    assert "overall negative transfer: 1/1 (100.0%)" in stdout
    assert "\x1b[" not in stdout


def test_report_without_cells_fails(tmp_path, capsys):
    runs = tmp_path / "runs.jsonl"
    save_run_records(runs, [RunRecord(None, "agent", "dom", 0, 50.0)])
    code, _, stderr = run(capsys, ["report", "--runs", str(runs)])
    assert code == 1
    assert "no delta cells" in stderr


# --- judge ----------------------------------------------------------------------


def make_pair(index: int) -> SkillPair:
    high = SkillResult(skill_id=f"hi-{index}", body=f"strong habit {index}",
                       delta=3.0, target="agent", domain="dom")
    low = SkillResult(skill_id=f"lo-{index}", body=f"weak habit {index}",
                      delta=0.5, target="agent", domain="dom")
    return SkillPair(pair_id=f"dom:agent:hi-{index}-vs-lo-{index}", high=high, low=low)


def write_pairs(tmp_path, count: int) -> str:
    path = tmp_path / "pairs.jsonl"
    save_pairs(path, [make_pair(i) for i in range(count)])
    return str(path)


def choice(text: str):
    return {"text": json.dumps({"choice": text})}


def test_judge_unguided_summary(tmp_path, capsys):
    pairs = write_pairs(tmp_path, 2)
    config = write_config(tmp_path, [choice("Skill 1"), choice("Skill 2")])
    out = tmp_path / "verdicts.jsonl"
    code, stdout, _ = run(capsys, [
        "judge", "--config", config, "--pairs", pairs,
        "--provider", "model", "--out", str(out), "--votes", "1"])
    assert code == 0
    assert "pairs judged: 2/2 (unguided)" in stdout
    assert "accuracy:" in stdout and "/2" in stdout
    assert len(load_verdicts(out)) == 2


def test_judge_even_votes_rejected_before_config(tmp_path, capsys):
    code, _, stderr = run(capsys, [
        "judge", "--config", str(tmp_path / "missing.yaml"),
        "--pairs", "p.jsonl", "--provider", "model",
        "--out", "v.jsonl", "--votes", "2"])
    assert code == 2
    assert "odd" in stderr


def test_judge_tolerates_per_pair_failures(tmp_path, capsys):
    pairs = write_pairs(tmp_path, 2)
    config = write_config(tmp_path, [choice("Skill 1"), {"error": "auth"}])
    out = tmp_path / "verdicts.jsonl"
    code, stdout, _ = run(capsys, [
        "judge", "--config", config, "--pairs", pairs,
        "--provider", "model", "--out", str(out), "--votes", "1"])
    assert code == 0
    assert "pairs judged: 1/2 (unguided)" in stdout
    assert "failed pairs: 1" in stdout
    assert "dom:agent:hi-1-vs-lo-1" in stdout
    assert len(load_verdicts(out)) == 1


def test_judge_all_failures_exit_1(tmp_path, capsys):
    pairs = write_pairs(tmp_path, 1)
    config = write_config(tmp_path, [{"error": "auth"}])
    code, _, stderr = run(capsys, [
        "judge", "--config", config, "--pairs", pairs,
        "--provider", "model", "--out", str(tmp_path / "v.jsonl"),
        "--votes", "1"])
    assert code == 1
    assert "every pair failed" in stderr


# --- rubric ---------------------------------------------------------------------


def differences_reply():
    return {"text": json.dumps({"differences": [
        "one names the failing command, the other stays generic",
        "one orders checks before edits",
    ]})}


def consolidation_reply(names):
    return {"text": json.dumps({"dimensions": [
        {"name": name, "definition": f"how well the skill covers {name}"}
        for name in names
    ]})}


def vote(text: str):
    return {"text": json.dumps({"winner": text})}


def test_rubric_all_tie_validation_filters_everything(tmp_path, capsys):
    pairs = write_pairs(tmp_path, 3)
    script = ([differences_reply()] * 3
              + [consolidation_reply(["checks-first", "scope-control"])]
              + [vote("tie")] * 6)
    config = write_config(tmp_path, script)
    out = tmp_path / "rubric.json"
    validated_out = tmp_path / "validated.json"
    meta_out = tmp_path / "meta.md"
    code, stdout, stderr = run(capsys, [
        "rubric", "--config", config, "--pairs", pairs, "--provider", "model",
        "--out", str(out), "--dims", "2", "--batch-size", "10",
        "--validated-out", str(validated_out), "--meta-out", str(meta_out)])
    assert code == 0
    assert "dimensions discovered: 2" in stdout
    assert "checks-first: better-rate 0.500" in stdout
    assert "validated at threshold 0.64: 0" in stdout
    assert "no validated dimensions" in stderr
    assert not meta_out.exists()
    assert [d.name for d in load_rubric(out)] == ["checks-first", "scope-control"]
    assert load_rubric(validated_out) == []


def test_rubric_skip_validation(tmp_path, capsys):
    pairs = write_pairs(tmp_path, 3)
    script = [differences_reply()] * 3 + [consolidation_reply(["checks-first"])]
    config = write_config(tmp_path, script)
    out = tmp_path / "rubric.json"
    meta_out = tmp_path / "meta.md"
    code, stdout, _ = run(capsys, [
        "rubric", "--config", config, "--pairs", pairs, "--provider", "model",
        "--out", str(out), "--skip-validation", "--meta-out", str(meta_out)])
    assert code == 0
    assert "dimensions discovered: 1" in stdout
    assert "better-rate" not in stdout
    assert meta_out.read_text().startswith("## Extraction Quality Guidance")


# --- parser-level behaviour -------------------------------------------------------


def test_unknown_subcommand_exits_2(capsys):
    assert main(["defragment"]) == 2
    capsys.readouterr()


def test_missing_required_flag_exits_2(capsys):
    assert main(["extract", "--pool", "p.jsonl"]) == 2
    capsys.readouterr()
