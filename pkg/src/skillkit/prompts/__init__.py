"""Prompt template assets and builders.

Templates live as text files next to this module and use square-bracket
placeholders ([K], [max_skills], ...). Rendering is literal token
replacement, so templates can safely contain braces and code fences.
Optional extraction guidance is appended verbatim to the analysis and
synthesis prompts, never to the merge prompt.
"""

from __future__ import annotations

import json
from importlib import resources

from ..store import SkillBudget

PROMPT_VERSION = "1"

SUCCESS_KIND_PLURAL = "success patterns"
FAILURE_KIND_PLURAL = "failure patterns"

SUCCESS_GUIDANCE = (
    "Capture effective strategies, decision patterns, and methodological insights. "
    'Ask: "What did this agent do RIGHT that other agents facing similar tasks '
    'should also do?"'
)
FAILURE_GUIDANCE = (
    "Capture error patterns, anti-patterns, and non-obvious pitfalls. "
    'Ask: "What should an agent AVOID doing when facing similar tasks?"'
)

REWRITE_FORMATS = {
    "ordered_list": "a flat numbered list of steps",
    "unordered_list": "a flat bulleted list",
    "checklist": "a checklist of checkbox items",
    "prose": "flowing paragraphs without list markup",
}


def load_template(name: str) -> str:
    return resources.files("skillkit.prompts").joinpath(f"{name}.txt").read_text(
        encoding="utf-8")


def render(template: str, values: dict[str, str]) -> str:
    out = template
    for key, value in values.items():
        out = out.replace(f"[{key}]", value)
    return out


def _with_guidance(prompt: str, guidance: str | None) -> str:
    if guidance:
        return prompt.rstrip("\n") + "\n\n" + guidance
    return prompt.rstrip("\n")


def analysis_prompt(success: bool, max_patterns: int, guidance: str | None = None) -> str:
    """System prompt for per-trajectory pattern analysis, one polarity."""
    rendered = render(load_template("analysis"), {
        "pattern_kind_plural": SUCCESS_KIND_PLURAL if success else FAILURE_KIND_PLURAL,
        "per_type_guidance": SUCCESS_GUIDANCE if success else FAILURE_GUIDANCE,
        "K": str(max_patterns),
    })
    return _with_guidance(rendered, guidance)


def merge_prompt() -> str:
    return load_template("merge").rstrip("\n")


def synthesis_prompt(budget: SkillBudget, guidance: str | None = None) -> str:
    rendered = render(load_template("synthesis"), {
        "max_skills": str(budget.max_skills),
        "max_skill_chars": str(budget.max_skill_chars),
        "max_total_chars": (
            "none" if budget.max_total_chars is None else str(budget.max_total_chars)),
    })
    return _with_guidance(rendered, guidance)


def unguided_judge_prompt(skill_1: str, skill_2: str, domain_description: str) -> str:
    return render(load_template("judge_unguided"), {
        "domain_description": domain_description,
        "skill_1": skill_1,
        "skill_2": skill_2,
    }).rstrip("\n")


def guided_judge_prompt(
    skill_1: str,
    skill_2: str,
    domain_description: str,
    dimensions: list[tuple[str, str]],
) -> str:
    listing = "\n".join(
        f"{i}. {name}: {definition}" for i, (name, definition) in enumerate(dimensions, 1))
    return render(load_template("judge_guided"), {
        "domain_description": domain_description,
        "dimension_list": listing,
        "skill_1": skill_1,
        "skill_2": skill_2,
    }).rstrip("\n")


def rubric_differences_prompt(skill_high: str, skill_low: str) -> str:
    return render(load_template("rubric_differences"), {
        "skill_high": skill_high,
        "skill_low": skill_low,
    }).rstrip("\n")


def rubric_consolidate_prompt(
    current: list[tuple[str, str]],
    differences: list[str],
    max_dimensions: int,
) -> str:
    current_json = json.dumps(
        [{"name": n, "definition": d} for n, d in current], indent=2, ensure_ascii=False)
    listing = "\n".join(f"- {d}" for d in differences) if differences else "(none)"
    return render(load_template("rubric_consolidate"), {
        "current_dimensions": current_json,
        "differences": listing,
        "max_dimensions": str(max_dimensions),
    }).rstrip("\n")


def rubric_dimension_vote_prompt(
    skill_1: str, skill_2: str, name: str, definition: str
) -> str:
    return render(load_template("rubric_dimension_vote"), {
        "dimension_name": name,
        "dimension_definition": definition,
        "skill_1": skill_1,
        "skill_2": skill_2,
    }).rstrip("\n")


def rewrite_prompt(body: str, format_name: str) -> str:
    return render(load_template("rewrite"), {
        "format_name": format_name,
        "format_instruction": REWRITE_FORMATS[format_name],
        "body": body,
    }).rstrip("\n")


def rewrite_verify_prompt(original: str, rewritten: str, format_name: str) -> str:
    return render(load_template("rewrite_verify"), {
        "format_name": format_name,
        "format_instruction": REWRITE_FORMATS[format_name],
        "original": original,
        "rewritten": rewritten,
    }).rstrip("\n")
