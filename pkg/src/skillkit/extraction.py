"""Skill extraction engine.

Three model-facing stages: per-trajectory pattern analysis (fan-out),
level-wise consolidation of pattern sets in bounded groups, and tool-loop
skill synthesis against a budget-enforced store. A format-rewrite helper
rounds out the module. All stages speak through the gateway, so any
provider works, scripted ones included.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace

from . import prompts
from .gateway import (
    ChatRequest,
    MalformedModelOutput,
    Message,
    Provider,
    RetryPolicy,
    ToolCall,
    ToolSpec,
    complete,
    extract_json,
    fan_out,
)
from .pool import ExperiencePool, Trajectory, render_trajectory
from .store import Skill, SkillBudget, SkillStore, SkillStoreError

PATTERN_KINDS = ("success", "failure")


class SynthesisStalled(Exception):
    """The synthesis turn cap was reached without a single valid skill."""


class FormatRewriteFailed(Exception):
    """Verification rejected the rewritten body twice."""


@dataclass(frozen=True)
class Pattern:
    """One extracted behavioural pattern, tagged success or failure."""

    kind: str
    title: str
    description: str

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"pattern kind must be one of {PATTERN_KINDS}, got {self.kind!r}")
        if not self.title:
            raise ValueError("pattern title must not be empty")
        if not self.description:
            raise ValueError("pattern description must not be empty")


@dataclass(frozen=True)
class PatternSet:
    """Patterns plus a short summary, with the trajectory ids they came from."""

    patterns: tuple[Pattern, ...] = ()
    summary: str = ""
    source: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "patterns", tuple(self.patterns))
        object.__setattr__(self, "source", tuple(self.source))

    def by_kind(self, kind: str) -> tuple[Pattern, ...]:
        return tuple(p for p in self.patterns if p.kind == kind)


@dataclass
class ExtractionConfig:
    max_patterns: int = 3
    group_size: int = 10
    budget: SkillBudget = field(default_factory=SkillBudget)
    guidance: str | None = None
    extractor_model: str = "extractor"
    temperature: float = 1.0
    reasoning_effort: str = "medium"
    concurrency: int = 8
    synthesis_turn_cap: int = 20
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self):
        if self.max_patterns < 1:
            raise ValueError("max_patterns must be at least 1")
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if self.concurrency < 1:
            raise ValueError("concurrency must be at least 1")
        if self.synthesis_turn_cap < 1:
            raise ValueError("synthesis_turn_cap must be at least 1")


def pattern_set_to_dict(pattern_set: PatternSet) -> dict:
    return {
        "success_patterns": [
            {"pattern": p.title, "description": p.description}
            for p in pattern_set.by_kind("success")
        ],
        "failure_patterns": [
            {"pattern": p.title, "description": p.description}
            for p in pattern_set.by_kind("failure")
        ],
        "summary": pattern_set.summary,
    }


def _entry_fields(entry: object) -> tuple[str, str, str]:
    if not isinstance(entry, dict):
        return "", "", ""
    title = str(entry.get("pattern") or entry.get("name") or "").strip()
    description = str(entry.get("description") or "").strip()
    kind = str(entry.get("type") or "").strip().lower()
    return title, description, kind


def _parse_analysis_reply(
    text: str, polarity: str, max_patterns: int
) -> tuple[list[Pattern], str]:
    doc = extract_json(text)
    if isinstance(doc, dict):
        summary = str(doc.get("summary") or "")
        entries = doc.get("patterns", [])
    elif isinstance(doc, list):
        summary = ""
        entries = doc
    else:
        raise ValueError("expected a JSON list of patterns or an object holding one")
    if not isinstance(entries, list):
        raise ValueError("'patterns' must be a JSON list")
    patterns: list[Pattern] = []
    for entry in entries:
        title, description, kind = _entry_fields(entry)
        kind = kind or polarity
        if not title or not description:
            continue
        if kind != polarity:
            # The prompt asked for one polarity only; off-polarity entries
            # are dropped rather than relabeled.
            continue
        patterns.append(Pattern(kind=kind, title=title, description=description))
    return patterns[:max_patterns], summary


def _parse_merge_reply(text: str) -> tuple[list[Pattern], str]:
    doc = extract_json(text)
    if not isinstance(doc, dict):
        raise ValueError("expected a JSON object with consolidated patterns")
    summary = str(doc.get("summary") or "")
    patterns: list[Pattern] = []
    for kind, key in (("success", "success_patterns"), ("failure", "failure_patterns")):
        entries = doc.get(key) or []
        if not isinstance(entries, list):
            raise ValueError(f"{key!r} must be a JSON list")
        for entry in entries:
            title, description, _ = _entry_fields(entry)
            if title and description:
                patterns.append(Pattern(kind=kind, title=title, description=description))
    for entry in doc.get("patterns") or []:
        title, description, kind = _entry_fields(entry)
        if kind in PATTERN_KINDS and title and description:
            patterns.append(Pattern(kind=kind, title=title, description=description))
    return patterns, summary


def _complete_with_reask(
    provider: Provider,
    request: ChatRequest,
    parse,
    config: ExtractionConfig,
    stage: str,
):
    """Send, parse, and on a parse failure re-ask once with the error appended."""
    response = complete(provider, request, config.retry)
    text = response.text or ""
    try:
        return parse(text)
    except ValueError as first_error:
        retry_request = replace(request, messages=request.messages + (
            Message("assistant", text),
            Message(
                "user",
                f"Your reply could not be parsed: {first_error}. "
                "Reply again with only the JSON.",
            ),
        ))
        response = complete(provider, retry_request, config.retry)
        text = response.text or ""
        try:
            return parse(text)
        except ValueError as second_error:
            raise MalformedModelOutput(
                f"{stage} reply unparseable after one re-ask: {second_error}",
                raw=text,
            ) from second_error


def analyze_trajectory(
    trajectory: Trajectory, config: ExtractionConfig, provider: Provider
) -> PatternSet:
    """Extract at most max_patterns patterns of the trajectory's polarity.

    Entries beyond the cap are dropped in order; an empty list is a valid
    reply. A malformed reply triggers one re-ask with the parse error
    appended, then MalformedModelOutput.
    """
    polarity = "success" if trajectory.outcome else "failure"
    request = ChatRequest(
        model=config.extractor_model,
        system=prompts.analysis_prompt(trajectory.outcome, config.max_patterns, config.guidance),
        messages=(Message("user", render_trajectory(trajectory)),),
        temperature=config.temperature,
        reasoning_effort=config.reasoning_effort,
    )
    patterns, summary = _complete_with_reask(
        provider, request,
        lambda text: _parse_analysis_reply(text, polarity, config.max_patterns),
        config, "analysis",
    )
    return PatternSet(tuple(patterns), summary, (trajectory.id,))


def merge_plan(count: int, group_size: int) -> list[list[int]]:
    """Group sizes per consolidation level for `count` input sets.

    Each level chunks the current sets into consecutive groups of at most
    group_size; the level output has one set per group. A single input needs
    no levels at all.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if group_size < 2:
        raise ValueError("group_size must be at least 2")
    levels: list[list[int]] = []
    n = count
    while n > 1:
        sizes = [group_size] * (n // group_size)
        if n % group_size:
            sizes.append(n % group_size)
        levels.append(sizes)
        n = len(sizes)
    return levels


def level_sizes(count: int, group_size: int) -> list[int]:
    """Set counts entering each level, ending at 1 (e.g. 20 -> 2 -> 1)."""
    sizes = [count]
    for level in merge_plan(count, group_size):
        sizes.append(len(level))
    return sizes


def merge_call_count(count: int, group_size: int) -> int:
    """Model calls consolidation will spend: one per group of two or more.

    Groups of exactly one set pass through unchanged and cost nothing.
    """
    return sum(1 for level in merge_plan(count, group_size) for size in level if size >= 2)


def _merge_group(
    group: list[PatternSet], config: ExtractionConfig, provider: Provider
) -> PatternSet:
    request = ChatRequest(
        model=config.extractor_model,
        system=prompts.merge_prompt(),
        messages=(Message("user", json.dumps(
            [pattern_set_to_dict(s) for s in group], indent=2, ensure_ascii=False)),),
        temperature=config.temperature,
        reasoning_effort=config.reasoning_effort,
    )
    patterns, summary = _complete_with_reask(
        provider, request, _parse_merge_reply, config, "merge")
    source = tuple(sid for s in group for sid in s.source)
    return PatternSet(tuple(patterns), summary, source)


def consolidate(
    sets: list[PatternSet], config: ExtractionConfig, provider: Provider
) -> PatternSet:
    """Reduce pattern sets to one via level-wise merging in bounded groups.

    A single input is returned unchanged with zero model calls. Groups
    within a level may merge concurrently; levels run in order.
    """
    if not sets:
        raise ValueError("nothing to consolidate")
    current = list(sets)
    while len(current) > 1:
        groups = [
            current[i:i + config.group_size]
            for i in range(0, len(current), config.group_size)
        ]
        jobs = [(idx, grp) for idx, grp in enumerate(groups) if len(grp) >= 2]
        merged = fan_out(
            provider,
            [lambda grp=grp: _merge_group(grp, config, provider) for _, grp in jobs],
            config.concurrency,
        )
        merged_by_index = {idx: result for (idx, _), result in zip(jobs, merged)}
        current = [
            merged_by_index.get(idx, group[0]) for idx, group in enumerate(groups)
        ]
    return current[0]


_SKILL_ARG_PROPERTIES = {
    "name": {"type": "string"},
    "description": {"type": "string"},
    "body": {"type": "string"},
    "references": {"type": "object", "additionalProperties": {"type": "string"}},
    "scripts": {"type": "object", "additionalProperties": {"type": "string"}},
}

SYNTHESIS_TOOLS: tuple[ToolSpec, ...] = (
    ToolSpec("create_skill", "Add a new skill to the store.", {
        "type": "object",
        "properties": _SKILL_ARG_PROPERTIES,
        "required": ["name", "description", "body"],
        "additionalProperties": False,
    }),
    ToolSpec("update_skill", "Replace fields of an existing skill, matched by name.", {
        "type": "object",
        "properties": _SKILL_ARG_PROPERTIES,
        "required": ["name"],
        "additionalProperties": False,
    }),
    ToolSpec("delete_skill", "Remove a skill by name.", {
        "type": "object",
        "properties": {"name": {"type": "string"}},
        "required": ["name"],
        "additionalProperties": False,
    }),
    ToolSpec("finish", "Signal that skill synthesis is complete.", {
        "type": "object",
        "properties": {},
        "additionalProperties": False,
    }),
)

_NO_TOOL_REMINDER = (
    "No tool call received. Skills must be submitted via the create_skill tool; "
    "plain text is ignored. Call finish once every skill has been added."
)


def _skill_from_args(arguments) -> Skill:
    return Skill(
        name=str(arguments.get("name", "")),
        description=str(arguments.get("description", "")),
        body=str(arguments.get("body", "")),
        references=dict(arguments.get("references") or {}),
        scripts=dict(arguments.get("scripts") or {}),
    )


def _execute_tool(store: SkillStore, call: ToolCall) -> tuple[str, bool]:
    """Apply one tool call to the store. Returns (result text, finished)."""
    if call.schema_errors:
        details = "; ".join(call.schema_errors)
        return f"error: invalid arguments for {call.name}: {details}", False
    try:
        if call.name == "create_skill":
            skill = _skill_from_args(call.arguments)
            store.create_skill(skill)
            return (
                f"created skill {skill.name!r} ({len(skill.body)} body chars); "
                f"store holds {len(store)}/{store.budget.max_skills} skills",
                False,
            )
        if call.name == "update_skill":
            name = str(call.arguments["name"])
            current = store.get(name)
            candidate = Skill(
                name=str(call.arguments.get("name", current.name)),
                description=str(call.arguments.get("description", current.description)),
                body=str(call.arguments.get("body", current.body)),
                references=dict(call.arguments.get("references", current.references)),
                scripts=dict(call.arguments.get("scripts", current.scripts)),
            )
            store.update_skill(name, candidate)
            return f"updated skill {name!r}", False
        if call.name == "delete_skill":
            name = str(call.arguments["name"])
            store.delete_skill(name)
            return f"deleted skill {name!r}", False
        if call.name == "finish":
            if len(store) == 0:
                return (
                    "error: cannot finish with an empty store; "
                    "create at least one skill first",
                    False,
                )
            return f"finishing with {len(store)} skill(s)", True
        return f"error: unknown tool {call.name!r}", False
    except SkillStoreError as exc:
        return f"error: {exc}", False


def synthesize_skills(
    final_set: PatternSet,
    config: ExtractionConfig,
    provider: Provider,
    store: SkillStore | None = None,
) -> SkillStore:
    """Drive the tool loop that turns consolidated patterns into stored skills.

    Store errors (budget, schema, duplicates) are answered in-band so the
    model can repair and retry. The loop ends at the finish tool or at the
    turn cap; the returned store is sealed. Hitting the cap with an empty
    store raises SynthesisStalled.
    """
    if store is None:
        store = SkillStore(config.budget)
    if len(store) or store.sealed:
        raise ValueError("synthesis needs an empty, unsealed store")
    system = prompts.synthesis_prompt(store.budget, config.guidance)
    messages: list[Message] = [Message("user", json.dumps(
        pattern_set_to_dict(final_set), indent=2, ensure_ascii=False))]
    for _ in range(config.synthesis_turn_cap):
        request = ChatRequest(
            model=config.extractor_model,
            system=system,
            messages=tuple(messages),
            tools=SYNTHESIS_TOOLS,
            temperature=config.temperature,
            reasoning_effort=config.reasoning_effort,
        )
        response = complete(provider, request, config.retry)
        if not response.tool_calls:
            messages.append(Message("assistant", response.text or ""))
            messages.append(Message("user", _NO_TOOL_REMINDER))
            continue
        messages.append(Message(
            "assistant", response.text or "", tool_calls=response.tool_calls))
        finished = False
        for call in response.tool_calls:
            result, finish_ok = _execute_tool(store, call)
            finished = finished or finish_ok
            messages.append(Message("tool", result, tool_call_id=call.id))
        if finished:
            return store.seal()
    if len(store):
        # The model produced skills but never called finish; keep them.
        return store.seal()
    raise SynthesisStalled(
        f"turn cap of {config.synthesis_turn_cap} reached with no valid skill")


def extract(
    pool: ExperiencePool, config: ExtractionConfig, provider: Provider
) -> SkillStore:
    """Full pipeline: analyze every trajectory, consolidate, synthesize.

    Analysis fans out under the configured concurrency limit; pattern sets
    keep pool order regardless of completion order.
    """
    sets = fan_out(
        provider,
        [lambda t=t: analyze_trajectory(t, config, provider) for t in pool.trajectories],
        config.concurrency,
    )
    final_set = consolidate(sets, config, provider)
    return synthesize_skills(final_set, config, provider)


_BODY_FENCE_RE = re.compile(r"```[a-zA-Z]*\n(.*)\n```", re.DOTALL)


def _strip_fence(text: str) -> str:
    stripped = text.strip()
    match = _BODY_FENCE_RE.fullmatch(stripped)
    return match.group(1) if match else stripped


def rewrite_format(
    skill: Skill,
    format_name: str,
    provider: Provider,
    model: str = "rewriter",
    retry: RetryPolicy | None = None,
) -> Skill:
    """Rewrite a skill body into another surface format, verified by a
    second model call. One retry on rejection, then FormatRewriteFailed.
    Name and description never change.
    """
    if format_name not in prompts.REWRITE_FORMATS:
        known = ", ".join(prompts.REWRITE_FORMATS)
        raise ValueError(f"unknown format {format_name!r}; supported: {known}")
    last_reason = "verification rejected the rewrite"
    for _ in range(2):
        rewritten = complete(provider, ChatRequest(
            model=model,
            messages=(Message("user", prompts.rewrite_prompt(skill.body, format_name)),),
        ), retry)
        body = _strip_fence(rewritten.text or "")
        verification = complete(provider, ChatRequest(
            model=model,
            messages=(Message("user", prompts.rewrite_verify_prompt(
                skill.body, body, format_name)),),
        ), retry)
        try:
            verdict = extract_json(verification.text or "")
        except ValueError:
            verdict = None
        if isinstance(verdict, dict) and verdict.get("approved") is True:
            return replace(skill, body=body)
        if isinstance(verdict, dict) and verdict.get("reason"):
            last_reason = str(verdict["reason"])
    raise FormatRewriteFailed(f"rewrite not approved after retry: {last_reason}")
