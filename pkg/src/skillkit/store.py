"""Skill schema, budget enforcement, and the writable skill store.

A skill is a named procedural document with optional reference and script
attachments. Stores hold skills in insertion order, enforce a budget on
every write, and can be sealed into a read-only state once an extraction
run finishes.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

SLUG_RE = re.compile(r"[a-z0-9-]+")
MAX_NAME_CHARS = 64
MAX_DESCRIPTION_CHARS = 400
MAX_ATTACHMENT_CHARS = 16 * 1024

SKILL_FIELDS = ("name", "description", "body", "references", "scripts")


class SkillStoreError(Exception):
    """Base class for skill schema and store failures."""


class SchemaViolation(SkillStoreError):
    """A candidate skill breaks a structural constraint (slug, emptiness)."""

    def __init__(self, violations: list["Violation"]):
        self.violations = list(violations)
        super().__init__("; ".join(v.message for v in self.violations))


class BudgetExceeded(SkillStoreError):
    """A write would push the store, a body, or an attachment over budget."""


class DuplicateName(SkillStoreError):
    pass


class SkillNotFound(SkillStoreError):
    pass


class StoreSealed(SkillStoreError):
    pass


@dataclass(frozen=True)
class Violation:
    """One failed validation check, with a machine code and a readable message."""

    code: str
    message: str


# Violations in this set are length problems the writer can fix by shortening,
# so create/update surface them as BudgetExceeded rather than SchemaViolation.
_BUDGET_CODES = frozenset({"body_length", "attachment_length", "total_length"})


@dataclass(frozen=True)
class Skill:
    """A procedural skill document.

    Attributes:
        name: lowercase slug (letters, digits, hyphens), at most 64 chars.
        description: short summary of what the skill covers and when to use it.
        body: Markdown text; counted against the per-skill character budget.
        references: optional map of filename to reference text. Not counted
            against the body budget, but each file is capped individually.
        scripts: optional map of filename to script text, same cap.
    """

    name: str
    description: str
    body: str
    references: Mapping[str, str] = field(default_factory=dict)
    scripts: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SkillBudget:
    """Limits applied to every store write.

    max_total_chars is an optional cap on the summed body lengths of all
    stored skills; None disables it.
    """

    max_skills: int = 1
    max_skill_chars: int = 3000
    max_total_chars: int | None = None

    def __post_init__(self):
        if self.max_skills < 1:
            raise ValueError("max_skills must be positive")
        if self.max_skill_chars < 1:
            raise ValueError("max_skill_chars must be positive")
        if self.max_total_chars is not None and self.max_total_chars < 1:
            raise ValueError("max_total_chars must be positive when set")


def validate_skill(candidate: Skill, budget: SkillBudget) -> list[Violation]:
    """Check a candidate against the schema and per-skill budget.

    Returns every violated constraint rather than stopping at the first,
    so a model (or a human) can fix them all in one pass. An empty list
    means the candidate is acceptable to a store with free capacity.
    """
    violations: list[Violation] = []
    if not candidate.name:
        violations.append(Violation("empty_name", "name must not be empty"))
    else:
        if len(candidate.name) > MAX_NAME_CHARS:
            violations.append(Violation(
                "name_length",
                f"name is {len(candidate.name)} chars; limit is {MAX_NAME_CHARS}",
            ))
        if not SLUG_RE.fullmatch(candidate.name):
            violations.append(Violation(
                "slug",
                f"name {candidate.name!r} must contain only lowercase letters, digits, and hyphens",
            ))
    if not candidate.description:
        violations.append(Violation("empty_description", "description must not be empty"))
    elif len(candidate.description) > MAX_DESCRIPTION_CHARS:
        violations.append(Violation(
            "description_length",
            f"description is {len(candidate.description)} chars; limit is {MAX_DESCRIPTION_CHARS}",
        ))
    if len(candidate.body) > budget.max_skill_chars:
        violations.append(Violation(
            "body_length",
            f"body is {len(candidate.body)} chars; budget allows at most "
            f"{budget.max_skill_chars} per skill. Shorten and retry.",
        ))
    if budget.max_total_chars is not None and len(candidate.body) > budget.max_total_chars:
        violations.append(Violation(
            "total_length",
            f"body is {len(candidate.body)} chars; the store-wide budget is "
            f"{budget.max_total_chars}. Shorten and retry.",
        ))
    for kind, files in (("reference", candidate.references), ("script", candidate.scripts)):
        for filename, content in files.items():
            if not filename:
                violations.append(Violation(
                    "empty_filename", f"{kind} filenames must not be empty"))
            if len(content) > MAX_ATTACHMENT_CHARS:
                violations.append(Violation(
                    "attachment_length",
                    f"{kind} file {filename!r} is {len(content)} chars; "
                    f"limit is {MAX_ATTACHMENT_CHARS}",
                ))
    return violations


class SkillStore:
    """Ordered, budget-enforced collection of skills.

    All mutating operations validate first and only then mutate, so a
    rejected call leaves the store byte-identical. Once sealed, the store
    rejects every further write; sealing again is a no-op.
    """

    def __init__(self, budget: SkillBudget | None = None):
        self.budget = budget if budget is not None else SkillBudget()
        self._skills: dict[str, Skill] = {}
        self.sealed = False

    def __len__(self) -> int:
        return len(self._skills)

    def __contains__(self, name: str) -> bool:
        return name in self._skills

    @property
    def skills(self) -> tuple[Skill, ...]:
        return tuple(self._skills.values())

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._skills)

    @property
    def total_body_chars(self) -> int:
        return sum(len(s.body) for s in self._skills.values())

    def get(self, name: str) -> Skill:
        try:
            return self._skills[name]
        except KeyError:
            raise SkillNotFound(self._unknown_message(name)) from None

    def create_skill(self, candidate: Skill) -> "SkillStore":
        self._check_writable()
        self._check_schema(candidate)
        if candidate.name in self._skills:
            raise DuplicateName(
                f"skill {candidate.name!r} already exists; use update_skill to change it")
        if len(self._skills) >= self.budget.max_skills:
            raise BudgetExceeded(
                f"store already holds {len(self._skills)}/{self.budget.max_skills} skills; "
                "delete one before creating another")
        self._check_total(self.total_body_chars + len(candidate.body))
        self._skills[candidate.name] = candidate
        return self

    def update_skill(self, name: str, candidate: Skill) -> "SkillStore":
        self._check_writable()
        if name not in self._skills:
            raise SkillNotFound(self._unknown_message(name))
        self._check_schema(candidate)
        if candidate.name != name and candidate.name in self._skills:
            raise DuplicateName(
                f"cannot rename {name!r} to {candidate.name!r}: that name already exists")
        self._check_total(self.total_body_chars - len(self._skills[name].body) + len(candidate.body))
        # Replace in place so the skill keeps its position in store order.
        self._skills = {
            (candidate.name if key == name else key): (candidate if key == name else value)
            for key, value in self._skills.items()
        }
        return self

    def delete_skill(self, name: str) -> "SkillStore":
        self._check_writable()
        if name not in self._skills:
            raise SkillNotFound(self._unknown_message(name))
        del self._skills[name]
        return self

    def seal(self) -> "SkillStore":
        self.sealed = True
        return self

    def to_list(self) -> list[dict]:
        return [skill_to_dict(s) for s in self._skills.values()]

    def digest(self) -> str:
        """Stable content hash over skills, budget, and sealed flag."""
        doc = {
            "skills": self.to_list(),
            "budget": {
                "max_skills": self.budget.max_skills,
                "max_skill_chars": self.budget.max_skill_chars,
                "max_total_chars": self.budget.max_total_chars,
            },
            "sealed": self.sealed,
        }
        payload = json.dumps(doc, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _unknown_message(self, name: str) -> str:
        known = ", ".join(self._skills) if self._skills else "(store is empty)"
        return f"no skill named {name!r}; known skills: {known}"

    def _check_writable(self):
        if self.sealed:
            raise StoreSealed("store is sealed; no further writes are allowed")

    def _check_schema(self, candidate: Skill):
        violations = validate_skill(candidate, self.budget)
        structural = [v for v in violations if v.code not in _BUDGET_CODES]
        over_budget = [v for v in violations if v.code in _BUDGET_CODES]
        if structural:
            raise SchemaViolation(structural)
        if over_budget:
            raise BudgetExceeded("; ".join(v.message for v in over_budget))

    def _check_total(self, projected_total: int):
        cap = self.budget.max_total_chars
        if cap is not None and projected_total > cap:
            raise BudgetExceeded(
                f"total body budget is {cap} chars; this write would reach {projected_total}")


def skill_to_dict(skill: Skill) -> dict:
    return {
        "name": skill.name,
        "description": skill.description,
        "body": skill.body,
        "references": dict(skill.references),
        "scripts": dict(skill.scripts),
    }


def skill_from_dict(doc: Mapping) -> Skill:
    unknown = set(doc) - set(SKILL_FIELDS)
    if unknown:
        raise ValueError(f"unknown skill fields: {sorted(unknown)}")
    return Skill(
        name=doc.get("name", ""),
        description=doc.get("description", ""),
        body=doc.get("body", ""),
        references=dict(doc.get("references") or {}),
        scripts=dict(doc.get("scripts") or {}),
    )


def save_skills(path: str | Path, skills: list[Skill]) -> None:
    docs = [skill_to_dict(s) for s in skills]
    Path(path).write_text(json.dumps(docs, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_skills(path: str | Path) -> list[Skill]:
    docs = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(docs, list):
        raise ValueError("skill file must hold a JSON array of skill documents")
    return [skill_from_dict(d) for d in docs]
