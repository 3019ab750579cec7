"""Skill injection protocols for downstream agents.

Two delivery modes: a single skill inlined into the system prompt, and a
multi-skill library preamble with read-only disclosure tools the agent
drives through ```skill``` blocks. Rendering is byte-stable; the templates
here are pinned by a conformance fixture in the test suite.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .store import Skill, SkillStore

SINGLE_HEADER = (
    "## Skill Reference\n"
    "\n"
    "Below is a reusable procedural skill extracted from previous successful "
    "problem-solving experiences. It may help you solve the current task more "
    "effectively. Use it as a reference -- adapt it to the specific task at hand."
)

SINGLE_FOOTER = (
    "Note: This skill is an optional aid, not a mandatory procedure. "
    "Use your own judgment."
)

REFERENCE_HEADING = "#### Reference Files"
SCRIPT_HEADING = "#### Script Files"

MULTI_TOOLS = ("list_skills", "view_skill", "read_skill_file")

MULTI_TEMPLATE = (
    "## Skill Library\n"
    "\n"
    "You have access to a Skill Library containing [N] reusable procedural "
    "skills extracted from previous successful problem-solving experiences. "
    "These skills may help you solve the current task more effectively.\n"
    "\n"
    "Available skill tools.\n"
    "- list_skills: see all available skills (name, description).\n"
    "- view_skill <skill_name>: read the full body of a specific skill; also "
    "lists attached file names.\n"
    "- read_skill_file <skill_name> <filename>: read the content of an attached "
    "reference or script.\n"
    "\n"
    "How to use skill tools. Call a skill tool with a ```skill ... ``` block "
    "(NOT a ```python ... ``` block).\n"
    "\n"
    "Workflow.\n"
    "1. At the start, call list_skills to see what is available.\n"
    "2. If a skill seems relevant, call view_skill to read its body.\n"
    "3. If it has attached files, use read_skill_file.\n"
    "4. Adapt the skill's guidance to the specific task.\n"
    "5. After consulting skills, proceed with ```python ... ``` code blocks.\n"
    "\n"
    "Important notes. Skill tools are read-only. Each response should contain "
    "EITHER a ```skill``` block OR a ```python``` block, not both. Skills are "
    "optional aids, not mandatory procedures."
)

PROTOCOL_REMINDER = (
    "Protocol reminder: each response must contain EITHER a ```skill``` block "
    "OR a ```python``` block, not both. The skill block was ignored; resend "
    "one block type at a time."
)


def _file_section(heading: str, files) -> str | None:
    if not files:
        return None
    lines = [heading]
    lines.extend(f"{name}: {content}" for name, content in files.items())
    return "\n".join(lines)


def render_single(skill: Skill) -> str:
    """Render one skill as an inline prompt section.

    Reference and script sections are omitted entirely when empty; the
    section always ends with the optional-aid note.
    """
    parts = [
        SINGLE_HEADER,
        f"### {skill.name}",
        skill.description,
        skill.body,
    ]
    for heading, files in ((REFERENCE_HEADING, skill.references),
                           (SCRIPT_HEADING, skill.scripts)):
        section = _file_section(heading, files)
        if section is not None:
            parts.append(section)
    parts.append(SINGLE_FOOTER)
    return "\n\n".join(parts)


def parse_single(rendered: str) -> tuple[str, str, str]:
    """Recover (name, description, body) from a render_single section.

    Assumes the description holds no blank lines and the body does not embed
    the literal file-section headings, which matches what the store schema
    and synthesis prompts produce.
    """
    prefix = SINGLE_HEADER + "\n\n### "
    if not rendered.startswith(prefix):
        raise ValueError("text does not start with the single-skill header")
    rest = rendered[len(prefix):]
    name, _, rest = rest.partition("\n\n")
    description, _, rest = rest.partition("\n\n")
    if not name or not description:
        raise ValueError("missing name or description")
    end = len(rest)
    for marker in (f"\n\n{REFERENCE_HEADING}\n", f"\n\n{SCRIPT_HEADING}\n",
                   f"\n\n{SINGLE_FOOTER}"):
        idx = rest.find(marker)
        if idx != -1:
            end = min(end, idx)
    return name, description, rest[:end]


def render_multi_preamble(store: SkillStore) -> str:
    """Render the library preamble advertising the disclosure tools."""
    return MULTI_TEMPLATE.replace("[N]", str(len(store)))


@dataclass
class DisclosureSession:
    """Read-only tool session over a sealed store.

    Every handled block and its response land in the transcript, in order.
    """

    store: SkillStore
    transcript: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        if not self.store.sealed:
            raise ValueError("disclosure sessions require a sealed store")


def _list_skills(store: SkillStore) -> str:
    return "\n".join(f"- {s.name}: {s.description}" for s in store.skills)


def _attached_names(skill: Skill) -> str:
    names = list(skill.references) + list(skill.scripts)
    return ", ".join(names) if names else "(none)"


def _unknown_skill(store: SkillStore, name: str) -> str:
    known = ", ".join(store.names) if len(store) else "(none)"
    return f"error: no skill named {name!r}. Available skills: {known}"


def handle_skill_block(session: DisclosureSession, block: str) -> str:
    """Execute one ```skill``` block body and return the in-band reply.

    The first whitespace-separated token names the tool; the rest are
    arguments. Errors come back as text, never exceptions, so the calling
    agent loop can always continue. Filenames with spaces cannot be
    addressed by this grammar; attachments should use space-free names.
    """
    tokens = block.strip().split()
    store = session.store
    if not tokens:
        reply = f"error: empty skill block. Available tools: {', '.join(MULTI_TOOLS)}"
    else:
        tool, args = tokens[0], tokens[1:]
        if tool == "list_skills":
            reply = _list_skills(store) if len(store) else "(no skills available)"
        elif tool == "view_skill":
            if len(args) != 1:
                reply = "error: usage: view_skill <skill_name>"
            elif args[0] not in store:
                reply = _unknown_skill(store, args[0])
            else:
                skill = store.get(args[0])
                reply = f"{skill.body}\n\nAttached files: {_attached_names(skill)}"
        elif tool == "read_skill_file":
            if len(args) != 2:
                reply = "error: usage: read_skill_file <skill_name> <filename>"
            elif args[0] not in store:
                reply = _unknown_skill(store, args[0])
            else:
                skill = store.get(args[0])
                files = {**skill.references, **skill.scripts}
                if args[1] not in files:
                    reply = (
                        f"error: skill {args[0]!r} has no attached file {args[1]!r}. "
                        f"Attached files: {_attached_names(skill)}"
                    )
                else:
                    reply = files[args[1]]
        else:
            reply = (
                f"error: unknown skill tool {tool!r}. "
                f"Available tools: {', '.join(MULTI_TOOLS)}"
            )
    session.transcript.append((block, reply))
    return reply


_SKILL_BLOCK_RE = re.compile(r"```skill\s*\n(.*?)```", re.DOTALL)
_CODE_BLOCK_RE = re.compile(r"```python\s*\n.*?```", re.DOTALL)


def respond_to_message(session: DisclosureSession, text: str) -> str | None:
    """Route a full agent message through the disclosure protocol.

    Returns the tool reply for a lone skill block, a protocol reminder when
    a skill block and a python block appear together, and None when the
    message holds no skill block at all.
    """
    skill_match = _SKILL_BLOCK_RE.search(text)
    if skill_match is None:
        return None
    if _CODE_BLOCK_RE.search(text):
        session.transcript.append((skill_match.group(1), PROTOCOL_REMINDER))
        return PROTOCOL_REMINDER
    return handle_skill_block(session, skill_match.group(1))
