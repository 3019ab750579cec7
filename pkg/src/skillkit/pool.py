"""Trajectory pools: loading, deterministic splits, ratio sampling, rendering.

A pool is a homogeneous set of trajectories (one domain, one target model).
Everything here is pure data handling; no model calls.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

DEFAULT_RENDER_CAP = 60_000


class PoolError(Exception):
    pass


class EmptyInput(PoolError):
    pass


class InsufficientTrajectories(PoolError):
    """Raised when a sample asks for more of one outcome class than exists."""

    def __init__(self, kind: str, needed: int, available: int):
        self.kind = kind
        self.needed = needed
        self.available = available
        super().__init__(
            f"need {needed} {kind} trajectories but pool only has {available}")


@dataclass(frozen=True)
class Step:
    """One agent step. Only the action is mandatory."""

    action: str
    think: str | None = None
    observation: str | None = None

    def __post_init__(self):
        if not self.action:
            raise ValueError("step action must not be empty")


@dataclass(frozen=True)
class Trajectory:
    id: str
    task: str
    steps: tuple[Step, ...]
    outcome: bool
    reward: float
    final_answer: str | None = None
    domain: str = ""
    target_model: str = ""

    def __post_init__(self):
        if not self.id:
            raise ValueError("trajectory id must not be empty")
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise ValueError(f"trajectory {self.id!r} has no steps")


@dataclass(frozen=True)
class ExperiencePool:
    """Trajectories sharing a domain and target model, ids unique."""

    trajectories: tuple[Trajectory, ...]
    domain: str = ""
    target_model: str = ""

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        if not self.trajectories:
            raise EmptyInput("pool must hold at least one trajectory")
        if not self.domain:
            object.__setattr__(self, "domain", self.trajectories[0].domain)
        if not self.target_model:
            object.__setattr__(self, "target_model", self.trajectories[0].target_model)
        seen: set[str] = set()
        for t in self.trajectories:
            if t.domain != self.domain or t.target_model != self.target_model:
                raise ValueError(
                    f"trajectory {t.id!r} belongs to ({t.domain!r}, {t.target_model!r}), "
                    f"pool is ({self.domain!r}, {self.target_model!r})")
            if t.id in seen:
                raise ValueError(f"duplicate trajectory id {t.id!r}")
            seen.add(t.id)

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def successes(self) -> tuple[Trajectory, ...]:
        return tuple(t for t in self.trajectories if t.outcome)

    @property
    def failures(self) -> tuple[Trajectory, ...]:
        return tuple(t for t in self.trajectories if not t.outcome)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be strictly between 0 and 1")


def round_half_up(value: float) -> int:
    """Round to the nearest integer, with exact halves going up.

    Values are pre-rounded to 9 decimals so binary noise in products like
    fraction * count cannot flip a true half downward.
    """
    return math.floor(round(value, 9) + 0.5)


def split_tasks(task_ids: Sequence[str], spec: SplitSpec) -> tuple[list[str], list[str]]:
    """Partition task ids into (train, test), deterministic for a given seed.

    The train side gets round-half-up(train_fraction * n) ids.
    """
    if not task_ids:
        raise EmptyInput("cannot split an empty task list")
    shuffled = list(task_ids)
    random.Random(spec.seed).shuffle(shuffled)
    train_size = round_half_up(spec.train_fraction * len(shuffled))
    return shuffled[:train_size], shuffled[train_size:]


def sample_by_success_ratio(
    pool: ExperiencePool, ratio: float, size: int, seed: int = 0
) -> ExperiencePool:
    """Draw a sub-pool with an exact success share.

    The sample holds round-half-up(ratio * size) successes and the rest
    failures, drawn without replacement, deterministic for a given seed.
    Original pool order is preserved in the result.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    if size < 1:
        raise ValueError("size must be positive")
    n_success = round_half_up(ratio * size)
    n_failure = size - n_success
    successes = pool.successes
    failures = pool.failures
    if n_success > len(successes):
        raise InsufficientTrajectories("success", n_success, len(successes))
    if n_failure > len(failures):
        raise InsufficientTrajectories("failure", n_failure, len(failures))
    rng = random.Random(seed)
    chosen = set()
    chosen.update(t.id for t in rng.sample(list(successes), n_success))
    chosen.update(t.id for t in rng.sample(list(failures), n_failure))
    picked = tuple(t for t in pool.trajectories if t.id in chosen)
    return ExperiencePool(picked, pool.domain, pool.target_model)


def _step_block(step: Step) -> str:
    lines = []
    if step.think is not None:
        lines.append(f"[think] {step.think}")
    lines.append(f"[action] {step.action}")
    if step.observation is not None:
        lines.append(f"[obs] {step.observation}")
    return "\n".join(lines)


def render_trajectory(trajectory: Trajectory, max_chars: int = DEFAULT_RENDER_CAP) -> str:
    """Render a trajectory as analysis-ready text.

    Layout: an outcome/reward/task header, one block per step with
    [think]/[action]/[obs] lines, and a final-answer line when present.
    If the text would exceed max_chars, middle steps are dropped and an
    elision marker notes how many were cut.
    """
    header = (
        f"Outcome: {'success' if trajectory.outcome else 'failure'}\n"
        f"Reward: {format(trajectory.reward, 'g')}\n"
        f"Task: {trajectory.task}"
    )
    blocks = [_step_block(s) for s in trajectory.steps]
    footer = f"Final answer: {trajectory.final_answer}" if trajectory.final_answer is not None else None

    def assemble(parts: list[str]) -> str:
        tail = [footer] if footer is not None else []
        return "\n\n".join([header, *parts, *tail])

    text = assemble(blocks)
    if len(text) <= max_chars:
        return text

    def marker(count: int) -> str:
        return f"[... {count} steps elided ...]"

    # Move whole step blocks from the middle out to head/tail, alternating,
    # while the assembled text with an elision marker still fits.
    head: list[str] = []
    tail: list[str] = []
    remaining = list(blocks)
    while remaining:
        take_from_head = len(head) <= len(tail)
        block = remaining[0] if take_from_head else remaining[-1]
        trial_head = head + [block] if take_from_head else head
        trial_tail = ([block] + tail) if not take_from_head else tail
        trial = assemble(trial_head + [marker(len(remaining) - 1)] + trial_tail)
        if len(trial) > max_chars:
            break
        head, tail = trial_head, trial_tail
        remaining = remaining[1:] if take_from_head else remaining[:-1]

    result = assemble(head + [marker(len(remaining))] + tail)
    if len(result) > max_chars:
        # Even the header plus marker is over the cap; cut hard.
        result = result[: max(0, max_chars - 4)] + "\n..."
    return result


def trajectory_to_dict(trajectory: Trajectory) -> dict:
    return {
        "id": trajectory.id,
        "task": trajectory.task,
        "steps": [
            {"think": s.think, "action": s.action, "observation": s.observation}
            for s in trajectory.steps
        ],
        "outcome": trajectory.outcome,
        "reward": trajectory.reward,
        "final_answer": trajectory.final_answer,
        "domain": trajectory.domain,
        "target_model": trajectory.target_model,
    }


def trajectory_from_dict(doc: Mapping) -> Trajectory:
    steps = tuple(
        Step(
            action=s.get("action", ""),
            think=s.get("think"),
            observation=s.get("observation"),
        )
        for s in doc.get("steps", [])
    )
    return Trajectory(
        id=doc.get("id", ""),
        task=doc.get("task", ""),
        steps=steps,
        outcome=bool(doc["outcome"]),
        reward=float(doc.get("reward", 0.0)),
        final_answer=doc.get("final_answer"),
        domain=doc.get("domain", ""),
        target_model=doc.get("target_model", ""),
    )


def save_trajectories(path: str | Path, trajectories: Iterable[Trajectory]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in trajectories:
            fh.write(json.dumps(trajectory_to_dict(t), ensure_ascii=False) + "\n")


def load_trajectories(path: str | Path) -> list[Trajectory]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(trajectory_from_dict(json.loads(line)))
    return out


def load_pool(path: str | Path) -> ExperiencePool:
    return ExperiencePool(tuple(load_trajectories(path)))
