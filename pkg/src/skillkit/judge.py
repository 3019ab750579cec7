"""Pairwise skill judging and rubric discovery.

A judge model compares two skill documents and picks the one it expects to
help an agent more. Ground truth is the measured utility delta of each
skill, so pairs are built only where the deltas are far enough apart to
call one skill genuinely better. Verdicts use an odd number of sampled
votes with the presentation order flipped at random per vote, which keeps
position bias out of the majority.

Rubric discovery turns the same pairs into a reusable quality checklist:
contrast each pair, consolidate the observed differences into at most a
handful of named dimensions, then keep the dimensions that actually track
the better skill often enough.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from functools import partial
from itertools import combinations
from pathlib import Path
from statistics import fmean
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

from . import prompts
from .gateway import (
    ChatRequest,
    MalformedModelOutput,
    Message,
    Provider,
    RetryPolicy,
    complete,
    extract_json,
    fan_out,
)

DEFAULT_VOTES = 9
DEFAULT_MIN_GAP = 0.5
DEFAULT_VALIDATION_THRESHOLD = 0.64
DEFAULT_MAX_DIMENSIONS = 7

HIGH = "high"
LOW = "low"

#: (low edge, high edge, label); a gap g falls in the first bucket with
#: low < g < high for the open first interval, then lo <= g < hi.
GAP_BUCKETS = (
    (0.5, 1.0, "0.5-1"),
    (1.0, 2.0, "1-2"),
    (2.0, 5.0, "2-5"),
    (5.0, float("inf"), ">=5"),
)


class JudgeError(Exception):
    pass


class AllVotesUnparseable(JudgeError):
    """Every sampled vote failed to parse, including the re-samples."""


@dataclass(frozen=True)
class SkillResult:
    """A rendered skill document plus its measured utility delta."""

    skill_id: str
    body: str
    delta: float
    target: str
    domain: str
    extractor: str = ""

    def __post_init__(self):
        if not self.skill_id:
            raise ValueError("skill_id must be non-empty")
        if not self.body:
            raise ValueError("body must be non-empty")


@dataclass(frozen=True)
class SkillPair:
    """Two skills for the same domain and target, oriented by delta.

    high is the skill with the larger measured delta; a judge vote is
    counted correct when it lands on high.
    """

    pair_id: str
    high: SkillResult
    low: SkillResult

    def __post_init__(self):
        if (self.high.domain, self.high.target) != (self.low.domain, self.low.target):
            raise ValueError("paired skills must share domain and target")
        if self.high.delta < self.low.delta:
            raise ValueError("high must carry the larger delta")

    @property
    def gap(self) -> float:
        return self.high.delta - self.low.delta

    @property
    def domain(self) -> str:
        return self.high.domain

    @property
    def target(self) -> str:
        return self.high.target


def build_pairs(
    results: Sequence[SkillResult], min_gap: float = DEFAULT_MIN_GAP
) -> list[SkillPair]:
    """All unordered same-domain, same-target pairs with gap above min_gap.

    The gap must be strictly greater than min_gap; equal deltas never pair.
    Orientation is normalised so that high really is higher.
    """
    groups: dict[tuple[str, str], list[SkillResult]] = {}
    for result in results:
        groups.setdefault((result.domain, result.target), []).append(result)
    pairs = []
    for group in groups.values():
        for a, b in combinations(group, 2):
            if abs(a.delta - b.delta) <= min_gap:
                continue
            high, low = (a, b) if a.delta > b.delta else (b, a)
            pair_id = f"{high.domain}:{high.target}:{high.skill_id}-vs-{low.skill_id}"
            pairs.append(SkillPair(pair_id=pair_id, high=high, low=low))
    return pairs


def bucket_label(gap: float) -> str:
    if gap <= GAP_BUCKETS[0][0]:
        raise ValueError(f"gap {gap} is at or below the pairing floor")
    for low_edge, high_edge, label in GAP_BUCKETS:
        if gap < high_edge:
            return label
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class JudgeConfig:
    model: str = "judge"
    votes: int = DEFAULT_VOTES
    seed: int = 0
    temperature: float = 1.0
    reasoning_effort: str = "medium"
    retry: RetryPolicy | None = None
    concurrency: int = 8
    # Optional domain id -> human description used in judge prompts;
    # domains without an entry fall back to the raw id.
    domain_descriptions: Mapping[str, str] | None = None

    def __post_init__(self):
        if self.votes < 1 or self.votes % 2 == 0:
            raise ValueError(f"votes must be a positive odd number, got {self.votes}")
        if self.concurrency < 1:
            raise ValueError("concurrency must be at least 1")

    def describe(self, domain: str) -> str:
        if self.domain_descriptions and domain in self.domain_descriptions:
            return self.domain_descriptions[domain]
        return domain


@dataclass(frozen=True)
class JudgeVerdict:
    """Majority outcome of one judged pair.

    votes and orders run in parallel: votes[i] says which skill the i-th
    counted vote favoured, orders[i] whether high was shown as Skill 1.
    Discarded (unparseable) votes never appear here.
    """

    pair_id: str
    mode: str
    votes: tuple[str, ...]
    orders: tuple[str, ...]
    majority: str
    seed: int

    def __post_init__(self):
        if len(self.votes) % 2 == 0:
            raise ValueError("counted votes must be odd")
        if len(self.votes) != len(self.orders):
            raise ValueError("votes and orders must align")
        if any(v not in (HIGH, LOW) for v in self.votes):
            raise ValueError("votes must be 'high' or 'low'")

    @property
    def correct(self) -> bool:
        return self.majority == HIGH


def _vote_request(config: JudgeConfig, system: str) -> ChatRequest:
    return ChatRequest(
        model=config.model,
        system=system,
        temperature=config.temperature,
        reasoning_effort=config.reasoning_effort,
    )


def _parse_choice(text: str) -> str:
    data = extract_json(text)
    if not isinstance(data, dict):
        raise ValueError("expected a JSON object")
    choice = data.get("choice")
    if choice not in ("Skill 1", "Skill 2"):
        raise ValueError(f"choice must be 'Skill 1' or 'Skill 2', got {choice!r}")
    return choice


def _parse_guided(text: str, dimension_names: Sequence[str]) -> str:
    """Reduce a guided reply to a single choice.

    Dimension wins are counted first; a tie falls through to the holistic
    "overall" field, which then must name a winner.
    """
    data = extract_json(text)
    if not isinstance(data, dict) or not isinstance(data.get("dimensions"), dict):
        raise ValueError("expected {'dimensions': {...}, 'overall': ...}")
    wins = {"Skill 1": 0, "Skill 2": 0}
    for name in dimension_names:
        value = data["dimensions"].get(name)
        if value is None or value == "tie":
            continue
        if value not in wins:
            raise ValueError(f"dimension {name!r} has invalid value {value!r}")
        wins[value] += 1
    if wins["Skill 1"] != wins["Skill 2"]:
        return "Skill 1" if wins["Skill 1"] > wins["Skill 2"] else "Skill 2"
    overall = data.get("overall")
    if overall not in ("Skill 1", "Skill 2"):
        raise ValueError(f"tied dimensions need an overall winner, got {overall!r}")
    return overall


def _collect_votes(
    pair: SkillPair,
    provider: Provider,
    config: JudgeConfig,
    build_system: Callable[[str, str], str],
    parse: Callable[[str], str],
    mode: str,
) -> JudgeVerdict:
    """Shared vote loop for both judging modes.

    Each of config.votes slots draws a presentation order from the seeded
    stream, samples a reply, and re-samples once if the reply does not
    parse. A slot whose re-sample also fails is discarded; if that leaves
    an even count, the last counted vote is dropped too.

    The order stream is seeded per pair (base seed plus pair id) so that
    position bias cancels across a pair set instead of repeating one
    fixed flip pattern. String seeding avoids per-process hash salting.
    """
    rng = random.Random(f"{config.seed}:{pair.pair_id}")
    votes: list[str] = []
    orders: list[str] = []
    for _ in range(config.votes):
        high_first = rng.random() < 0.5
        first, second = (
            (pair.high.body, pair.low.body) if high_first
            else (pair.low.body, pair.high.body)
        )
        system = build_system(first, second)
        request = _vote_request(config, system)
        choice = None
        for _attempt in range(2):
            response = complete(provider, request, config.retry)
            try:
                choice = parse(response.text or "")
                break
            except ValueError:
                continue
        if choice is None:
            continue
        picked_first = choice == "Skill 1"
        votes.append(HIGH if picked_first == high_first else LOW)
        orders.append("high_first" if high_first else "low_first")
    if len(votes) % 2 == 0 and votes:
        votes.pop()
        orders.pop()
    if not votes:
        raise AllVotesUnparseable(f"no parseable votes for pair {pair.pair_id!r}")
    majority = HIGH if votes.count(HIGH) > votes.count(LOW) else LOW
    return JudgeVerdict(
        pair_id=pair.pair_id,
        mode=mode,
        votes=tuple(votes),
        orders=tuple(orders),
        majority=majority,
        seed=config.seed,
    )


def judge_pair_unguided(
    pair: SkillPair, provider: Provider, config: JudgeConfig | None = None
) -> JudgeVerdict:
    config = config or JudgeConfig()
    description = config.describe(pair.domain)

    def build_system(first: str, second: str) -> str:
        return prompts.unguided_judge_prompt(first, second, description)

    return _collect_votes(pair, provider, config, build_system, _parse_choice, "unguided")


def judge_pair_guided(
    pair: SkillPair,
    dimensions: Sequence[RubricDimension],
    provider: Provider,
    config: JudgeConfig | None = None,
) -> JudgeVerdict:
    if not dimensions:
        raise ValueError("guided judging needs at least one rubric dimension")
    config = config or JudgeConfig()
    description = config.describe(pair.domain)
    dim_pairs = [(d.name, d.definition) for d in dimensions]
    names = [d.name for d in dimensions]

    def build_system(first: str, second: str) -> str:
        return prompts.guided_judge_prompt(first, second, description, dim_pairs)

    return _collect_votes(
        pair, provider, config, build_system,
        lambda text: _parse_guided(text, names), "guided")


class BucketStat(NamedTuple):
    correct: int
    total: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total


def bucket_accuracy(
    pairs: Sequence[SkillPair], verdicts: Sequence[JudgeVerdict]
) -> dict[str, BucketStat]:
    """Judge accuracy split by delta-gap bucket.

    Every verdict must reference a known pair; pairs that were never
    judged are simply absent. Buckets with no judged pairs are omitted.
    """
    by_id = {p.pair_id: p for p in pairs}
    tallies: dict[str, list[int]] = {}
    for verdict in verdicts:
        pair = by_id.get(verdict.pair_id)
        if pair is None:
            raise ValueError(f"verdict references unknown pair {verdict.pair_id!r}")
        label = bucket_label(pair.gap)
        cell = tallies.setdefault(label, [0, 0])
        cell[0] += 1 if verdict.correct else 0
        cell[1] += 1
    out = {}
    for _, _, label in GAP_BUCKETS:
        if label in tallies:
            correct, total = tallies[label]
            out[label] = BucketStat(correct, total)
    return out


@dataclass(frozen=True)
class RubricDimension:
    name: str
    definition: str
    better_rate: float | None = None

    def __post_init__(self):
        if not self.name.strip():
            raise ValueError("dimension name must be non-empty")
        if not self.definition.strip():
            raise ValueError("dimension definition must be non-empty")


def _ask_json(
    provider: Provider,
    request: ChatRequest,
    parse: Callable[[str], object],
    retry: RetryPolicy | None,
    stage: str,
):
    """One call plus a single corrective re-ask, then give up loudly."""
    response = complete(provider, request, retry)
    text = response.text or ""
    try:
        return parse(text)
    except ValueError as exc:
        followup = replace(request, messages=(
            *request.messages,
            Message(role="assistant", content=text),
            Message(role="user", content=(
                f"Your reply could not be parsed: {exc}. "
                "Reply again with only the JSON.")),
        ))
        response = complete(provider, followup, retry)
        text = response.text or ""
        try:
            return parse(text)
        except ValueError as exc2:
            raise MalformedModelOutput(
                f"{stage}: {exc2}", raw=text) from exc2


def _parse_differences(text: str) -> list[str]:
    data = extract_json(text)
    if not isinstance(data, dict) or not isinstance(data.get("differences"), list):
        raise ValueError("expected {'differences': [...]}")
    out = []
    for item in data["differences"]:
        if not isinstance(item, str):
            raise ValueError("differences must be strings")
        if item.strip():
            out.append(item.strip())
    return out


def _parse_dimensions(text: str, max_dimensions: int) -> list[tuple[str, str]]:
    data = extract_json(text)
    if not isinstance(data, dict) or not isinstance(data.get("dimensions"), list):
        raise ValueError("expected {'dimensions': [...]}")
    dims: list[tuple[str, str]] = []
    seen = set()
    for item in data["dimensions"]:
        if not isinstance(item, dict):
            raise ValueError("each dimension must be an object")
        name = str(item.get("name", "")).strip()
        definition = str(item.get("definition", "")).strip()
        if not name or not definition:
            raise ValueError("dimensions need non-empty name and definition")
        if name in seen:
            raise ValueError(f"duplicate dimension name {name!r}")
        seen.add(name)
        dims.append((name, definition))
    if len(dims) > max_dimensions:
        raise ValueError(
            f"{len(dims)} dimensions exceed the cap of {max_dimensions}")
    return dims


def collect_differences(
    pairs: Sequence[SkillPair], provider: Provider, config: JudgeConfig | None = None
) -> list[list[str]]:
    """Stage one of rubric discovery: contrastive notes per pair."""
    config = config or JudgeConfig()

    def contrast(pair: SkillPair) -> list[str]:
        request = _vote_request(config, prompts.rubric_differences_prompt(
            pair.high.body, pair.low.body))
        return _ask_json(provider, request, _parse_differences, config.retry,
                         "difference collection")

    return fan_out(provider, [partial(contrast, pair) for pair in pairs],
                   max_workers=config.concurrency)


def consolidate_differences(
    differences: Sequence[str],
    provider: Provider,
    config: JudgeConfig | None = None,
    max_dimensions: int = DEFAULT_MAX_DIMENSIONS,
    batch_size: int = 20,
) -> list[RubricDimension]:
    """Stage two: fold difference notes into at most max_dimensions named
    dimensions, one batch at a time so arbitrarily many notes fit."""
    config = config or JudgeConfig()
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    current: list[tuple[str, str]] = []
    for start in range(0, len(differences), batch_size):
        batch = list(differences[start:start + batch_size])
        request = _vote_request(config, prompts.rubric_consolidate_prompt(
            current, batch, max_dimensions))
        current = _ask_json(
            provider, request,
            lambda text: _parse_dimensions(text, max_dimensions),
            config.retry, "rubric consolidation")
    return [RubricDimension(name, definition) for name, definition in current]


def discover_rubric(
    pairs: Sequence[SkillPair],
    provider: Provider,
    config: JudgeConfig | None = None,
    max_dimensions: int = DEFAULT_MAX_DIMENSIONS,
    batch_size: int = 20,
) -> list[RubricDimension]:
    """Contrast every pair, then consolidate the notes into a rubric.

    When no pair yields any difference note, the result is empty and no
    consolidation call is made.
    """
    per_pair = collect_differences(pairs, provider, config)
    flat = [note for notes in per_pair for note in notes]
    if not flat:
        return []
    return consolidate_differences(flat, provider, config, max_dimensions, batch_size)


def _parse_winner(text: str) -> str:
    data = extract_json(text)
    if not isinstance(data, dict):
        raise ValueError("expected a JSON object")
    winner = data.get("winner")
    if winner not in ("Skill 1", "Skill 2", "tie"):
        raise ValueError(
            f"winner must be 'Skill 1', 'Skill 2' or 'tie', got {winner!r}")
    return winner


def validate_rubric(
    dimensions: Sequence[RubricDimension],
    pairs: Sequence[SkillPair],
    provider: Provider,
    config: JudgeConfig | None = None,
) -> list[RubricDimension]:
    """Score each dimension by how often it points at the better skill.

    One single-dimension vote per (dimension, pair) cell, presentation
    order drawn from the seeded stream. The better one scores 1, a tie
    scores 0.5. A vote that stays unparseable after one corrective re-ask
    counts as a tie rather than sinking the whole validation.
    """
    if not pairs:
        raise ValueError("rubric validation needs at least one pair")
    config = config or JudgeConfig()
    rng = random.Random(config.seed)
    scored: list[RubricDimension] = []
    for dimension in dimensions:
        points: list[float] = []
        for pair in pairs:
            high_first = rng.random() < 0.5
            first, second = (
                (pair.high.body, pair.low.body) if high_first
                else (pair.low.body, pair.high.body)
            )
            request = _vote_request(config, prompts.rubric_dimension_vote_prompt(
                first, second, dimension.name, dimension.definition))
            try:
                winner = _ask_json(provider, request, _parse_winner,
                                   config.retry, "dimension vote")
            except MalformedModelOutput:
                points.append(0.5)
                continue
            if winner == "tie":
                points.append(0.5)
            else:
                picked_first = winner == "Skill 1"
                points.append(1.0 if picked_first == high_first else 0.0)
        scored.append(replace(dimension, better_rate=fmean(points)))
    return scored


def filter_validated(
    dimensions: Sequence[RubricDimension],
    threshold: float = DEFAULT_VALIDATION_THRESHOLD,
) -> list[RubricDimension]:
    """Keep dimensions whose better-rate reached the threshold."""
    kept = []
    for dimension in dimensions:
        if dimension.better_rate is None:
            raise ValueError(f"dimension {dimension.name!r} was never validated")
        if dimension.better_rate >= threshold:
            kept.append(dimension)
    return kept


META_SKILL_HEADER = "## Extraction Quality Guidance"


def emit_meta_skill(dimensions: Sequence[RubricDimension]) -> str:
    """Render validated dimensions as guidance text for extraction prompts.

    Deterministic layout: a fixed header, then one "### " section per
    dimension in the given order.
    """
    if not dimensions:
        raise ValueError("cannot emit guidance from an empty rubric")
    parts = [META_SKILL_HEADER]
    for dimension in dimensions:
        parts.append(f"### {dimension.name}\n\n{dimension.definition}")
    return "\n\n".join(parts)


def skill_result_to_dict(result: SkillResult) -> dict:
    return {
        "skill_id": result.skill_id,
        "body": result.body,
        "delta": result.delta,
        "target": result.target,
        "domain": result.domain,
        "extractor": result.extractor,
    }


def skill_result_from_dict(doc: Mapping) -> SkillResult:
    return SkillResult(
        skill_id=doc["skill_id"],
        body=doc["body"],
        delta=float(doc["delta"]),
        target=doc["target"],
        domain=doc["domain"],
        extractor=doc.get("extractor", ""),
    )


def pair_to_dict(pair: SkillPair) -> dict:
    return {
        "pair_id": pair.pair_id,
        "high": skill_result_to_dict(pair.high),
        "low": skill_result_to_dict(pair.low),
    }


def pair_from_dict(doc: Mapping) -> SkillPair:
    return SkillPair(
        pair_id=doc["pair_id"],
        high=skill_result_from_dict(doc["high"]),
        low=skill_result_from_dict(doc["low"]),
    )


def verdict_to_dict(verdict: JudgeVerdict) -> dict:
    return {
        "pair_id": verdict.pair_id,
        "mode": verdict.mode,
        "votes": list(verdict.votes),
        "orders": list(verdict.orders),
        "majority": verdict.majority,
        "seed": verdict.seed,
    }


def verdict_from_dict(doc: Mapping) -> JudgeVerdict:
    return JudgeVerdict(
        pair_id=doc["pair_id"],
        mode=doc["mode"],
        votes=tuple(doc["votes"]),
        orders=tuple(doc["orders"]),
        majority=doc["majority"],
        seed=int(doc["seed"]),
    )


def _save_jsonl(path: str | Path, docs: Iterable[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc, ensure_ascii=False) + "\n")


def _load_jsonl(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def save_skill_results(path: str | Path, results: Iterable[SkillResult]) -> None:
    _save_jsonl(path, (skill_result_to_dict(r) for r in results))


def load_skill_results(path: str | Path) -> list[SkillResult]:
    return [skill_result_from_dict(doc) for doc in _load_jsonl(path)]


def save_pairs(path: str | Path, pairs: Iterable[SkillPair]) -> None:
    _save_jsonl(path, (pair_to_dict(p) for p in pairs))


def load_pairs(path: str | Path) -> list[SkillPair]:
    return [pair_from_dict(doc) for doc in _load_jsonl(path)]


def save_verdicts(path: str | Path, verdicts: Iterable[JudgeVerdict]) -> None:
    _save_jsonl(path, (verdict_to_dict(v) for v in verdicts))


def load_verdicts(path: str | Path) -> list[JudgeVerdict]:
    return [verdict_from_dict(doc) for doc in _load_jsonl(path)]


def save_rubric(path: str | Path, dimensions: Iterable[RubricDimension]) -> None:
    docs = [
        {"name": d.name, "definition": d.definition, "better_rate": d.better_rate}
        for d in dimensions
    ]
    Path(path).write_text(
        json.dumps(docs, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_rubric(path: str | Path) -> list[RubricDimension]:
    docs = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        RubricDimension(
            name=doc["name"],
            definition=doc["definition"],
            better_rate=doc.get("better_rate"),
        )
        for doc in docs
    ]
