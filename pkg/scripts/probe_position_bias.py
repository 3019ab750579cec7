"""Measure how presentation-order randomization neutralizes a biased judge.

Simulates two judges over the same pair set: one that always votes for
whichever skill appears first, and one that reads the content. With the
per-pair randomized ordering, the first-slot judge should land near 50%
while the content judge stays at 100%.

Usage:
    python3 scripts/probe_position_bias.py [--pairs N] [--seed S]
"""

from __future__ import annotations

import argparse
import json

from skillkit.gateway import ChatResponse
from skillkit.judge import (
    JudgeConfig,
    SkillPair,
    SkillResult,
    bucket_accuracy,
    judge_pair_unguided,
)

GAPS = (0.7, 1.5, 3.0, 6.0)


class FunctionJudge:
    serial_only = True

    def __init__(self, fn):
        self.fn = fn

    def send(self, request):
        return self.fn(request)


def make_pair(index: int) -> SkillPair:
    gap = GAPS[index % len(GAPS)]
    high = SkillResult(
        skill_id=f"strong-{index}", delta=gap, target="agent", domain="demo",
        body=f"STRONG habit {index}: verify state before acting.")
    low = SkillResult(
        skill_id=f"weak-{index}", delta=0.0, target="agent", domain="demo",
        body=f"WEAK habit {index}: proceed and hope.")
    return SkillPair(pair_id=f"demo:agent:{index}", high=high, low=low)


def first_slot_vote(request) -> ChatResponse:
    return ChatResponse(text=json.dumps({"choice": "Skill 1"}))


def content_vote(request) -> ChatResponse:
    strong_first = request.system.index("STRONG") < request.system.index("WEAK")
    return ChatResponse(
        text=json.dumps({"choice": "Skill 1" if strong_first else "Skill 2"}))


def run_judge(name: str, fn, pairs, config) -> None:
    provider = FunctionJudge(fn)
    verdicts = [judge_pair_unguided(pair, provider, config) for pair in pairs]
    correct = sum(v.correct for v in verdicts)
    print(f"{name}: {correct}/{len(pairs)} correct "
          f"({100.0 * correct / len(pairs):.1f}%)")
    for label, stat in bucket_accuracy(pairs, verdicts).items():
        print(f"  gap {label}: {stat.correct}/{stat.total} "
              f"({100.0 * stat.accuracy:.1f}%)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    pairs = [make_pair(i) for i in range(args.pairs)]
    config = JudgeConfig(votes=1, seed=args.seed)
    run_judge("first-slot judge", first_slot_vote, pairs, config)
    run_judge("content judge", content_vote, pairs, config)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
