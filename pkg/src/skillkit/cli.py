"""Command-line entry points.

Subcommands mirror the pipeline stages: extract skills from a trajectory
pool, render skill documents for prompt injection, report utility metrics
over benchmark runs, judge skill pairs, and discover/validate a rubric.

Exit codes: 0 on success, 1 on runtime failure (missing data files, bad
records, pipeline errors), 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .config import (
    AppConfig,
    ConfigError,
    build_provider,
    extraction_config,
    judge_config,
    load_config,
)
from .extraction import (
    FormatRewriteFailed,
    SynthesisStalled,
    extract,
    merge_call_count,
    merge_plan,
)
from .gateway import GatewayError, Provider
from .injection import render_multi_preamble, render_single
from .judge import (
    JudgeError,
    bucket_accuracy,
    discover_rubric,
    emit_meta_skill,
    filter_validated,
    judge_pair_guided,
    judge_pair_unguided,
    load_pairs,
    load_rubric,
    save_rubric,
    save_verdicts,
    validate_rubric,
)
from .metrics import (
    MetricsError,
    build_matrices,
    load_run_records,
    matrix_report,
    render_matrix_text,
)
from .pool import PoolError, load_pool, sample_by_success_ratio
from .store import SkillBudget, SkillStore, SkillStoreError, load_skills, save_skills

RUNTIME_ERRORS = (
    SkillStoreError,
    PoolError,
    GatewayError,
    MetricsError,
    JudgeError,
    SynthesisStalled,
    FormatRewriteFailed,
    OSError,
    ValueError,
    KeyError,
)


def _provider_and_model(config: AppConfig, provider_id: str) -> tuple[Provider, str]:
    provider = build_provider(config, provider_id)
    spec = config.providers[provider_id]
    return provider, (spec.model or provider_id)


def cmd_extract(args: argparse.Namespace) -> int:
    if (args.ratio is None) != (args.size is None):
        print("error: --ratio and --size must be given together", file=sys.stderr)
        return 2
    config = load_config(args.config)
    provider, model = _provider_and_model(config, args.provider)
    guidance = None
    if args.guidance_text is not None:
        guidance = args.guidance_text
    elif args.guidance is not None:
        guidance = Path(args.guidance).read_text(encoding="utf-8").rstrip("\n")
    extraction = extraction_config(config, model, guidance=guidance)
    pool = load_pool(args.pool)
    if args.ratio is not None:
        seed = config.seed if args.seed is None else args.seed
        pool = sample_by_success_ratio(pool, args.ratio, args.size, seed)
    store = extract(pool, extraction, provider)
    save_skills(args.out, list(store.skills))
    count = len(pool.trajectories)
    print(f"pool: {count} trajectories, "
          f"{len(pool.successes)} success / {len(pool.failures)} failure")
    plan = merge_plan(count, extraction.group_size)
    calls = merge_call_count(count, extraction.group_size)
    print(f"consolidation levels: {len(plan)}, merge calls: {calls}")
    for skill in store.skills:
        print(f"skill: {skill.name} ({len(skill.body)} body chars)")
    print(f"wrote {args.out}")
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    skills = load_skills(args.skills)
    if not skills:
        print("error: skill file holds no skills", file=sys.stderr)
        return 1
    if args.mode == "single":
        if len(skills) != 1:
            print(f"error: mode mismatch: single-skill rendering needs exactly "
                  f"one skill, file holds {len(skills)}", file=sys.stderr)
            return 1
        text = render_single(skills[0])
    else:
        budget = SkillBudget(
            max_skills=len(skills),
            max_skill_chars=max(max(len(s.body) for s in skills), 1),
        )
        store = SkillStore(budget)
        for skill in skills:
            store.create_skill(skill)
        store.seal()
        text = render_multi_preamble(store)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    records = load_run_records(args.runs)
    matrices, problems = build_matrices(records)
    for problem in problems:
        print(f"warning: {problem}", file=sys.stderr)
    total_cells = sum(len(m.delta) for m in matrices.values())
    if total_cells == 0:
        print("error: no delta cells could be computed from the runs",
              file=sys.stderr)
        return 1
    if args.json:
        text = json.dumps(matrix_report(matrices), indent=2, ensure_ascii=False)
    else:
        if args.color == "always":
            color = True
        elif args.color == "never":
            color = False
        else:
            color = args.out is None and sys.stdout.isatty()
        parts = [render_matrix_text(m, color=color) for m in matrices.values()]
        overall = matrix_report(matrices)["overall_negative_transfer"]
        parts.append(
            f"overall negative transfer: {overall['negative']}/{overall['cells']} "
            f"({100.0 * overall['rate']:.1f}%)")
        text = "\n\n".join(parts)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def cmd_judge(args: argparse.Namespace) -> int:
    if args.votes is not None and (args.votes < 1 or args.votes % 2 == 0):
        print(f"error: --votes must be a positive odd number, got {args.votes}",
              file=sys.stderr)
        return 2
    config = load_config(args.config)
    provider, model = _provider_and_model(config, args.provider)
    judge_cfg = judge_config(config, model)
    if args.votes is not None:
        judge_cfg = replace(judge_cfg, votes=args.votes)
    if args.seed is not None:
        judge_cfg = replace(judge_cfg, seed=args.seed)
    pairs = load_pairs(args.pairs)
    if not pairs:
        print("error: pair file holds no pairs", file=sys.stderr)
        return 1
    rubric = None
    if args.rubric and args.rubric != "none":
        rubric = load_rubric(args.rubric)
    verdicts = []
    judged_pairs = []
    failures: list[tuple[str, str]] = []
    for pair in pairs:
        try:
            if rubric is None:
                verdict = judge_pair_unguided(pair, provider, judge_cfg)
            else:
                verdict = judge_pair_guided(pair, rubric, provider, judge_cfg)
        except (JudgeError, GatewayError) as exc:
            failures.append((pair.pair_id, str(exc)))
            continue
        verdicts.append(verdict)
        judged_pairs.append(pair)
    if not verdicts:
        print("error: every pair failed to judge", file=sys.stderr)
        for pair_id, message in failures:
            print(f"  {pair_id}: {message}", file=sys.stderr)
        return 1
    save_verdicts(args.out, verdicts)
    mode = "guided" if rubric is not None else "unguided"
    correct = sum(1 for v in verdicts if v.correct)
    print(f"pairs judged: {len(verdicts)}/{len(pairs)} ({mode})")
    print(f"accuracy: {correct}/{len(verdicts)} "
          f"({100.0 * correct / len(verdicts):.1f}%)")
    for label, stat in bucket_accuracy(judged_pairs, verdicts).items():
        print(f"  gap {label}: {stat.correct}/{stat.total} "
              f"({100.0 * stat.accuracy:.1f}%)")
    if failures:
        print(f"failed pairs: {len(failures)}")
        for pair_id, message in failures:
            print(f"  {pair_id}: {message}")
    print(f"wrote {args.out}")
    return 0


def cmd_rubric(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    provider, model = _provider_and_model(config, args.provider)
    judge_cfg = judge_config(config, model)
    pairs = load_pairs(args.pairs)
    if not pairs:
        print("error: pair file holds no pairs", file=sys.stderr)
        return 1
    dimensions = discover_rubric(
        pairs, provider, judge_cfg,
        max_dimensions=args.dims, batch_size=args.batch_size)
    print(f"dimensions discovered: {len(dimensions)}")
    validated = list(dimensions)
    if dimensions and not args.skip_validation:
        dimensions = validate_rubric(dimensions, pairs, provider, judge_cfg)
        validated = filter_validated(dimensions, threshold=args.threshold)
        for dim in dimensions:
            marker = " *" if dim in validated else ""
            print(f"  {dim.name}: better-rate {dim.better_rate:.3f}{marker}")
        print(f"validated at threshold {args.threshold}: {len(validated)}")
    save_rubric(args.out, dimensions)
    print(f"wrote {args.out}")
    if args.validated_out:
        save_rubric(args.validated_out, validated)
        print(f"wrote {args.validated_out}")
    if args.meta_out:
        if validated:
            Path(args.meta_out).write_text(
                emit_meta_skill(validated) + "\n", encoding="utf-8")
            print(f"wrote {args.meta_out}")
        else:
            print("no validated dimensions; guidance text not emitted",
                  file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skillkit",
        description="Extract, inject, measure, and judge agent skills.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_extract = sub.add_parser(
        "extract", help="distill a skill store from a trajectory pool")
    p_extract.add_argument("--config", required=True)
    p_extract.add_argument("--pool", required=True,
                           help="trajectory JSONL file")
    p_extract.add_argument("--provider", required=True,
                           help="provider id declared in the config")
    p_extract.add_argument("--out", required=True, help="output skill JSON file")
    guidance = p_extract.add_mutually_exclusive_group()
    guidance.add_argument("--guidance",
                          help="file with guidance text for extraction prompts")
    guidance.add_argument("--guidance-text",
                          help="guidance text given inline")
    p_extract.add_argument("--ratio", type=float,
                           help="success ratio for pre-extraction subsampling")
    p_extract.add_argument("--size", type=int,
                           help="subsample size (with --ratio)")
    p_extract.add_argument("--seed", type=int,
                           help="subsampling seed (defaults to config seed)")
    p_extract.set_defaults(func=cmd_extract)

    p_render = sub.add_parser(
        "render", help="render skills as injection-ready text")
    p_render.add_argument("--skills", required=True, help="skill JSON file")
    p_render.add_argument("--mode", choices=("single", "multi"),
                          default="single")
    p_render.add_argument("--out", help="write here instead of stdout")
    p_render.set_defaults(func=cmd_render)

    p_report = sub.add_parser(
        "report", help="utility matrices from benchmark run records")
    p_report.add_argument("--runs", required=True, help="run-record JSONL file")
    p_report.add_argument("--json", action="store_true",
                          help="emit a JSON report instead of text tables")
    p_report.add_argument("--color", choices=("auto", "always", "never"),
                          default="auto")
    p_report.add_argument("--out", help="write here instead of stdout")
    p_report.set_defaults(func=cmd_report)

    p_judge = sub.add_parser(
        "judge", help="pairwise-judge skill pairs against measured deltas")
    p_judge.add_argument("--config", required=True)
    p_judge.add_argument("--pairs", required=True, help="pair JSONL file")
    p_judge.add_argument("--provider", required=True)
    p_judge.add_argument("--out", required=True, help="verdict JSONL file")
    p_judge.add_argument("--rubric", default=None,
                         help="rubric JSON for guided judging "
                              "('none' or absent: unguided)")
    p_judge.add_argument("--votes", type=int)
    p_judge.add_argument("--seed", type=int)
    p_judge.set_defaults(func=cmd_judge)

    p_rubric = sub.add_parser(
        "rubric", help="discover and validate a judging rubric from pairs")
    p_rubric.add_argument("--config", required=True)
    p_rubric.add_argument("--pairs", required=True, help="pair JSONL file")
    p_rubric.add_argument("--provider", required=True)
    p_rubric.add_argument("--out", required=True, help="rubric JSON file")
    p_rubric.add_argument("--dims", type=int, default=7,
                          help="maximum dimension count")
    p_rubric.add_argument("--batch-size", type=int, default=20)
    p_rubric.add_argument("--threshold", type=float, default=0.64)
    p_rubric.add_argument("--skip-validation", action="store_true")
    p_rubric.add_argument("--validated-out",
                          help="write the validated subset here")
    p_rubric.add_argument("--meta-out",
                          help="write validated-dimension guidance text here")
    p_rubric.set_defaults(func=cmd_rubric)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
