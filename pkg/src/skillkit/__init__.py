"""Agent skill lifecycle toolkit.

Extract reusable skills from agent trajectories, inject them into prompts,
measure their utility on benchmarks, and judge skill quality pairwise.
"""

from .extraction import (
    ExtractionConfig,
    Pattern,
    PatternSet,
    analyze_trajectory,
    consolidate,
    extract,
    merge_call_count,
    merge_plan,
    rewrite_format,
    synthesize_skills,
)
from .gateway import (
    ChatRequest,
    ChatResponse,
    Message,
    OpenAIChatProvider,
    RetryPolicy,
    ScriptedProvider,
    ToolCall,
    ToolSpec,
    complete,
    fan_out,
)
from .injection import (
    DisclosureSession,
    handle_skill_block,
    parse_single,
    render_multi_preamble,
    render_single,
    respond_to_message,
)
from .judge import (
    JudgeConfig,
    JudgeVerdict,
    RubricDimension,
    SkillPair,
    SkillResult,
    bucket_accuracy,
    build_pairs,
    discover_rubric,
    emit_meta_skill,
    filter_validated,
    judge_pair_guided,
    judge_pair_unguided,
    validate_rubric,
)
from .metrics import (
    FactorDesign,
    FriedmanResult,
    RunRecord,
    UtilityMatrix,
    build_matrices,
    delta,
    extraction_efficacy,
    friedman_test,
    negative_transfer_rate,
    sigma_ratio,
    target_evolvability,
)
from .pool import (
    ExperiencePool,
    SplitSpec,
    Step,
    Trajectory,
    render_trajectory,
    sample_by_success_ratio,
    split_tasks,
)
from .store import Skill, SkillBudget, SkillStore, validate_skill

__version__ = "0.1.0"

__all__ = [
    "ChatRequest",
    "ChatResponse",
    "DisclosureSession",
    "ExperiencePool",
    "ExtractionConfig",
    "FactorDesign",
    "FriedmanResult",
    "JudgeConfig",
    "JudgeVerdict",
    "Message",
    "OpenAIChatProvider",
    "Pattern",
    "PatternSet",
    "RetryPolicy",
    "RubricDimension",
    "RunRecord",
    "ScriptedProvider",
    "Skill",
    "SkillBudget",
    "SkillPair",
    "SkillResult",
    "SkillStore",
    "SplitSpec",
    "Step",
    "ToolCall",
    "ToolSpec",
    "Trajectory",
    "UtilityMatrix",
    "analyze_trajectory",
    "bucket_accuracy",
    "build_matrices",
    "build_pairs",
    "complete",
    "consolidate",
    "delta",
    "discover_rubric",
    "emit_meta_skill",
    "extract",
    "extraction_efficacy",
    "fan_out",
    "filter_validated",
    "friedman_test",
    "handle_skill_block",
    "judge_pair_guided",
    "judge_pair_unguided",
    "merge_call_count",
    "merge_plan",
    "negative_transfer_rate",
    "parse_single",
    "render_multi_preamble",
    "render_single",
    "render_trajectory",
    "respond_to_message",
    "rewrite_format",
    "sample_by_success_ratio",
    "sigma_ratio",
    "split_tasks",
    "synthesize_skills",
    "target_evolvability",
    "validate_skill",
]
