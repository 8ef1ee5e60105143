"""Entropy-guided branching search over language-model rollouts.

The engine spots high-entropy token positions in a rollout, queues the
prefixes before them as jobs in a pool, expands each by greedily replacing
the uncertain token, and accepts results either against a gold answer or by
the closing-tag entropy stopping rule. A benchmark harness adds datasets,
baselines, budget sweeps, metrics, and cost accounting on top.
"""

from .backends import (
    EOT,
    ApiBackend,
    Backend,
    DecodeParams,
    GenerationResult,
    ToyBackend,
    ToyModelSpec,
    detokenize,
    enumerate_all_rollouts,
    load_toy_spec,
    parse_toy_spec,
    path_probability,
)
from .bench import (
    AblationRow,
    BenchReport,
    GpuPriceSheet,
    PriceSheet,
    Problem,
    SweepReport,
    SweepRow,
    ablation_csv,
    ablation_sweep,
    budget_sweep,
    compute_cost,
    compute_gpu_cost,
    emit_report,
    load_dataset,
    outcome_cost,
    pick_verifier_mode,
    render_prompt,
    report_csv,
    report_text,
    run_benchmark,
    run_random_baseline,
    sweep_csv,
    trace_jsonl,
    validate_template,
    write_trace,
)
from .errors import (
    BackendUnavailable,
    ConfigError,
    ContextOverflow,
    DuplicateId,
    EmptyDistribution,
    HNDecodeError,
    IoError,
    MassExceedsOne,
    NoAlternative,
    NoAnswerFound,
    NoBoundaries,
    ParseError,
    PoolEmpty,
    ReplayUnsupported,
    TreeTooLarge,
)
from .engine import (
    JobPool,
    PartialRollout,
    Rollout,
    SolveOutcome,
    TraceRecorder,
    branch_rollout,
    expand_job,
    run_initial_rollout,
    solve,
)
from .entropy import (
    BranchConfig,
    BranchPoint,
    EntropyProfile,
    TokenDistribution,
    branch_degree,
    distribution_from_probs,
    entropy_profile,
    normalize_distribution,
    select_vulnerable_positions,
    shannon_entropy,
)
from .verifier import (
    Answer,
    EATStats,
    eat_decision,
    eat_statistics,
    extract_answer,
    find_think_boundaries,
    think_region_end,
    verify_answer,
)

__version__ = "0.1.0"

__all__ = [
    "AblationRow",
    "Answer",
    "EOT",
    "ApiBackend",
    "Backend",
    "BackendUnavailable",
    "BenchReport",
    "BranchConfig",
    "BranchPoint",
    "ConfigError",
    "ContextOverflow",
    "DecodeParams",
    "DuplicateId",
    "EATStats",
    "EmptyDistribution",
    "EntropyProfile",
    "GenerationResult",
    "GpuPriceSheet",
    "HNDecodeError",
    "IoError",
    "JobPool",
    "MassExceedsOne",
    "NoAlternative",
    "NoAnswerFound",
    "NoBoundaries",
    "ParseError",
    "PartialRollout",
    "PoolEmpty",
    "PriceSheet",
    "Problem",
    "ReplayUnsupported",
    "Rollout",
    "SolveOutcome",
    "SweepReport",
    "SweepRow",
    "TokenDistribution",
    "ToyBackend",
    "ToyModelSpec",
    "TraceRecorder",
    "TreeTooLarge",
    "ablation_csv",
    "ablation_sweep",
    "branch_degree",
    "branch_rollout",
    "budget_sweep",
    "compute_cost",
    "compute_gpu_cost",
    "detokenize",
    "distribution_from_probs",
    "eat_decision",
    "eat_statistics",
    "emit_report",
    "enumerate_all_rollouts",
    "entropy_profile",
    "expand_job",
    "extract_answer",
    "find_think_boundaries",
    "load_dataset",
    "load_toy_spec",
    "normalize_distribution",
    "outcome_cost",
    "parse_toy_spec",
    "path_probability",
    "pick_verifier_mode",
    "render_prompt",
    "report_csv",
    "report_text",
    "run_benchmark",
    "run_initial_rollout",
    "run_random_baseline",
    "select_vulnerable_positions",
    "shannon_entropy",
    "solve",
    "sweep_csv",
    "think_region_end",
    "trace_jsonl",
    "validate_template",
    "verify_answer",
    "write_trace",
]
