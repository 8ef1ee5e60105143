"""Benchmark harness: datasets, prompt templating, runs, sweeps, costs, reports.

Accounting conventions (also in the README): input tokens are the prompt
tokens of every completion call; output tokens are all generated tokens,
counting each branch's replacement token as one; the greedy replacement
probe's repeated-prefix input cost is not double-counted. Elapsed seconds are
the sum of per-call backend latencies, which on the toy backend come from a
deterministic virtual clock.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path

from . import kernels
from .backends.base import Backend, DecodeParams
from .engine import SolveOutcome, TraceRecorder, solve
from .entropy import BranchConfig
from .errors import ConfigError, DuplicateId, IoError, ParseError

DEFAULT_TEMPLATE = (
    "You are given a question between\n"
    "the tags:\n"
    "<|question|> and <|/question|>.\n"
    "\n"
    "<|question|>\n"
    "{user_question}\n"
    "<|/question|>\n"
    "\n"
    "First, think about the question and provide a step-by-step reasoning "
    "process between the tags:\n"
    "<think>\n"
    "...\n"
    "</think>\n"
    "\n"
    "Finally, on a new line print only the final answer:\n"
    "a single number with no extra text or formatting.\n"
)

PLACEHOLDER = "{user_question}"

# zero-width space, inserted after "<|" in questions so embedded tag text
# can never terminate the question block
_TAG_SENTINEL = "​"

MODES = ("hn", "base", "random")

CSV_HEADER = "id,solved,first_trial,jobs,success_depth,input_tokens,output_tokens,elapsed_s,cost_cents"

SWEEP_CSV_HEADER = "budget_units,budget_tokens,accuracy_entropy,accuracy_random"

ABLATION_CSV_HEADER = "parameter,value,accuracy,mean_elapsed_s"

BUDGET_UNIT_TOKENS = 128


@dataclass(frozen=True)
class Problem:
    """One benchmark item; gold_answer None means no reference is known."""

    id: str
    question: str
    gold_answer: Decimal | None
    source: str


def load_dataset(path: str | Path) -> list[Problem]:
    """Read tab-separated problems: id, source, answer, question.

    ``#`` lines and blank lines are skipped; an answer of ``-`` means no gold
    answer; the question field may contain further tabs.
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read dataset {p}: {exc}") from exc
    problems: list[Problem] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t", 3)
        if len(fields) != 4:
            raise ParseError(
                f"expected 4 tab-separated fields, got {len(fields)}",
                path=str(p),
                line=lineno,
            )
        pid, source, answer_text, question = fields
        if not pid:
            raise ParseError("empty id", path=str(p), line=lineno)
        if pid in seen:
            raise DuplicateId(f"{p}:{lineno}: duplicate problem id {pid!r}")
        if not question.strip():
            raise ParseError("empty question", path=str(p), line=lineno)
        if answer_text == "-":
            gold = None
        else:
            try:
                gold = Decimal(answer_text)
            except InvalidOperation:
                raise ParseError(
                    f"unparsable answer {answer_text!r}", path=str(p), line=lineno
                ) from None
        seen.add(pid)
        problems.append(Problem(id=pid, question=question, gold_answer=gold, source=source))
    return problems


def validate_template(template: str) -> None:
    if not template.strip():
        raise ConfigError("prompt template is empty")
    if PLACEHOLDER not in template:
        raise ConfigError(f"prompt template lacks the {PLACEHOLDER} placeholder")


def render_prompt(question: str, template: str | None = None) -> str:
    """Substitute the question into the prompt template.

    Questions containing "<|" get a zero-width space inserted after it, so
    embedded tag lookalikes cannot close the question block.
    """
    if not question:
        raise ValueError("question is empty")
    tpl = DEFAULT_TEMPLATE if template is None else template
    escaped = question.replace("<|", "<|" + _TAG_SENTINEL)
    return tpl.replace(PLACEHOLDER, escaped)


@dataclass(frozen=True)
class PriceSheet:
    """Dollars per million tokens, as API providers quote them."""

    input_price: float
    output_price: float

    def validate(self) -> None:
        if self.input_price < 0 or self.output_price < 0:
            raise ConfigError("prices must be >= 0")


@dataclass(frozen=True)
class GpuPriceSheet:
    """Dollars per GPU-hour, for locally hosted runs billed by wall time."""

    hourly_rate: float

    def validate(self) -> None:
        if self.hourly_rate < 0:
            raise ConfigError("gpu rate must be >= 0")


def compute_cost(input_tokens: int, output_tokens: int, prices: PriceSheet) -> float:
    """Cost in cents at per-million-token prices."""
    if input_tokens < 0 or output_tokens < 0:
        raise ValueError("token counts must be >= 0")
    dollars = (
        input_tokens * prices.input_price + output_tokens * prices.output_price
    ) / 1e6
    return 100.0 * dollars


def compute_gpu_cost(elapsed_s: float, prices: GpuPriceSheet) -> float:
    """Cost in cents of ``elapsed_s`` seconds at an hourly GPU rate."""
    return 100.0 * (elapsed_s / 3600.0) * prices.hourly_rate


def outcome_cost(outcome: SolveOutcome, prices: "PriceSheet | GpuPriceSheet | None") -> float:
    if prices is None:
        return 0.0
    if isinstance(prices, GpuPriceSheet):
        return compute_gpu_cost(outcome.elapsed_s, prices)
    return compute_cost(outcome.input_tokens, outcome.output_tokens, prices)


@dataclass
class BenchReport:
    """Per-problem outcomes plus the aggregate metrics."""

    mode: str
    verifier_mode: str
    outcomes: list[SolveOutcome]
    aggregates: dict[str, float | int | None]

    @classmethod
    def build(cls, mode: str, verifier_mode: str, outcomes: list[SolveOutcome]) -> "BenchReport":
        return cls(
            mode=mode,
            verifier_mode=verifier_mode,
            outcomes=outcomes,
            aggregates=_aggregate(outcomes),
        )

    @property
    def accuracy(self) -> float:
        # empty runs aggregate to {"n_problems": 0} with no accuracy key
        return self.aggregates.get("accuracy") or 0.0


def _aggregate(outcomes: list[SolveOutcome]) -> dict[str, float | int | None]:
    n = len(outcomes)
    if n == 0:
        return {"n_problems": 0}
    solved = [o for o in outcomes if o.solved]

    def mean(values: list[float]) -> float:
        return sum(values) / len(values)

    return {
        "n_problems": n,
        "base_accuracy": 100.0 * sum(o.solved_on_first_trial for o in outcomes) / n,
        "accuracy": 100.0 * len(solved) / n,
        "mean_jobs": mean([o.jobs_created for o in outcomes]),
        "max_jobs": max(o.jobs_created for o in outcomes),
        "mean_success_job_rate": mean([o.success_job_rate for o in solved]) if solved else None,
        "mean_success_depth": mean([o.success_depth for o in solved]) if solved else None,
        "mean_elapsed_s": mean([o.elapsed_s for o in outcomes]),
        "mean_input_tokens": mean([o.input_tokens for o in outcomes]),
        "mean_output_tokens": mean([o.output_tokens for o in outcomes]),
    }


def pick_verifier_mode(problems: list[Problem], requested: str | None) -> str:
    """Oracle when every problem has a gold answer, self-acceptance otherwise.

    An explicit request wins; requesting oracle without full gold coverage is
    a configuration error.
    """
    have_all_gold = all(p.gold_answer is not None for p in problems)
    if requested is None:
        return "oracle" if have_all_gold else "eat"
    if requested == "oracle" and not have_all_gold:
        missing = next(p.id for p in problems if p.gold_answer is None)
        raise ConfigError(f"oracle verification requested but problem {missing!r} has no gold answer")
    return requested


def run_benchmark(
    problems: list[Problem],
    cfg: BranchConfig,
    backend: Backend,
    params: DecodeParams,
    mode: str = "hn",
    verifier_mode: str | None = None,
    token_budget: int | None = None,
    workers: int = 1,
    template: str | None = None,
    trace: TraceRecorder | None = None,
) -> BenchReport:
    """Solve every problem and aggregate the metrics.

    ``base`` mode runs root rollouts only (the job cap is forced to 1, which
    admits just the root), so its accuracy is the pass@1 base accuracy.
    Problems run in dataset order; with multiple workers they run
    concurrently but trace events are still merged in dataset order, keeping
    output bytes independent of scheduling.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    cfg.validate()
    if template is not None:
        validate_template(template)
    vmode = pick_verifier_mode(problems, verifier_mode)
    run_cfg = replace(cfg, max_num_create_jobs=1) if mode == "base" else cfg
    selection = "random" if mode == "random" else "entropy"

    if trace is not None:
        trace.emit(
            "run_meta",
            backend=backend.name,
            kernel=kernels.KERNEL_IMPL,
            mode=mode,
            verifier=vmode,
            selection=selection,
            seed=run_cfg.seed,
            max_num_create_jobs=run_cfg.max_num_create_jobs,
            max_mcts_depth=run_cfg.max_mcts_depth,
            max_degree=run_cfg.max_degree,
            min_degree=run_cfg.min_degree,
            degree_depth_decay=run_cfg.degree_depth_decay,
            pool_policy=run_cfg.pool_policy,
            region=run_cfg.region,
            entropy_floor=run_cfg.entropy_floor,
            tau1=run_cfg.tau1,
            tau2=run_cfg.tau2,
            token_budget=token_budget,
            n_problems=len(problems),
        )

    def solve_one(problem: Problem) -> tuple[SolveOutcome, TraceRecorder]:
        local = TraceRecorder()
        outcome = solve(
            prompt=render_prompt(problem.question, template),
            cfg=run_cfg,
            backend=backend,
            params=params,
            verifier_mode=vmode,
            gold=problem.gold_answer,
            problem_id=problem.id,
            token_budget=token_budget,
            selection=selection,
            trace=local,
        )
        return outcome, local

    if workers <= 1 or len(problems) <= 1:
        results = [solve_one(p) for p in problems]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve_one, problems))

    outcomes = []
    for outcome, local in results:
        outcomes.append(outcome)
        if trace is not None:
            trace.events.extend(local.events)
    return BenchReport.build(mode, vmode, outcomes)


def run_random_baseline(
    problems: list[Problem],
    cfg: BranchConfig,
    backend: Backend,
    params: DecodeParams,
    **kwargs,
) -> BenchReport:
    """The control run: same search, but branch points chosen at random."""
    return run_benchmark(problems, cfg, backend, params, mode="random", **kwargs)


@dataclass(frozen=True)
class SweepRow:
    budget_units: int
    budget_tokens: int
    accuracy_entropy: float
    accuracy_random: float


@dataclass
class SweepReport:
    rows: list[SweepRow]


def budget_sweep(
    problems: list[Problem],
    cfg: BranchConfig,
    backend: Backend,
    params: DecodeParams,
    budgets: list[int],
    verifier_mode: str | None = None,
    workers: int = 1,
    template: str | None = None,
) -> SweepReport:
    """Accuracy of entropy vs random selection at each token budget.

    Budgets are units of 128 generated tokens per problem and must be
    strictly increasing.
    """
    if not budgets:
        raise ConfigError("budget list is empty")
    if any(b <= 0 for b in budgets):
        raise ConfigError("budgets must be positive")
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ConfigError("budgets must be strictly increasing")
    rows = []
    for units in budgets:
        cap = units * BUDGET_UNIT_TOKENS
        ent = run_benchmark(
            problems, cfg, backend, params, mode="hn",
            verifier_mode=verifier_mode, token_budget=cap, workers=workers,
            template=template,
        )
        rnd = run_benchmark(
            problems, cfg, backend, params, mode="random",
            verifier_mode=verifier_mode, token_budget=cap, workers=workers,
            template=template,
        )
        rows.append(SweepRow(units, cap, ent.accuracy, rnd.accuracy))
    return SweepReport(rows)


@dataclass(frozen=True)
class AblationRow:
    parameter: str
    value: float
    accuracy: float
    mean_elapsed_s: float


ABLATION_INT_FIELDS = {"max_degree", "min_degree", "max_mcts_depth", "max_num_create_jobs"}
ABLATION_FLOAT_FIELDS = {"degree_depth_decay", "tau1", "tau2", "entropy_floor"}


def ablation_sweep(
    problems: list[Problem],
    cfg: BranchConfig,
    backend: Backend,
    params: DecodeParams,
    parameter: str,
    values: list[float],
    verifier_mode: str | None = None,
    workers: int = 1,
    template: str | None = None,
) -> list[AblationRow]:
    """Re-run the benchmark once per value of one branching parameter."""
    if parameter not in ABLATION_INT_FIELDS | ABLATION_FLOAT_FIELDS:
        raise ConfigError(f"cannot sweep parameter {parameter!r}")
    rows = []
    for value in values:
        cast = int(value) if parameter in ABLATION_INT_FIELDS else float(value)
        swept = replace(cfg, **{parameter: cast})
        swept.validate()
        report = run_benchmark(
            problems, swept, backend, params, mode="hn",
            verifier_mode=verifier_mode, workers=workers, template=template,
        )
        rows.append(
            AblationRow(parameter, cast, report.accuracy, report.aggregates["mean_elapsed_s"])
        )
    return rows


# - report serialization ---------------------------------------------------

def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return f"{value:.6f}"


AGG_ORDER = (
    "n_problems",
    "base_accuracy",
    "accuracy",
    "mean_jobs",
    "max_jobs",
    "mean_success_job_rate",
    "mean_success_depth",
    "mean_elapsed_s",
    "mean_input_tokens",
    "mean_output_tokens",
)


def report_csv(report: BenchReport, prices: "PriceSheet | GpuPriceSheet | None" = None) -> str:
    """Byte-stable CSV: one row per problem, then '#agg'-prefixed footers."""
    lines = [CSV_HEADER]
    for o in report.outcomes:
        lines.append(
            ",".join(
                [
                    o.problem_id,
                    _fmt(o.solved),
                    _fmt(o.solved_on_first_trial),
                    str(o.jobs_created),
                    "" if o.success_depth is None else str(o.success_depth),
                    str(o.input_tokens),
                    str(o.output_tokens),
                    f"{o.elapsed_s:.6f}",
                    f"{outcome_cost(o, prices):.6f}",
                ]
            )
        )
    for key in AGG_ORDER:
        if key in report.aggregates:
            lines.append(f"#agg,{key},{_fmt(report.aggregates[key])}")
    if report.outcomes and prices is not None:
        mean_cost = sum(outcome_cost(o, prices) for o in report.outcomes) / len(report.outcomes)
        lines.append(f"#agg,mean_cost_cents,{mean_cost:.6f}")
    return "\n".join(lines) + "\n"


def report_text(report: BenchReport, prices: "PriceSheet | GpuPriceSheet | None" = None) -> str:
    """Human-oriented summary of the aggregates."""
    lines = [f"mode: {report.mode}", f"verifier: {report.verifier_mode}"]
    for key in AGG_ORDER:
        if key in report.aggregates:
            lines.append(f"{key}: {_fmt(report.aggregates[key])}")
    if report.outcomes and prices is not None:
        mean_cost = sum(outcome_cost(o, prices) for o in report.outcomes) / len(report.outcomes)
        lines.append(f"mean_cost_cents: {mean_cost:.6f}")
    return "\n".join(lines) + "\n"


def sweep_csv(report: SweepReport) -> str:
    lines = [SWEEP_CSV_HEADER]
    for row in report.rows:
        lines.append(
            f"{row.budget_units},{row.budget_tokens},"
            f"{row.accuracy_entropy:.6f},{row.accuracy_random:.6f}"
        )
    return "\n".join(lines) + "\n"


def ablation_csv(rows: list[AblationRow]) -> str:
    lines = [ABLATION_CSV_HEADER]
    for row in rows:
        value = str(row.value) if isinstance(row.value, int) else f"{row.value:g}"
        lines.append(f"{row.parameter},{value},{row.accuracy:.6f},{row.mean_elapsed_s:.6f}")
    return "\n".join(lines) + "\n"


def trace_jsonl(trace: TraceRecorder) -> str:
    """One sorted-key JSON object per line; identical runs give identical bytes."""
    return "".join(
        json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n"
        for e in trace.events
    )


def write_trace(trace: TraceRecorder, path: str | Path) -> None:
    try:
        Path(path).write_text(trace_jsonl(trace), encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(f"cannot write trace {path}: {exc}") from exc


def emit_report(
    report: BenchReport,
    format: str,
    path: str | Path,
    prices: "PriceSheet | GpuPriceSheet | None" = None,
) -> None:
    """Write a report to ``path``; format is 'csv' or 'text'."""
    if format == "csv":
        payload = report_csv(report, prices)
    elif format == "text":
        payload = report_text(report, prices)
    else:
        raise ConfigError(f"unknown report format {format!r}")
    try:
        Path(path).write_text(payload, encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc
