"""The branching search loop over model rollouts.

A problem starts with one root rollout. Whenever a rollout fails
verification, its highest-entropy positions (inside the thinking region by
default) become branch points: for each, a partial rollout holding the prefix
before that position is queued in a job pool. Expanding a job replaces the
uncertain token with the best differing alternative (greedy, excluding the
original) and decodes to completion. The process stops at the first accepted
rollout, or when the job cap, token budget, or pool is exhausted.

Determinism: every random draw is seeded from (config seed, problem id, a
purpose label, a lineage key), never from call order, so a given (spec,
config, seed) triple always yields identical outcomes and traces.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from decimal import Decimal
from random import Random

from .backends.base import Backend, DecodeParams, detokenize
from .entropy import (
    BranchConfig,
    BranchPoint,
    TokenDistribution,
    entropy_profile,
    branch_degree,
    select_vulnerable_positions,
    shannon_entropy,
)
from .errors import (
    BackendUnavailable,
    ContextOverflow,
    NoAlternative,
    NoAnswerFound,
    NoBoundaries,
    PoolEmpty,
)
from .seeding import derive_seed, rng_for
from .verifier import (
    ACCEPT,
    Answer,
    eat_decision,
    eat_statistics,
    extract_answer,
    think_region_end,
    verify_answer,
)

SELECTION_MODES = ("entropy", "random")
VERIFIER_MODES = ("oracle", "eat")

STATUS_COMPLETED = "completed"
STATUS_ACCEPTED = "accepted"
STATUS_FAILED = "failed"


@dataclass
class Rollout:
    """One complete (or failed) generation attempt."""

    id: str
    number: int
    parent_job_id: str | None
    parent_rollout_id: str | None
    depth: int
    prompt: str
    tokens: tuple[str, ...]
    distributions: tuple[TokenDistribution, ...]
    finish_reason: str
    status: str
    lineage_key: str
    tokens_generated: int
    branch_position: int | None = None
    branched_positions: set[int] = field(default_factory=set)
    answer: Answer | None = None

    @property
    def text(self) -> str:
        """Generated text only; the prompt is not included."""
        return detokenize(self.tokens)


@dataclass(frozen=True)
class PartialRollout:
    """A queued job: a rollout prefix cut just before an uncertain token."""

    id: str
    number: int
    parent_rollout_id: str
    depth: int
    prefix_tokens: tuple[str, ...]
    prefix_distributions: tuple[TokenDistribution, ...]
    branch_position: int
    original_token: str
    branch_entropy: float
    branched_positions: frozenset[int]
    lineage_key: str


class JobPool:
    """Pending partial rollouts plus the lifetime creation counter.

    ``created_count`` includes the root rollout (job number 1) and can never
    exceed ``max_create``; the check and increment are atomic.
    """

    def __init__(self, policy: str, rng: Random, max_create: int):
        self.policy = policy
        self.rng = rng
        self.max_create = max_create
        self.pending: list[PartialRollout] = []
        self.created_count = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.pending)

    def register_root(self) -> int:
        with self._lock:
            self.created_count += 1
            return self.created_count

    def try_create(self, factory) -> PartialRollout | None:
        """Reserve a job number and enqueue factory(number); None at the cap."""
        with self._lock:
            if self.created_count >= self.max_create:
                return None
            self.created_count += 1
            job = factory(self.created_count)
            self.pending.append(job)
            return job

    def draw(self) -> PartialRollout:
        with self._lock:
            if not self.pending:
                raise PoolEmpty("no pending jobs")
            if self.policy == "fifo":
                idx = 0
            elif self.policy == "max-entropy-first":
                idx = min(
                    range(len(self.pending)),
                    key=lambda i: (-self.pending[i].branch_entropy, self.pending[i].number),
                )
            else:  # uniform-random
                idx = self.rng.randrange(len(self.pending))
            return self.pending.pop(idx)


@dataclass
class SolveOutcome:
    """What one problem cost and whether it was solved."""

    problem_id: str
    solved: bool
    solved_on_first_trial: bool
    jobs_created: int
    success_depth: int | None
    input_tokens: int
    output_tokens: int
    elapsed_s: float
    winning_rollout: Rollout | None
    rollouts: list[Rollout]

    @property
    def total_tokens(self) -> int:
        """Generated tokens; the quantity token budgets cap."""
        return self.output_tokens

    @property
    def success_job_rate(self) -> float:
        if not self.rollouts:
            return 0.0
        accepted = sum(1 for r in self.rollouts if r.status == STATUS_ACCEPTED)
        return accepted / len(self.rollouts)


class TraceRecorder:
    """Ordered event dicts for one run; the harness serializes them."""

    def __init__(self) -> None:
        self.events: list[dict] = []

    def emit(self, kind: str, **fields) -> None:
        self.events.append({"event": kind, **fields})


class _NullTrace(TraceRecorder):
    def emit(self, kind: str, **fields) -> None:
        pass


@dataclass
class _Accounting:
    input_tokens: int = 0
    output_tokens: int = 0
    elapsed_s: float = 0.0

    def remaining(self, budget: int | None) -> int | None:
        return None if budget is None else budget - self.output_tokens


def _empty_rollout(
    rid: str,
    number: int,
    job: PartialRollout | None,
    prompt: str,
    lineage: str,
    depth: int,
    reason: str,
) -> Rollout:
    prefix = job.prefix_tokens if job else ()
    dists = job.prefix_distributions if job else ()
    return Rollout(
        id=rid,
        number=number,
        parent_job_id=job.id if job else None,
        parent_rollout_id=job.parent_rollout_id if job else None,
        depth=depth,
        prompt=prompt,
        tokens=prefix,
        distributions=dists,
        finish_reason=reason,
        status=STATUS_FAILED,
        lineage_key=lineage,
        tokens_generated=0,
        branch_position=job.branch_position if job else None,
        branched_positions=set(job.branched_positions) if job else set(),
    )


def run_initial_rollout(
    prompt: str,
    cfg: BranchConfig,
    backend: Backend,
    params: DecodeParams,
    problem_id: str = "p0",
    max_new_tokens: int | None = None,
) -> tuple[Rollout, int, float]:
    """Depth-0 rollout; returns (rollout, prompt_tokens, elapsed_s)."""
    mt = params.max_tokens if max_new_tokens is None else min(params.max_tokens, max_new_tokens)
    call = replace(
        params, seed=derive_seed(cfg.seed, problem_id, "call", "root"), max_tokens=mt
    )
    try:
        result = backend.complete(prompt, call)
    except (BackendUnavailable, ContextOverflow):
        return _empty_rollout("r1", 1, None, prompt, "root", 0, "end-of-text"), 0, 0.0
    rollout = Rollout(
        id="r1",
        number=1,
        parent_job_id=None,
        parent_rollout_id=None,
        depth=0,
        prompt=prompt,
        tokens=result.tokens,
        distributions=result.distributions,
        finish_reason=result.finish_reason,
        status=STATUS_COMPLETED,
        lineage_key="root",
        tokens_generated=len(result.tokens),
    )
    return rollout, result.prompt_tokens, result.elapsed_s


def branch_rollout(
    rollout: Rollout,
    cfg: BranchConfig,
    pool: JobPool,
    trace: TraceRecorder | None = None,
    selection: str = "entropy",
    problem_id: str = "p0",
) -> int:
    """Queue partial rollouts at this rollout's branch points; returns how many."""
    trace = trace or _NullTrace()
    if rollout.status != STATUS_COMPLETED or rollout.depth >= cfg.max_mcts_depth:
        return 0
    end = (
        think_region_end(rollout.tokens)
        if cfg.region == "think-only"
        else len(rollout.tokens)
    )
    k = branch_degree(rollout.depth, cfg)
    if selection == "entropy":
        profile = entropy_profile(list(rollout.distributions))
        points = select_vulnerable_positions(
            profile, k, (0, end), rollout.branched_positions, cfg.entropy_floor
        )
    elif selection == "random":
        rng = rng_for(cfg.seed, problem_id, "randsel", rollout.lineage_key)
        candidates = [p for p in range(end) if p not in rollout.branched_positions]
        chosen = sorted(rng.sample(candidates, min(k, len(candidates))))
        points = [
            BranchPoint(p, shannon_entropy(rollout.distributions[p]), i + 1)
            for i, p in enumerate(chosen)
        ]
    else:
        raise ValueError(f"unknown selection mode {selection!r}")

    # children inherit every position selected in this call, so no lineage
    # ever branches the same index twice
    inherited = frozenset(rollout.branched_positions | {pt.position for pt in points})
    created = 0
    for pt in points:
        def make(number: int, pt: BranchPoint = pt) -> PartialRollout:
            return PartialRollout(
                id=f"j{number}",
                number=number,
                parent_rollout_id=rollout.id,
                depth=rollout.depth + 1,
                prefix_tokens=rollout.tokens[: pt.position],
                prefix_distributions=rollout.distributions[: pt.position],
                branch_position=pt.position,
                original_token=rollout.tokens[pt.position],
                branch_entropy=pt.entropy,
                branched_positions=inherited,
                lineage_key=f"{rollout.lineage_key}@{pt.position}",
            )

        job = pool.try_create(make)
        if job is None:
            break
        created += 1
        trace.emit(
            "job_created",
            problem=problem_id,
            id=job.id,
            parent=rollout.id,
            depth=job.depth,
            position=job.branch_position,
            original=job.original_token,
            entropy=job.branch_entropy,
            created_count=pool.created_count,
        )
    rollout.branched_positions |= {pt.position for pt in points}
    return created


def expand_job(
    job: PartialRollout,
    cfg: BranchConfig,
    backend: Backend,
    params: DecodeParams,
    prompt: str,
    problem_id: str = "p0",
    max_new_tokens: int | None = None,
) -> tuple[Rollout, int, float]:
    """Expand one job; returns (rollout, prompt_tokens_spent, elapsed_s).

    The prefix distributions are reused from the parent rather than
    re-scored: the prefix and model are identical, so the teacher-forced
    distributions are too.
    """
    rid = f"r{job.number}"
    prefix_text = prompt + detokenize(job.prefix_tokens)
    try:
        replacement, dist = backend.greedy_next_excluding(prefix_text, job.original_token)
    except (NoAlternative, BackendUnavailable, ContextOverflow):
        return (
            _empty_rollout(rid, job.number, job, prompt, job.lineage_key, job.depth, "end-of-text"),
            0,
            0.0,
        )
    cont_cap = None if max_new_tokens is None else max_new_tokens - 1
    if cont_cap is None or cont_cap >= 1:
        mt = params.max_tokens if cont_cap is None else min(params.max_tokens, cont_cap)
        call = replace(
            params,
            seed=derive_seed(cfg.seed, problem_id, "call", job.lineage_key),
            max_tokens=mt,
        )
        try:
            cont = backend.complete(prefix_text + replacement, call)
        except (BackendUnavailable, ContextOverflow):
            return (
                _empty_rollout(rid, job.number, job, prompt, job.lineage_key, job.depth, "end-of-text"),
                0,
                0.0,
            )
        cont_tokens, cont_dists = cont.tokens, cont.distributions
        finish, spent_in, spent_s = cont.finish_reason, cont.prompt_tokens, cont.elapsed_s
    else:
        # the replacement token used up the last of the budget
        cont_tokens, cont_dists = (), ()
        finish, spent_in, spent_s = "length", 0, 0.0
    rollout = Rollout(
        id=rid,
        number=job.number,
        parent_job_id=job.id,
        parent_rollout_id=job.parent_rollout_id,
        depth=job.depth,
        prompt=prompt,
        tokens=job.prefix_tokens + (replacement,) + cont_tokens,
        distributions=job.prefix_distributions + (dist,) + cont_dists,
        finish_reason=finish,
        status=STATUS_COMPLETED,
        lineage_key=job.lineage_key,
        tokens_generated=1 + len(cont_tokens),
        branch_position=job.branch_position,
        branched_positions=set(job.branched_positions),
    )
    return rollout, spent_in, spent_s


def _verify(
    rollout: Rollout,
    verifier_mode: str,
    gold: Decimal | None,
    cfg: BranchConfig,
    trace: TraceRecorder,
    problem_id: str,
) -> bool:
    if rollout.status == STATUS_FAILED:
        return False
    try:
        rollout.answer = extract_answer(rollout.text)
    except NoAnswerFound:
        rollout.answer = None
    eat_mean = eat_var = None
    if verifier_mode == "oracle":
        accepted = (
            rollout.answer is not None
            and gold is not None
            and verify_answer(rollout.answer, gold)
        )
    else:
        try:
            stats = eat_statistics(rollout.tokens, rollout.distributions)
            eat_mean, eat_var = stats.mean, stats.variance
            accepted = eat_decision(stats, cfg.tau1, cfg.tau2) == ACCEPT
        except NoBoundaries:
            accepted = False
    if accepted:
        rollout.status = STATUS_ACCEPTED
    trace.emit(
        "verified",
        problem=problem_id,
        rollout=rollout.id,
        mode=verifier_mode,
        accepted=accepted,
        answer=None if rollout.answer is None else str(rollout.answer.value),
        eat_mean=eat_mean,
        eat_var=eat_var,
    )
    return accepted


def _trace_rollout(trace: TraceRecorder, problem_id: str, r: Rollout) -> None:
    trace.emit(
        "rollout",
        problem=problem_id,
        id=r.id,
        job=r.parent_job_id,
        parent=r.parent_rollout_id,
        depth=r.depth,
        status=r.status,
        finish=r.finish_reason,
        n_new=r.tokens_generated,
        branch_position=r.branch_position,
        tokens=list(r.tokens),
    )


def solve(
    prompt: str,
    cfg: BranchConfig,
    backend: Backend,
    params: DecodeParams,
    verifier_mode: str = "oracle",
    gold: Decimal | None = None,
    problem_id: str = "p0",
    token_budget: int | None = None,
    selection: str = "entropy",
    trace: TraceRecorder | None = None,
) -> SolveOutcome:
    """Run the full search for one problem.

    Stop precedence: first accepted rollout, then the job cap (pool drained,
    nothing new creatable), then the token budget, then an empty pool.
    ``token_budget`` caps generated tokens; each completion call is clamped
    to what remains, so the cap is exact.
    """
    cfg.validate()
    if verifier_mode not in VERIFIER_MODES:
        raise ValueError(f"unknown verifier mode {verifier_mode!r}")
    if verifier_mode == "oracle" and gold is None:
        raise ValueError("oracle verification needs a gold answer")
    if selection not in SELECTION_MODES:
        raise ValueError(f"unknown selection mode {selection!r}")
    trace = trace if trace is not None else _NullTrace()
    trace.emit(
        "problem_start",
        problem=problem_id,
        selection=selection,
        verifier=verifier_mode,
        budget=token_budget,
    )
    pool = JobPool(
        policy=cfg.pool_policy,
        rng=rng_for(cfg.seed, problem_id, "pool"),
        max_create=cfg.max_num_create_jobs,
    )
    acct = _Accounting()
    rollouts: list[Rollout] = []
    winning: Rollout | None = None

    def finish() -> SolveOutcome:
        outcome = SolveOutcome(
            problem_id=problem_id,
            solved=winning is not None,
            solved_on_first_trial=winning is not None and winning.depth == 0,
            jobs_created=pool.created_count,
            success_depth=None if winning is None else winning.depth,
            input_tokens=acct.input_tokens,
            output_tokens=acct.output_tokens,
            elapsed_s=acct.elapsed_s,
            winning_rollout=winning,
            rollouts=rollouts,
        )
        trace.emit(
            "problem_end",
            problem=problem_id,
            solved=outcome.solved,
            first_trial=outcome.solved_on_first_trial,
            jobs=outcome.jobs_created,
            success_depth=outcome.success_depth,
            input_tokens=outcome.input_tokens,
            output_tokens=outcome.output_tokens,
            elapsed_s=outcome.elapsed_s,
        )
        return outcome

    if token_budget is not None and token_budget < 1:
        return finish()

    pool.register_root()
    root, spent_in, spent_s = run_initial_rollout(
        prompt, cfg, backend, params, problem_id, acct.remaining(token_budget)
    )
    acct.input_tokens += spent_in
    acct.output_tokens += root.tokens_generated
    acct.elapsed_s += spent_s
    rollouts.append(root)
    if _verify(root, verifier_mode, gold, cfg, trace, problem_id):
        winning = root
        _trace_rollout(trace, problem_id, root)
        return finish()
    _trace_rollout(trace, problem_id, root)
    branch_rollout(root, cfg, pool, trace, selection, problem_id)

    while winning is None:
        remaining = acct.remaining(token_budget)
        if remaining is not None and remaining <= 0:
            break
        try:
            job = pool.draw()
        except PoolEmpty:
            break
        trace.emit("job_drawn", problem=problem_id, id=job.id, pending=len(pool))
        rollout, spent_in, spent_s = expand_job(
            job, cfg, backend, params, prompt, problem_id, remaining
        )
        acct.input_tokens += spent_in
        acct.output_tokens += rollout.tokens_generated
        acct.elapsed_s += spent_s
        rollouts.append(rollout)
        if _verify(rollout, verifier_mode, gold, cfg, trace, problem_id):
            winning = rollout
            _trace_rollout(trace, problem_id, rollout)
            break
        _trace_rollout(trace, problem_id, rollout)
        branch_rollout(rollout, cfg, pool, trace, selection, problem_id)
    return finish()
