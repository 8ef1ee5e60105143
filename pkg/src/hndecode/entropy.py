"""Distribution types, Shannon entropy, and branch-point selection.

Entropy is measured in nats. A next-token distribution may be truncated (API
backends expose only the top-N logprobs); the uncovered probability mass is
carried as ``tail_mass`` and, when positive, counts as one extra outcome when
entropy is computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, EmptyDistribution, MassExceedsOne

# invariant tolerance for sum(probs) + tail_mass == 1
MASS_TOL = 1e-9
# slack allowed on exp(logprob) sums before MassExceedsOne
MASS_EXCESS_TOL = 1e-6

REGIONS = ("think-only", "anywhere")
POOL_POLICIES = ("uniform-random", "fifo", "max-entropy-first")
TAIL_MODES = ("pseudo-token", "renormalize")


@dataclass(frozen=True)
class TokenDistribution:
    """A next-token distribution: (token, prob) entries plus uncovered tail.

    Entries are sorted by descending probability (ties keep input order),
    tokens are distinct, every entry prob is > 0, and the probabilities plus
    ``tail_mass`` sum to 1 within MASS_TOL.
    """

    entries: tuple[tuple[str, float], ...]
    tail_mass: float = 0.0
    truncated: bool = False

    def validate(self) -> None:
        if not self.entries:
            raise EmptyDistribution("distribution has no entries")
        total = 0.0
        prev = math.inf
        seen: set[str] = set()
        for token, prob in self.entries:
            if not prob > 0.0:
                raise ValueError(f"entry prob must be > 0, got {prob!r} for {token!r}")
            if prob > prev + MASS_TOL:
                raise ValueError("entries not sorted by descending prob")
            if token in seen:
                raise ValueError(f"duplicate token {token!r}")
            seen.add(token)
            prev = prob
            total += prob
        if not 0.0 <= self.tail_mass <= 1.0:
            raise ValueError(f"tail_mass out of range: {self.tail_mass!r}")
        if total + self.tail_mass > 1.0 + MASS_TOL:
            raise MassExceedsOne(f"mass sums to {total + self.tail_mass!r}")
        if abs(total + self.tail_mass - 1.0) > MASS_TOL:
            raise ValueError(f"mass sums to {total + self.tail_mass!r}, expected 1")

    @property
    def support_size(self) -> int:
        """Number of outcomes, counting a positive tail as one."""
        return len(self.entries) + (1 if self.tail_mass > 0.0 else 0)

    @property
    def argmax_token(self) -> str:
        return self.entries[0][0]

    def outcome_probs(self) -> np.ndarray:
        """Probabilities of all outcomes, tail last when positive."""
        probs = [p for _, p in self.entries]
        if self.tail_mass > 0.0:
            probs.append(self.tail_mass)
        return np.asarray(probs, dtype=np.float64)

    def prob_of(self, token: str) -> float:
        for t, p in self.entries:
            if t == token:
                return p
        return 0.0


def distribution_from_probs(
    pairs: list[tuple[str, float]],
    tail_mass: float = 0.0,
    truncated: bool = False,
) -> TokenDistribution:
    """Build a TokenDistribution from (token, prob) pairs, sorting for the caller."""
    ordered = sorted(pairs, key=lambda tp: -tp[1])
    dist = TokenDistribution(tuple(ordered), tail_mass=tail_mass, truncated=truncated)
    dist.validate()
    return dist


def normalize_distribution(
    raw: list[tuple[str, float]], tail_mode: str = "pseudo-token"
) -> TokenDistribution:
    """Turn (token, logprob) pairs from a backend into a TokenDistribution.

    ``pseudo-token`` keeps the residual mass 1 - sum(exp(logprob)) as
    tail_mass; ``renormalize`` rescales the entries to sum to 1 and drops the
    tail. Duplicate token texts are merged by summing their probabilities.
    """
    if not raw:
        raise EmptyDistribution("no logprob entries")
    if tail_mode not in TAIL_MODES:
        raise ValueError(f"unknown tail_mode {tail_mode!r}")
    merged: dict[str, float] = {}
    for token, logprob in raw:
        if not math.isfinite(logprob):
            raise ValueError(f"non-finite logprob {logprob!r} for {token!r}")
        merged[token] = merged.get(token, 0.0) + math.exp(logprob)
    total = sum(merged.values())
    if total > 1.0 + MASS_EXCESS_TOL:
        raise MassExceedsOne(f"probabilities sum to {total}")
    pairs = sorted(merged.items(), key=lambda tp: -tp[1])
    if tail_mode == "renormalize" or total >= 1.0:
        # the second case soaks up float noise just above 1
        entries = tuple((t, p / total) for t, p in pairs)
        tail = 0.0
    else:
        entries = tuple(pairs)
        tail = 1.0 - total
    dist = TokenDistribution(entries, tail_mass=tail, truncated=tail > 0.0)
    dist.validate()
    return dist


def shannon_entropy(d: TokenDistribution) -> float:
    """H = -sum(p ln p) over entries, tail_mass counted as one outcome."""
    return kernels.entropy_from_probs(d.outcome_probs())


@dataclass(frozen=True)
class EntropyProfile:
    """Per-position entropies of a rollout, one value per recorded distribution."""

    values: tuple[tuple[int, float], ...]

    def __len__(self) -> int:
        return len(self.values)

    def entropy_at(self, position: int) -> float:
        for pos, h in self.values:
            if pos == position:
                return h
        raise KeyError(position)


def entropy_profile(distributions: list[TokenDistribution]) -> EntropyProfile:
    if not distributions:
        return EntropyProfile(())
    offsets = np.zeros(len(distributions) + 1, dtype=np.int64)
    flat_parts = []
    for i, d in enumerate(distributions):
        probs = d.outcome_probs()
        flat_parts.append(probs)
        offsets[i + 1] = offsets[i] + probs.size
    flat = np.concatenate(flat_parts)
    ent = kernels.entropy_batch(flat, offsets)
    return EntropyProfile(tuple((i, float(h)) for i, h in enumerate(ent)))


@dataclass(frozen=True)
class BranchPoint:
    """A selected high-entropy position; rank 1 is the most uncertain."""

    position: int
    entropy: float
    rank: int


def select_vulnerable_positions(
    profile: EntropyProfile,
    k: int,
    region: tuple[int, int] | None = None,
    excluded: frozenset[int] | set[int] = frozenset(),
    entropy_floor: float = 0.0,
) -> list[BranchPoint]:
    """Top-k positions by entropy inside ``region`` (half-open), minus ``excluded``.

    Candidates need entropy >= entropy_floor. Ordering is by descending
    entropy, ties broken by the earlier position; ranks run 1..n. May return
    fewer than k points, including none.
    """
    if k <= 0:
        return []
    start, end = region if region is not None else (0, len(profile))
    candidates = [
        (pos, h)
        for pos, h in profile.values
        if start <= pos < end and pos not in excluded and h >= entropy_floor
    ]
    candidates.sort(key=lambda ph: (-ph[1], ph[0]))
    return [
        BranchPoint(position=pos, entropy=h, rank=i + 1)
        for i, (pos, h) in enumerate(candidates[:k])
    ]


@dataclass
class BranchConfig:
    """Branching and acceptance knobs; defaults are the reference run values."""

    max_degree: int = 3
    min_degree: int = 2
    degree_depth_decay: float = 0.6
    max_mcts_depth: int = 3
    max_num_create_jobs: int = 32
    tau1: float = 2.3
    tau2: float = 9.8
    entropy_floor: float = 0.0
    region: str = "think-only"
    pool_policy: str = "uniform-random"
    seed: int = 0
    tail_mode: str = "pseudo-token"

    def validate(self) -> None:
        if self.min_degree < 1:
            raise ConfigError(f"min_degree must be >= 1, got {self.min_degree}")
        if self.max_degree < self.min_degree:
            raise ConfigError(
                f"max_degree ({self.max_degree}) must be >= min_degree ({self.min_degree})"
            )
        if not 0.0 < self.degree_depth_decay <= 1.0:
            raise ConfigError(
                f"degree_depth_decay must be in (0, 1], got {self.degree_depth_decay}"
            )
        if self.max_mcts_depth < 1:
            raise ConfigError(f"max_mcts_depth must be >= 1, got {self.max_mcts_depth}")
        if self.max_num_create_jobs < 1:
            raise ConfigError(
                f"max_num_create_jobs must be >= 1, got {self.max_num_create_jobs}"
            )
        if self.tau1 < 0 or self.tau2 < 0:
            raise ConfigError(f"tau1/tau2 must be >= 0, got {self.tau1}/{self.tau2}")
        if self.entropy_floor < 0:
            raise ConfigError(f"entropy_floor must be >= 0, got {self.entropy_floor}")
        if self.region not in REGIONS:
            raise ConfigError(f"region must be one of {REGIONS}, got {self.region!r}")
        if self.pool_policy not in POOL_POLICIES:
            raise ConfigError(
                f"pool_policy must be one of {POOL_POLICIES}, got {self.pool_policy!r}"
            )
        if self.tail_mode not in TAIL_MODES:
            raise ConfigError(
                f"tail_mode must be one of {TAIL_MODES}, got {self.tail_mode!r}"
            )


def branch_degree(depth: int, cfg: BranchConfig) -> int:
    """Branch degree at ``depth``: clamp(round(max * decay^depth), min, max).

    Rounding is half-away-from-zero (2.5 rounds to 3, where the builtin
    banker's round would give 2).
    """
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    raw = cfg.max_degree * cfg.degree_depth_decay**depth
    rounded = math.floor(raw + 0.5)  # raw is always > 0 here
    return max(cfg.min_degree, min(cfg.max_degree, rounded))
