"""Rollout acceptance: closing-tag entropy statistics and answer checking.

Two acceptance paths exist. The oracle path extracts a final numeric answer
and compares it with a known gold value. The self-acceptance path looks at
the next-token entropy recorded where each thinking block closes: a rollout
is accepted when the mean of those entropies is below tau1 and their
population variance is below tau2, both strictly.
"""

from __future__ import annotations

import re
from bisect import bisect_left
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from .entropy import TokenDistribution, shannon_entropy
from .errors import NoAnswerFound, NoBoundaries

THINK_CLOSE = "</think>"

ACCEPT = "accept"
REROLL = "reroll"

# characters stripped from an answer line before number extraction
_STRIP_CHARS = "*_`$€£¥"
_GROUPING_COMMA = re.compile(r"(?<=\d),(?=\d)")
_NUMBER = re.compile(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?")


def find_think_boundaries(tokens: list[str] | tuple[str, ...]) -> list[int]:
    """Token index of the first token strictly after each literal "</think>".

    The scan runs over the detokenized text, so a closing tag split across
    several tokens is still found. An occurrence with no token starting after
    its final character (that is, at the very end of the sequence, or ending
    inside the last token) yields no boundary.
    """
    text = "".join(tokens)
    starts: list[int] = []
    pos = 0
    for tok in tokens:
        starts.append(pos)
        pos += len(tok)
    boundaries: list[int] = []
    at = text.find(THINK_CLOSE)
    while at != -1:
        end = at + len(THINK_CLOSE)
        idx = bisect_left(starts, end)
        if idx < len(tokens):
            boundaries.append(idx)
        at = text.find(THINK_CLOSE, end)
    return boundaries


def think_region_end(tokens: list[str] | tuple[str, ...]) -> int:
    """End (exclusive) of the region eligible for branching under think-only.

    Everything before the first token that follows the first closing tag; the
    whole sequence when no closing tag has completed.
    """
    boundaries = find_think_boundaries(tokens)
    return boundaries[0] if boundaries else len(tokens)


@dataclass(frozen=True)
class EATStats:
    """Entropies recorded at each closing-tag boundary, with mean and variance."""

    boundary_positions: tuple[int, ...]
    entropies: tuple[float, ...]
    mean: float
    variance: float

    @classmethod
    def from_entropies(
        cls, positions: list[int], entropies: list[float]
    ) -> "EATStats":
        if not entropies or len(entropies) != len(positions):
            raise NoBoundaries("no boundary entropies to aggregate")
        mean = sum(entropies) / len(entropies)
        variance = sum((h - mean) ** 2 for h in entropies) / len(entropies)
        return cls(
            boundary_positions=tuple(positions),
            entropies=tuple(entropies),
            mean=mean,
            variance=variance,
        )


def eat_statistics(
    tokens: list[str] | tuple[str, ...],
    distributions: list[TokenDistribution] | tuple[TokenDistribution, ...],
) -> EATStats:
    """EATStats of a generated sequence from its recorded distributions.

    Raises NoBoundaries when no closing tag completes before the end of the
    sequence; callers treat that as a rejection, not an error.
    """
    if len(tokens) != len(distributions):
        raise ValueError(
            f"{len(tokens)} tokens but {len(distributions)} distributions"
        )
    positions = find_think_boundaries(tokens)
    if not positions:
        raise NoBoundaries("sequence has no completed closing tag")
    entropies = [shannon_entropy(distributions[p]) for p in positions]
    return EATStats.from_entropies(positions, entropies)


def eat_decision(stats: EATStats, tau1: float, tau2: float) -> str:
    """ACCEPT iff mean < tau1 and variance < tau2, strictly; REROLL otherwise."""
    return ACCEPT if stats.mean < tau1 and stats.variance < tau2 else REROLL


@dataclass(frozen=True)
class Answer:
    """The final answer line of a rollout and the number parsed from it."""

    raw_line: str
    value: Decimal


def extract_answer(text: str) -> Answer:
    """Parse the final numeric answer from a rollout's text.

    Takes the last non-empty line after the final "</think>" (the whole text
    when there is none), strips markdown emphasis, currency signs, and
    digit-grouping commas, and parses the last number on the line.
    """
    at = text.rfind(THINK_CLOSE)
    part = text[at + len(THINK_CLOSE) :] if at != -1 else text
    line = next(
        (ln.strip() for ln in reversed(part.splitlines()) if ln.strip()), None
    )
    if line is None:
        raise NoAnswerFound("no non-empty line after the final closing tag")
    cleaned = line.translate({ord(c): None for c in _STRIP_CHARS})
    cleaned = _GROUPING_COMMA.sub("", cleaned)
    matches = _NUMBER.findall(cleaned)
    if not matches:
        raise NoAnswerFound(f"no number on answer line {line!r}")
    try:
        value = Decimal(matches[-1])
    except InvalidOperation:  # pragma: no cover - pattern guarantees parse
        raise NoAnswerFound(f"unparsable number {matches[-1]!r}") from None
    return Answer(raw_line=line, value=value)


def _is_integral(d: Decimal) -> bool:
    return d == d.to_integral_value()


def verify_answer(a: "Answer | Decimal", gold: Decimal) -> bool:
    """Exact comparison for integers, relative tolerance 1e-6 otherwise."""
    value = a.value if isinstance(a, Answer) else a
    if _is_integral(value) and _is_integral(gold):
        return value == gold
    scale = max(abs(value), abs(gold))
    if scale == 0:
        return True
    return abs(value - gold) / scale <= Decimal("1e-6")
