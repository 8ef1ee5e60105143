"""Backend contract: what the search engine needs from a language model.

Token identity is the backend's surface-token text; detokenization is plain
concatenation. The engine never assumes backends share a tokenizer.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

from ..entropy import TokenDistribution

FINISH_REASONS = ("stop-sequence", "length", "end-of-text")


def detokenize(tokens: list[str] | tuple[str, ...]) -> str:
    return "".join(tokens)


@dataclass(frozen=True)
class DecodeParams:
    """Sampling knobs for one completion call."""

    temperature: float = 1.0
    top_k: int | None = None  # None = unlimited
    top_p: float = 1.0
    max_tokens: int = 512
    stop_sequences: tuple[str, ...] = ()
    seed: int = 0

    def validate(self) -> None:
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")


@dataclass(frozen=True)
class GenerationResult:
    """One completion: tokens plus the pre-sampling distribution at each step."""

    tokens: tuple[str, ...]
    distributions: tuple[TokenDistribution, ...]
    finish_reason: str
    prompt_tokens: int = 0
    elapsed_s: float = 0.0

    def validate(self, max_tokens: int | None = None) -> None:
        if len(self.tokens) != len(self.distributions):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.distributions)} distributions"
            )
        if self.finish_reason not in FINISH_REASONS:
            raise ValueError(f"unknown finish_reason {self.finish_reason!r}")
        if max_tokens is not None and len(self.tokens) > max_tokens:
            raise ValueError(f"{len(self.tokens)} tokens exceeds cap {max_tokens}")

    @property
    def text(self) -> str:
        return detokenize(self.tokens)


class Backend(ABC):
    """A model the engine can drive. Implementations must be thread-safe."""

    name: str = "backend"
    supports_replay: bool = False

    @abstractmethod
    def complete(self, prefix: str, params: DecodeParams) -> GenerationResult:
        """Sample token by token under ``params``, recording every distribution."""

    @abstractmethod
    def greedy_next_excluding(
        self, prefix: str, excluded: str
    ) -> tuple[str, TokenDistribution]:
        """Highest-probability next token that differs from ``excluded``.

        Returns the chosen token and the full recorded distribution. Raises
        NoAlternative when no differing token exists.
        """

    def score_sequence(self, prefix: str, tokens: list[str]) -> list[TokenDistribution]:
        """Teacher-forced next-token distribution at each position of ``tokens``."""
        from ..errors import ReplayUnsupported

        raise ReplayUnsupported(f"backend {self.name!r} cannot replay sequences")

    def replay_text(self, text: str) -> tuple[list[str], list[TokenDistribution]]:
        """Split ``text`` into this backend's tokens and score each position.

        The transcript replay entry point: no prompt, the text stands alone.
        """
        from ..errors import ReplayUnsupported

        raise ReplayUnsupported(f"backend {self.name!r} cannot replay transcripts")
