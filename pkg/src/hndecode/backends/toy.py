"""Table-driven n-gram toy model: deterministic, enumerable, exactly seedable.

The model is a weighted transition table keyed by the last ``order`` token
texts. Lookup backs off from the longest matching context suffix down to the
empty context; when nothing matches, generation ends. The reserved outcome
``<eot>`` competes probabilistically with real tokens and ends the sequence
when sampled, without recording that step's distribution.

Recorded distributions are always the natural (exact-weight) ones;
temperature, top_k, and top_p shape sampling only. Weights are kept as
`fractions.Fraction` so the brute-force enumerator is exact.

Spec file format (UTF-8, ``#`` comments): one transition per line,

    ctx-tok1 ctx-tok2 | token weight

with whitespace-separated fields, a bare ``|`` separating context from
production, and an empty left side for the empty context. Escapes inside
tokens: ``\\n`` ``\\t`` ``\\s`` (space) ``\\|`` ``\\\\``. Weights are
integers, fractions like ``3/2``, or decimals.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from ..entropy import TokenDistribution
from ..errors import NoAlternative, ParseError, TreeTooLarge
from .base import Backend, DecodeParams, GenerationResult, detokenize

EOT = "<eot>"

_ESCAPES = {"n": "\n", "t": "\t", "s": " ", "|": "|", "\\": "\\"}


def _decode_token(field: str, path: str | None, lineno: int) -> str:
    out = []
    i = 0
    while i < len(field):
        ch = field[i]
        if ch == "\\":
            if i + 1 >= len(field) or field[i + 1] not in _ESCAPES:
                raise ParseError(
                    f"bad escape in token {field!r}", path=path, line=lineno
                )
            out.append(_ESCAPES[field[i + 1]])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


@dataclass(frozen=True)
class ToyModelSpec:
    """Immutable transition table plus the derived lookup structures."""

    transitions: dict[tuple[str, ...], tuple[tuple[str, Fraction], ...]]
    order: int
    vocab: frozenset[str]

    @property
    def terminals(self) -> frozenset[tuple[str, ...]]:
        """Contexts that can end generation (carry <eot> mass)."""
        return frozenset(
            ctx
            for ctx, outs in self.transitions.items()
            if any(t == EOT for t, _ in outs)
        )


def parse_toy_spec(text: str, path: str | None = None) -> ToyModelSpec:
    raw: dict[tuple[str, ...], list[tuple[str, Fraction]]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        pipes = [i for i, f in enumerate(fields) if f == "|"]
        if len(pipes) != 1:
            raise ParseError(
                "expected exactly one bare '|' separator", path=path, line=lineno
            )
        sep = pipes[0]
        rhs = fields[sep + 1 :]
        if len(rhs) != 2:
            raise ParseError(
                "expected 'token weight' after '|'", path=path, line=lineno
            )
        context = tuple(_decode_token(f, path, lineno) for f in fields[:sep])
        token = _decode_token(rhs[0], path, lineno)
        if EOT in context:
            raise ParseError(f"{EOT} cannot appear in a context", path=path, line=lineno)
        if not token:
            raise ParseError("empty token", path=path, line=lineno)
        try:
            weight = Fraction(rhs[1])
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"bad weight {rhs[1]!r}", path=path, line=lineno) from None
        if weight <= 0:
            raise ParseError(f"weight must be > 0, got {rhs[1]}", path=path, line=lineno)
        outs = raw.setdefault(context, [])
        if any(t == token for t, _ in outs):
            raise ParseError(
                f"duplicate transition {token!r} from context {context!r}",
                path=path,
                line=lineno,
            )
        outs.append((token, weight))
    if not raw:
        raise ParseError("spec defines no transitions", path=path)

    transitions: dict[tuple[str, ...], tuple[tuple[str, Fraction], ...]] = {}
    vocab: set[str] = set()
    for ctx, outs in raw.items():
        total = sum(w for _, w in outs)
        probs = [(t, w / total) for t, w in outs]
        # canonical order: descending probability, ties keep listing order
        probs.sort(key=lambda tp: tp[1], reverse=True)
        transitions[ctx] = tuple(probs)
        vocab.update(ctx)
        vocab.update(t for t, _ in outs if t != EOT)
    order = max((len(ctx) for ctx in transitions), default=0)
    return ToyModelSpec(transitions=transitions, order=order, vocab=frozenset(vocab))


def load_toy_spec(path: str | Path) -> ToyModelSpec:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read spec: {exc}", path=str(p)) from exc
    return parse_toy_spec(text, path=str(p))


_EOT_DIST = TokenDistribution(entries=((EOT, 1.0),))


class ToyBackend(Backend):
    """Backend over a ToyModelSpec with a virtual clock.

    ``latency_per_token`` feeds the deterministic elapsed-time accounting
    (default 0.0: instantaneous). Real wall time is never reported.
    """

    name = "toy"
    supports_replay = True

    def __init__(self, spec: ToyModelSpec, latency_per_token: float = 0.0):
        self.spec = spec
        self.latency_per_token = latency_per_token
        self._by_len = sorted({len(t) for t in spec.vocab}, reverse=True)
        # one shared TokenDistribution per context; contexts are immutable
        self._dists: dict[tuple[str, ...], TokenDistribution] = {}
        for ctx, outs in spec.transitions.items():
            dist = TokenDistribution(tuple((t, float(p)) for t, p in outs))
            dist.validate()
            self._dists[ctx] = dist

    # - tokenization -------------------------------------------------------

    def tokenize(self, text: str) -> list[str]:
        """Greedy longest-match against the vocab; unknown chars stand alone."""
        tokens: list[str] = []
        i = 0
        vocab = self.spec.vocab
        while i < len(text):
            for length in self._by_len:
                if text[i : i + length] in vocab:
                    tokens.append(text[i : i + length])
                    i += length
                    break
            else:
                tokens.append(text[i])
                i += 1
        return tokens

    # - table lookup -------------------------------------------------------

    def _match_context(self, history: list[str]) -> tuple[str, ...] | None:
        """Longest suffix of ``history`` present in the table, down to ()."""
        for length in range(min(self.spec.order, len(history)), -1, -1):
            ctx = tuple(history[len(history) - length :]) if length else ()
            if ctx in self.spec.transitions:
                return ctx
        return None

    def outcomes_at(self, history: list[str]) -> tuple[tuple[str, Fraction], ...] | None:
        ctx = self._match_context(history)
        return None if ctx is None else self.spec.transitions[ctx]

    def _dist_at(self, history: list[str]) -> TokenDistribution | None:
        ctx = self._match_context(history)
        return None if ctx is None else self._dists[ctx]

    # - backend contract ---------------------------------------------------

    def complete(self, prefix: str, params: DecodeParams) -> GenerationResult:
        params.validate()
        history = self.tokenize(prefix)
        rng = random.Random(params.seed)
        tokens: list[str] = []
        dists: list[TokenDistribution] = []
        finish = "end-of-text"
        while True:
            outcomes = self.outcomes_at(history + tokens)
            if outcomes is None:
                break
            token = _sample(outcomes, params, rng)
            if token == EOT:
                break
            dists.append(self._dists[self._match_context(history + tokens)])
            tokens.append(token)
            if params.stop_sequences and any(
                s in detokenize(tokens) for s in params.stop_sequences
            ):
                finish = "stop-sequence"
                break
            if len(tokens) >= params.max_tokens:
                finish = "length"
                break
        result = GenerationResult(
            tokens=tuple(tokens),
            distributions=tuple(dists),
            finish_reason=finish,
            prompt_tokens=len(history),
            elapsed_s=self.latency_per_token * len(tokens),
        )
        result.validate(max_tokens=params.max_tokens)
        return result

    def greedy_next_excluding(
        self, prefix: str, excluded: str
    ) -> tuple[str, TokenDistribution]:
        history = self.tokenize(prefix)
        outcomes = self.outcomes_at(history)
        if outcomes is None:
            raise NoAlternative(f"no continuation exists after {prefix[-40:]!r}")
        # canonical order puts the best remaining candidate first
        for token, _ in outcomes:
            if token != excluded and token != EOT:
                return token, self._dists[self._match_context(history)]
        raise NoAlternative(f"every alternative to {excluded!r} is excluded")

    def score_sequence(self, prefix: str, tokens: list[str]) -> list[TokenDistribution]:
        history = self.tokenize(prefix)
        out: list[TokenDistribution] = []
        for token in tokens:
            dist = self._dist_at(history)
            out.append(_EOT_DIST if dist is None else dist)
            history.append(token)
        return out

    def replay_text(self, text: str) -> tuple[list[str], list[TokenDistribution]]:
        tokens = self.tokenize(text)
        return tokens, self.score_sequence("", tokens)


def _sample(
    outcomes: tuple[tuple[str, Fraction], ...], params: DecodeParams, rng: random.Random
) -> str:
    """Draw one outcome under temperature/top_k/top_p shaping."""
    if params.temperature == 0 or len(outcomes) == 1:
        return outcomes[0][0]
    inv_t = 1.0 / params.temperature
    shaped = [float(p) ** inv_t for _, p in outcomes]
    # shaping is monotone, so canonical order already sorts by shaped weight
    if params.top_k is not None:
        outcomes = outcomes[: params.top_k]
        shaped = shaped[: params.top_k]
    total = sum(shaped)
    if params.top_p < 1.0:
        cum = 0.0
        keep = len(shaped)
        for i, w in enumerate(shaped):
            cum += w / total
            if cum >= params.top_p - 1e-12:
                keep = i + 1
                break
        outcomes = outcomes[:keep]
        shaped = shaped[:keep]
        total = sum(shaped)
    u = rng.random() * total
    acc = 0.0
    for (token, _), w in zip(outcomes, shaped):
        acc += w
        if u < acc:
            return token
    return outcomes[-1][0]


@dataclass(frozen=True)
class EnumeratedRollout:
    """One path from the brute-force enumerator with its exact probability."""

    tokens: tuple[str, ...]
    probability: Fraction
    terminated: bool  # False = cut at max_len, probability is prefix mass


def enumerate_all_rollouts(
    backend: ToyBackend,
    prefix: str,
    max_len: int,
    max_nodes: int = 250_000,
) -> list[EnumeratedRollout]:
    """Every completion of ``prefix`` up to ``max_len``, with exact probabilities.

    Terminated entries end via <eot> or a dead-end context; their
    probabilities sum to <= 1, the deficit being the mass of the truncated
    (non-terminated) entries. Deterministic depth-first order.
    """
    history = backend.tokenize(prefix)
    results: list[EnumeratedRollout] = []
    nodes = 0

    def visit(tokens: list[str], prob: Fraction) -> None:
        nonlocal nodes
        nodes += 1
        if nodes > max_nodes:
            raise TreeTooLarge(f"enumeration exceeded {max_nodes} nodes")
        outcomes = backend.outcomes_at(history + tokens)
        if outcomes is None:
            results.append(EnumeratedRollout(tuple(tokens), prob, True))
            return
        if len(tokens) >= max_len:
            results.append(EnumeratedRollout(tuple(tokens), prob, False))
            return
        for token, p in outcomes:
            if token == EOT:
                results.append(EnumeratedRollout(tuple(tokens), prob * p, True))
            else:
                visit(tokens + [token], prob * p)

    visit([], Fraction(1))
    return results


def path_probability(backend: ToyBackend, prefix: str, tokens: list[str]) -> Fraction:
    """Exact probability of generating exactly ``tokens`` (ignoring the ending).

    Zero when some step has no support for the next token.
    """
    history = backend.tokenize(prefix)
    prob = Fraction(1)
    for token in tokens:
        outcomes = backend.outcomes_at(history)
        if outcomes is None:
            return Fraction(0)
        step = next((p for t, p in outcomes if t == token), Fraction(0))
        if step == 0:
            return Fraction(0)
        prob *= step
        history.append(token)
    return prob
