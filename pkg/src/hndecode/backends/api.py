"""HTTP backend for completion APIs that return per-token top-N logprobs.

Speaks the classic completions wire protocol: POST {base_url}/completions
with prompt, sampling params, and logprobs=N; the response carries the
sampled tokens, their top-N logprob tables, and usage counts. The API key
comes from the HN_API_KEY environment variable unless passed explicitly.

Transient failures (network errors, 429, 5xx) are retried with exponential
backoff so a blip never corrupts job accounting; after the retry budget the
call raises BackendUnavailable. Replay (score_sequence) needs the server to
support echoed prompt logprobs and is off unless ``supports_echo`` is set.
"""

from __future__ import annotations

import os
import threading
import time

import httpx

from ..entropy import TokenDistribution, normalize_distribution
from ..errors import (
    BackendUnavailable,
    ConfigError,
    ContextOverflow,
    NoAlternative,
    ReplayUnsupported,
)
from .base import Backend, DecodeParams, GenerationResult

API_KEY_ENV = "HN_API_KEY"

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class ApiBackend(Backend):
    name = "api"

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        logprobs_top_n: int = 20,
        tail_mode: str = "pseudo-token",
        supports_echo: bool = False,
        max_retries: int = 3,
        backoff_s: float = 1.0,
        max_inflight: int = 8,
        timeout_s: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not key:
            raise ConfigError(f"no API key: set {API_KEY_ENV} or pass api_key")
        self.model = model
        self.logprobs_top_n = logprobs_top_n
        self.tail_mode = tail_mode
        self.supports_replay = supports_echo
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._gate = threading.Semaphore(max_inflight)
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"),
            headers={"Authorization": f"Bearer {key}"},
            timeout=timeout_s,
            transport=transport,
        )

    # - wire helpers -------------------------------------------------------

    def _post(self, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                with self._gate:
                    response = self._client.post("/completions", json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code == 200:
                return response.json()
            body = response.text[:500]
            if response.status_code == 400 and "context" in body.lower():
                raise ContextOverflow(f"prompt too long: {body}")
            if response.status_code in RETRYABLE_STATUS:
                last_error = BackendUnavailable(f"HTTP {response.status_code}: {body}")
                continue
            raise BackendUnavailable(f"HTTP {response.status_code}: {body}")
        raise BackendUnavailable(
            f"gave up after {self.max_retries} attempts: {last_error}"
        )

    def _payload(self, prefix: str, params: DecodeParams, max_tokens: int) -> dict:
        payload = {
            "model": self.model,
            "prompt": prefix,
            "max_tokens": max_tokens,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "logprobs": self.logprobs_top_n,
            "seed": params.seed,
        }
        if params.top_k is not None:
            payload["top_k"] = params.top_k
        if params.stop_sequences:
            payload["stop"] = list(params.stop_sequences)
        return payload

    def _distributions(
        self, tokens: list[str], token_logprobs: list, top_logprobs: list
    ) -> list[TokenDistribution]:
        dists = []
        for i, token in enumerate(tokens):
            table = dict(top_logprobs[i]) if i < len(top_logprobs) and top_logprobs[i] else {}
            if token not in table and i < len(token_logprobs) and token_logprobs[i] is not None:
                table[token] = token_logprobs[i]
            if table:
                dists.append(normalize_distribution(list(table.items()), self.tail_mode))
            else:
                # servers return null logprobs for a context-free first
                # position; stand in with a zero-entropy point mass
                dists.append(TokenDistribution(((token, 1.0),)))
        return dists

    # - backend contract ---------------------------------------------------

    def complete(self, prefix: str, params: DecodeParams) -> GenerationResult:
        params.validate()
        started = time.monotonic()
        data = self._post(self._payload(prefix, params, params.max_tokens))
        elapsed = time.monotonic() - started
        try:
            choice = data["choices"][0]
            lp = choice["logprobs"]
            tokens = list(lp["tokens"])
            dists = self._distributions(
                tokens, lp.get("token_logprobs") or [], lp.get("top_logprobs") or []
            )
            raw_finish = choice.get("finish_reason", "stop")
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed response: {exc!r}") from exc
        text = "".join(tokens)
        if raw_finish == "length":
            finish = "length"
        elif params.stop_sequences and any(s in text for s in params.stop_sequences):
            finish = "stop-sequence"
        else:
            finish = "end-of-text"
        usage = data.get("usage") or {}
        result = GenerationResult(
            tokens=tuple(tokens),
            distributions=tuple(dists),
            finish_reason=finish,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            elapsed_s=elapsed,
        )
        result.validate(max_tokens=params.max_tokens)
        return result

    def greedy_next_excluding(
        self, prefix: str, excluded: str
    ) -> tuple[str, TokenDistribution]:
        probe = DecodeParams(temperature=0.0, top_p=1.0, max_tokens=1)
        result = self.complete(prefix, probe)
        if not result.distributions:
            raise NoAlternative("backend returned no next-token distribution")
        dist = result.distributions[0]
        for token, _ in dist.entries:
            if token != excluded:
                return token, dist
        raise NoAlternative(f"every alternative to {excluded!r} is excluded")

    def score_sequence(self, prefix: str, tokens: list[str]) -> list[TokenDistribution]:
        if not self.supports_replay:
            raise ReplayUnsupported("server does not echo prompt logprobs")
        text = prefix + "".join(tokens)
        payload = {
            "model": self.model,
            "prompt": text,
            "max_tokens": 0,
            "echo": True,
            "logprobs": self.logprobs_top_n,
        }
        data = self._post(payload)
        try:
            lp = data["choices"][0]["logprobs"]
            all_tokens = list(lp["tokens"])
            offsets = list(lp["text_offset"])
            token_logprobs = lp.get("token_logprobs") or []
            top_logprobs = lp.get("top_logprobs") or []
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed echo response: {exc!r}") from exc
        # keep only positions inside our sequence, then require the server's
        # tokenization to agree with the tokens being scored
        keep = [i for i, off in enumerate(offsets) if off >= len(prefix)]
        if [all_tokens[i] for i in keep] != list(tokens):
            raise ReplayUnsupported("server tokenization differs from the scored tokens")
        return self._distributions(
            [all_tokens[i] for i in keep],
            [token_logprobs[i] if i < len(token_logprobs) else None for i in keep],
            [top_logprobs[i] if i < len(top_logprobs) else None for i in keep],
        )

    def replay_text(self, text: str) -> tuple[list[str], list[TokenDistribution]]:
        if not self.supports_replay:
            raise ReplayUnsupported("server does not echo prompt logprobs")
        payload = {
            "model": self.model,
            "prompt": text,
            "max_tokens": 0,
            "echo": True,
            "logprobs": self.logprobs_top_n,
        }
        data = self._post(payload)
        try:
            lp = data["choices"][0]["logprobs"]
            tokens = list(lp["tokens"])
            dists = self._distributions(
                tokens, lp.get("token_logprobs") or [], lp.get("top_logprobs") or []
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed echo response: {exc!r}") from exc
        return tokens, dists

    def close(self) -> None:
        self._client.close()
