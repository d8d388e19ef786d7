"""Subject line generation: rule-based extraction and a remote
chat-completions client with jittered exponential-backoff retries.

The remote protocol is the common chat-completions shape: POST JSON with
model/temperature/max_tokens/messages, response JSON with
choices[0].message.content. Auth comes from ENGAGE_API_KEY, base URL from
ENGAGE_BASE_URL (both overridable in config).
"""

from __future__ import annotations

import os
import random
import re
import threading
import time
from dataclasses import dataclass, field

import requests

from . import templates
from .errors import (
    AllCandidatesFailed,
    EmptyCandidate,
    EmptyPost,
    RemoteRejected,
    RetriesExhausted,
)

STRATEGY_SAME_PROMPT = "same_prompt"
STRATEGY_MULTI_PROMPT = "multi_prompt"

_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")


@dataclass(frozen=True)
class GeneratorSpec:
    template_id: str = "base"
    system_message: str = templates.GENERATOR_SYSTEM_MESSAGE
    user_template: str = templates.GENERATOR_TEMPLATE
    temperature: float = 0.7
    max_tokens: int = 32
    strategy: str = STRATEGY_SAME_PROMPT


@dataclass(frozen=True)
class BackoffConfig:
    base_delay: float = 1.0
    factor: float = 2.0
    jitter: float = 0.2
    max_attempts: int = 5

    def __post_init__(self):
        if self.factor < 1.0:
            raise ValueError(f"factor must be >= 1, got {self.factor}")
        if self.max_attempts < 1:
            raise ValueError(f"max_attempts must be >= 1, got {self.max_attempts}")


@dataclass
class GenerationResult:
    text: str
    source: str
    attempts: int
    latency: float


class RetryableRemoteError(Exception):
    """Transient failure (rate limit, timeout, 5xx); safe to retry."""


class HttpChatEndpoint:
    """requests-backed chat-completions client with an in-flight cap."""

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str = "default",
        timeout: float = 30.0,
        max_in_flight: int = 8,
    ):
        self.base_url = base_url or os.environ.get("ENGAGE_BASE_URL", "")
        self.api_key = api_key if api_key is not None else os.environ.get("ENGAGE_API_KEY", "")
        self.model = model
        self.timeout = timeout
        self._gate = threading.Semaphore(max_in_flight)

    def complete(self, spec: GeneratorSpec, post_text: str) -> str:
        body = {
            "model": self.model,
            "temperature": spec.temperature,
            "max_tokens": spec.max_tokens,
            "messages": [
                {"role": "system", "content": spec.system_message},
                {"role": "user", "content": templates.render(spec.user_template, post=post_text)},
            ],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        with self._gate:
            try:
                resp = requests.post(
                    self.base_url.rstrip("/") + "/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=self.timeout,
                )
            except (requests.Timeout, requests.ConnectionError) as exc:
                raise RetryableRemoteError(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise RetryableRemoteError(f"status {resp.status_code}")
        if resp.status_code >= 400:
            raise RemoteRejected(resp.status_code, resp.text[:200])
        return resp.json()["choices"][0]["message"]["content"]


def rule_based_subject(post_text: str, max_words: int = 10) -> str:
    """First sentence of the post, truncated to max_words and capitalized."""
    if not post_text or not post_text.strip():
        raise EmptyPost("post text is empty")
    text = post_text.strip()
    match = _SENTENCE_END.search(text)
    sentence = text[: match.end()] if match else text
    return _cap_and_cut(sentence, max_words)


def _cap_and_cut(text: str, max_words: int) -> str:
    words = text.split()
    if len(words) > max_words:
        text = " ".join(words[:max_words]) + "..."
    else:
        text = " ".join(words)
    return text[0].upper() + text[1:] if text else text


def postprocess(text: str, max_words: int = 10) -> str:
    """Strip a leading 'Subject line:' label, cut to max_words, capitalize."""
    if not text or not text.strip():
        raise EmptyCandidate("generator returned empty text")
    cleaned = text.strip()
    lowered = cleaned.casefold()
    if lowered.startswith("subject line:"):
        cleaned = cleaned[len("subject line:"):].strip()
    if not cleaned:
        raise EmptyCandidate("candidate empty after stripping label")
    return _cap_and_cut(cleaned, max_words)


def call_remote_with_retries(
    endpoint,
    spec: GeneratorSpec,
    post_text: str,
    backoff: BackoffConfig = BackoffConfig(),
    sleep=time.sleep,
    rng: random.Random | None = None,
    clock=time.monotonic,
) -> GenerationResult:
    """Call endpoint.complete, retrying transient failures with exponential
    backoff. Non-retryable rejections propagate immediately; exhausted
    retries raise RetriesExhausted (callers fall back to the rule subject).
    """
    rng = rng or random.Random()
    start = clock()
    last_error: Exception | None = None
    for attempt in range(1, backoff.max_attempts + 1):
        try:
            text = endpoint.complete(spec, post_text)
            return GenerationResult(
                text=text, source="generated", attempts=attempt, latency=clock() - start
            )
        except RetryableRemoteError as exc:
            last_error = exc
            if attempt < backoff.max_attempts:
                base = backoff.base_delay * backoff.factor ** (attempt - 1)
                sleep(base * (1.0 + backoff.jitter * rng.uniform(-1.0, 1.0)))
    raise RetriesExhausted(backoff.max_attempts, last_error)


def generate_candidates(
    endpoint,
    specs: list[GeneratorSpec],
    post_text: str,
    n: int,
    backoff: BackoffConfig = BackoffConfig(),
    sleep=time.sleep,
    rng: random.Random | None = None,
) -> list[str]:
    """Produce up to n candidate texts.

    same_prompt: n samples from the single spec (needs temperature > 0 when
    n > 1). multi_prompt: one sample per spec. Exact duplicates are removed,
    so fewer than n texts may come back. Raises AllCandidatesFailed only when
    every call fails.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not specs:
        raise ValueError("at least one GeneratorSpec is required")
    if specs[0].strategy == STRATEGY_SAME_PROMPT:
        if len(specs) != 1:
            raise ValueError("same_prompt strategy takes exactly one spec")
        if n > 1 and specs[0].temperature <= 0.0:
            raise ValueError("same_prompt with n > 1 requires temperature > 0")
        calls = [specs[0]] * n
    else:
        calls = list(specs)

    texts: list[str] = []
    errors: list[Exception] = []
    for spec in calls:
        try:
            result = call_remote_with_retries(
                endpoint, spec, post_text, backoff, sleep=sleep, rng=rng
            )
        except (RetriesExhausted, RemoteRejected) as exc:
            errors.append(exc)
            continue
        if result.text not in texts:
            texts.append(result.text)
    if not texts:
        raise AllCandidatesFailed(f"all {len(calls)} generation calls failed: {errors[-1]}")
    return texts
