"""Best-of-N selection with a two-level single-flight cache.

Level 1 caches generated candidate texts per (post_id, generator_version);
level 2 caches the winning decision. Concurrent requests for the same cold
key coalesce into one generation. Fallback decisions (remote outage) are
served but never cached, so a transient failure does not pin the rule
subject for the TTL.
"""

from __future__ import annotations

import json
import os
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import generators, reward
from .core import (
    SOURCE_FALLBACK,
    SOURCE_GENERATED,
    SOURCE_RULE,
    Post,
    SubjectLineCandidate,
)
from .errors import (
    AllCandidatesFailed,
    EmptyEvalSet,
    RemoteRejected,
    RetriesExhausted,
)

DEFAULT_TTL = 7 * 24 * 3600.0


@dataclass
class CandidatePool:
    post_id: str
    post_text: str
    candidates: list[SubjectLineCandidate]
    generator_version: str = "v1"


@dataclass
class SelectionDecision:
    post_id: str
    chosen: SubjectLineCandidate
    source: str
    scores: dict[str, float]
    cached: bool
    timestamp: float

    def to_dict(self) -> dict:
        return {
            "post_id": self.post_id,
            "chosen": self.chosen.to_dict(),
            "source": self.source,
            "scores": self.scores,
            "cached": self.cached,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionDecision":
        return cls(
            post_id=d["post_id"],
            chosen=SubjectLineCandidate.from_dict(d["chosen"]),
            source=d["source"],
            scores=d["scores"],
            cached=d["cached"],
            timestamp=d["timestamp"],
        )


class SelectionCache:
    """Two-level cache with per-key single-flight locks and optional on-disk
    persistence (length-prefixed JSON entries; later entries win)."""

    def __init__(self, path: str | Path | None = None, ttl: float = DEFAULT_TTL, clock=time.time):
        self.path = Path(path) if path else None
        self.ttl = ttl
        self.clock = clock
        self._entries: dict[str, dict] = {}
        self._mutex = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}
        if self.path and self.path.exists():
            self._load()

    @staticmethod
    def key(post_id: str, generator_version: str) -> str:
        return f"{post_id}\x1f{generator_version}"

    def _load(self) -> None:
        data = self.path.read_bytes()
        offset = 0
        while offset + 4 <= len(data):
            (length,) = struct.unpack(">I", data[offset : offset + 4])
            offset += 4
            if offset + length > len(data):
                break  # truncated tail entry; ignore
            entry = json.loads(data[offset : offset + length].decode("utf-8"))
            offset += length
            self._entries[entry["key"]] = entry

    def _append(self, entry: dict) -> None:
        if not self.path:
            return
        blob = json.dumps(entry, ensure_ascii=False, sort_keys=True).encode("utf-8")
        with open(self.path, "ab") as fh:
            fh.write(struct.pack(">I", len(blob)))
            fh.write(blob)

    def compact(self) -> None:
        """Rewrite the log keeping only the latest live entry per key."""
        if not self.path:
            return
        with self._mutex:
            entries = list(self._entries.values())
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            for entry in entries:
                blob = json.dumps(entry, ensure_ascii=False, sort_keys=True).encode("utf-8")
                fh.write(struct.pack(">I", len(blob)))
                fh.write(blob)
        os.replace(tmp, self.path)

    def _fresh(self, entry: dict | None) -> dict | None:
        if entry is None:
            return None
        if self.clock() - entry["created_at"] > self.ttl:
            return None
        return entry

    def get(self, key: str) -> dict | None:
        with self._mutex:
            return self._fresh(self._entries.get(key))

    def put_candidates(self, key: str, candidates: list[str]) -> dict:
        with self._mutex:
            entry = self._fresh(self._entries.get(key))
            if entry is None:
                entry = {"key": key, "candidates": candidates, "decision": None,
                         "created_at": self.clock()}
            else:
                entry = dict(entry, candidates=candidates)
            self._entries[key] = entry
            self._append(entry)
            return entry

    def put_decision(self, key: str, decision: SelectionDecision) -> None:
        with self._mutex:
            entry = self._fresh(self._entries.get(key))
            if entry is None or entry.get("candidates") is None:
                raise ValueError("level-2 entry requires level-1 candidates")
            entry = dict(entry, decision=decision.to_dict())
            self._entries[key] = entry
            self._append(entry)

    def lock_for(self, key: str) -> threading.Lock:
        with self._mutex:
            return self._key_locks.setdefault(key, threading.Lock())


class _NullMetrics:
    def inc(self, name: str, value: int = 1) -> None:
        pass


def select_best(
    params: reward.RewardModelParams, pool: CandidatePool, clock=time.time
) -> SelectionDecision:
    """Score every candidate and return the argmax; exact ties prefer the
    rule-based candidate (guardrail)."""
    scores = {c.text: reward.score(params, pool.post_text, c.text) for c in pool.candidates}
    best_score = max(scores.values())
    winners = [c for c in pool.candidates if scores[c.text] == best_score]
    chosen = next((c for c in winners if c.source == SOURCE_RULE), winners[0])
    return SelectionDecision(
        post_id=pool.post_id,
        chosen=chosen,
        source=chosen.source,
        scores=scores,
        cached=False,
        timestamp=clock(),
    )


def select_for_post(
    post: Post,
    n: int,
    params: reward.RewardModelParams,
    cache: SelectionCache,
    endpoint,
    specs: list[generators.GeneratorSpec],
    backoff: generators.BackoffConfig = generators.BackoffConfig(),
    max_words: int = 10,
    generator_version: str = "v1",
    metrics=None,
    sleep=time.sleep,
    clock=time.time,
) -> SelectionDecision:
    """Get-or-compute selection with single-flight semantics.

    n counts the full pool: the rule-based candidate plus n-1 generated ones.
    Generation failure degrades to the rule-based subject with
    source=fallback, which is never cached.
    """
    metrics = metrics or _NullMetrics()
    rule_text = generators.rule_based_subject(post.text, max_words)
    key = cache.key(post.post_id, generator_version)

    entry = cache.get(key)
    if entry is None:
        with cache.lock_for(key):
            entry = cache.get(key)
            if entry is None:
                return _compute_selection(
                    post, n, params, cache, endpoint, specs, backoff, max_words,
                    key, rule_text, metrics, sleep, clock,
                )

    if entry.get("decision"):
        metrics.inc("cache_hits_l2")
        decision = SelectionDecision.from_dict(entry["decision"])
        decision.cached = True
        return decision

    # level-1 hit: candidates cached, decision not yet scored
    metrics.inc("cache_hits_l1")
    pool = _build_pool(post, rule_text, entry["candidates"])
    decision = select_best(params, pool, clock=clock)
    decision.cached = True
    cache.put_decision(key, decision)
    metrics.inc("selections_total")
    return decision


def _build_pool(post: Post, rule_text: str, generated_texts: list[str]) -> CandidatePool:
    candidates = [SubjectLineCandidate(rule_text, SOURCE_RULE)]
    for text in generated_texts:
        if text != rule_text and all(c.text != text for c in candidates):
            candidates.append(SubjectLineCandidate(text, SOURCE_GENERATED))
    return CandidatePool(post_id=post.post_id, post_text=post.text, candidates=candidates)


def _compute_selection(
    post, n, params, cache, endpoint, specs, backoff, max_words,
    key, rule_text, metrics, sleep, clock,
) -> SelectionDecision:
    generated: list[str] = []
    if n > 1:
        try:
            raw = generators.generate_candidates(
                endpoint, specs, post.text, n - 1, backoff, sleep=sleep
            )
            generated = []
            for text in raw:
                processed = generators.postprocess(text, max_words)
                if processed not in generated:
                    generated.append(processed)
        except (RetriesExhausted, AllCandidatesFailed, RemoteRejected):
            metrics.inc("fallbacks")
            metrics.inc("selections_total")
            return SelectionDecision(
                post_id=post.post_id,
                chosen=SubjectLineCandidate(rule_text, SOURCE_FALLBACK),
                source=SOURCE_FALLBACK,
                scores={},
                cached=False,
                timestamp=clock(),
            )
    cache.put_candidates(key, generated)
    pool = _build_pool(post, rule_text, generated)
    decision = select_best(params, pool, clock=clock)
    cache.put_decision(key, decision)
    metrics.inc("selections_total")
    return decision


def offline_best_of_n_eval(
    params: reward.RewardModelParams,
    posts: Sequence[Post],
    n_values: Sequence[int],
    candidates_for: Callable[[Post], Sequence[str]],
) -> dict[int, float]:
    """Mean best-of-N engagement probability relative to best-of-1.

    candidates_for(post) returns the full candidate list; N-candidate sets
    are its nested prefixes, so ratios are non-decreasing in N.
    """
    if not posts:
        raise EmptyEvalSet("no posts to evaluate")
    if not n_values:
        raise ValueError("n_values must be non-empty")
    all_scores = []
    max_n = max(n_values)
    for post in posts:
        cands = list(candidates_for(post))[:max_n]
        if not cands:
            raise EmptyEvalSet(f"post {post.post_id} has no candidates")
        all_scores.append(
            [reward.sigmoid(reward.score(params, post.text, c)) for c in cands]
        )
    base = sum(s[0] for s in all_scores) / len(all_scores)
    ratios = {}
    for n in n_values:
        mean_best = sum(max(s[: min(n, len(s))]) for s in all_scores) / len(all_scores)
        ratios[n] = mean_best / base
    return ratios


def score_lift(
    params: reward.RewardModelParams,
    posts: Sequence[Post],
    candidate_generator_a: Callable[[Post], str],
    candidate_generator_b: Callable[[Post], str],
    score_fn: Callable[[reward.RewardModelParams, str, str], float] | None = None,
) -> dict[str, float]:
    """Win rate of generator A over B and the ratio of mean scores."""
    if not posts:
        raise EmptyEvalSet("no posts to evaluate")
    score_fn = score_fn or reward.engagement_probability
    wins = 0
    totals_a = totals_b = 0.0
    for post in posts:
        sa = score_fn(params, post.text, candidate_generator_a(post))
        sb = score_fn(params, post.text, candidate_generator_b(post))
        wins += sa >= sb
        totals_a += sa
        totals_b += sb
    return {"win_rate": wins / len(posts), "ratio": totals_a / totals_b}
