import copy
import random
import threading

import numpy as np
import pytest

from conftest import FailingEndpoint, SequenceEndpoint, no_sleep
from engageopt import features, generators, reward, selector
from engageopt.core import (
    SOURCE_FALLBACK,
    SOURCE_GENERATED,
    SOURCE_RULE,
    Post,
    SubjectLineCandidate,
)
from engageopt.errors import EmptyEvalSet
from engageopt.generators import BackoffConfig, GeneratorSpec

POST = Post(post_id="p1", text="Hello. There is a lost dog near Oak Street.")


def flat_params():
    return reward.RewardModelParams(
        weights=np.zeros(features.TOTAL_DIM), bias=0.0,
        schema_version=features.SCHEMA_VERSION, kind=reward.KIND_PAIRWISE,
    )


def make_pool(candidates):
    return selector.CandidatePool(post_id="p1", post_text=POST.text, candidates=candidates)


class TestSelectBest:
    def test_argmax(self, toy_params):
        pool = make_pool([
            SubjectLineCandidate("Hello.", SOURCE_RULE),
            SubjectLineCandidate("Lost dog near Oak Street", SOURCE_GENERATED),
        ])
        decision = selector.select_best(toy_params, pool)
        assert decision.chosen.text == max(decision.scores, key=decision.scores.get)
        assert decision.scores[decision.chosen.text] == max(decision.scores.values())

    def test_tie_prefers_rule(self):
        pool = make_pool([
            SubjectLineCandidate("Different generated text", SOURCE_GENERATED),
            SubjectLineCandidate("Hello.", SOURCE_RULE),
        ])
        decision = selector.select_best(flat_params(), pool)  # all scores exactly 0
        assert decision.source == SOURCE_RULE

    def test_rule_only_pool(self, toy_params):
        pool = make_pool([SubjectLineCandidate("Hello.", SOURCE_RULE)])
        decision = selector.select_best(toy_params, pool)
        assert decision.source == SOURCE_RULE
        assert decision.chosen.text == "Hello."

    def test_chosen_score_is_pool_max_randomized(self, toy_params):
        rng = random.Random(6)
        words = ["crime", "alert", "dog", "free", "hello", "sale", "urgent", "lost"]
        for _ in range(100):
            texts = {" ".join(rng.sample(words, rng.randint(2, 4))).capitalize()
                     for _ in range(rng.randint(1, 6))}
            cands = [SubjectLineCandidate("Rule subject.", SOURCE_RULE)]
            cands += [SubjectLineCandidate(t, SOURCE_GENERATED) for t in texts]
            decision = selector.select_best(toy_params, make_pool(cands))
            assert decision.scores[decision.chosen.text] == max(decision.scores.values())


class TestCache:
    def test_level2_requires_level1(self, tmp_path):
        cache = selector.SelectionCache(tmp_path / "cache.bin")
        decision = selector.SelectionDecision(
            post_id="p1", chosen=SubjectLineCandidate("X", SOURCE_RULE),
            source=SOURCE_RULE, scores={"X": 0.0}, cached=False, timestamp=0.0,
        )
        with pytest.raises(ValueError):
            cache.put_decision(cache.key("p1", "v1"), decision)
        cache.put_candidates(cache.key("p1", "v1"), ["A", "B"])
        cache.put_decision(cache.key("p1", "v1"), decision)
        entry = cache.get(cache.key("p1", "v1"))
        assert entry["candidates"] == ["A", "B"]
        assert entry["decision"]["chosen"]["text"] == "X"

    def test_persistence_round_trip(self, tmp_path):
        path = tmp_path / "cache.bin"
        cache = selector.SelectionCache(path)
        cache.put_candidates(cache.key("p1", "v1"), ["One", "Two"])
        cache.put_candidates(cache.key("p2", "v1"), ["Three"])
        reloaded = selector.SelectionCache(path)
        assert reloaded.get(cache.key("p1", "v1"))["candidates"] == ["One", "Two"]
        assert reloaded.get(cache.key("p2", "v1"))["candidates"] == ["Three"]

    def test_compaction_keeps_latest(self, tmp_path):
        path = tmp_path / "cache.bin"
        cache = selector.SelectionCache(path)
        key = cache.key("p1", "v1")
        for i in range(50):
            cache.put_candidates(key, [f"candidate {i}"])
        size_before = path.stat().st_size
        cache.compact()
        assert path.stat().st_size < size_before
        assert selector.SelectionCache(path).get(key)["candidates"] == ["candidate 49"]

    def test_ttl_expiry(self, tmp_path):
        now = [0.0]
        cache = selector.SelectionCache(None, ttl=100.0, clock=lambda: now[0])
        key = cache.key("p1", "v1")
        cache.put_candidates(key, ["A"])
        assert cache.get(key) is not None
        now[0] = 101.0
        assert cache.get(key) is None


class TestSelectForPost:
    def run_select(self, endpoint, params, cache, n=2, post=POST, backoff=None):
        return selector.select_for_post(
            post, n, params, cache, endpoint, [GeneratorSpec()],
            backoff=backoff or BackoffConfig(max_attempts=2),
            sleep=no_sleep,
        )

    def test_cold_then_cached(self, toy_params):
        endpoint = SequenceEndpoint(["Lost dog near Oak Street"])
        cache = selector.SelectionCache()
        first = self.run_select(endpoint, toy_params, cache)
        assert first.cached is False
        second = self.run_select(endpoint, toy_params, cache)
        assert second.cached is True
        assert second.chosen == first.chosen
        assert endpoint.calls == 1

    def test_600_sequential_calls_one_generation(self, toy_params):
        endpoint = SequenceEndpoint(["Lost dog near Oak Street"])
        cache = selector.SelectionCache()
        decisions = [self.run_select(endpoint, toy_params, cache) for _ in range(600)]
        assert endpoint.calls == 1
        assert sum(d.cached for d in decisions) == 599

    def test_concurrent_cold_start_single_flight(self, toy_params):
        endpoint = SequenceEndpoint(default="Lost dog near Oak Street")
        cache = selector.SelectionCache()
        results = []
        barrier = threading.Barrier(64)

        def worker():
            barrier.wait()
            results.append(self.run_select(endpoint, toy_params, cache))

        threads = [threading.Thread(target=worker) for _ in range(64)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert endpoint.calls == 1
        assert len(results) == 64
        assert len({r.chosen.text for r in results}) == 1

    def test_fallback_on_permanent_failure(self, toy_params):
        endpoint = FailingEndpoint()
        cache = selector.SelectionCache()
        decision = self.run_select(endpoint, toy_params, cache)
        assert decision.source == SOURCE_FALLBACK
        assert decision.chosen.text == generators.rule_based_subject(POST.text)
        # fallback is not cached: the next call retries generation
        calls_before = endpoint.calls
        again = self.run_select(endpoint, toy_params, cache)
        assert again.source == SOURCE_FALLBACK
        assert endpoint.calls > calls_before

    def test_recovery_after_outage_populates_cache(self, toy_params):
        cache = selector.SelectionCache()
        failing = FailingEndpoint()
        assert self.run_select(failing, toy_params, cache).source == SOURCE_FALLBACK
        healthy = SequenceEndpoint(["Lost dog near Oak Street"])
        ok = self.run_select(healthy, toy_params, cache)
        assert ok.source in (SOURCE_RULE, SOURCE_GENERATED)
        assert self.run_select(healthy, toy_params, cache).cached is True

    def test_n1_pool_is_rule_only(self, toy_params):
        endpoint = SequenceEndpoint()
        cache = selector.SelectionCache()
        decision = self.run_select(endpoint, toy_params, cache, n=1)
        assert decision.source == SOURCE_RULE
        assert endpoint.calls == 0

    def test_level1_hit_rescores(self, toy_params):
        # candidates cached without a decision -> scored from level 1, no remote call
        endpoint = SequenceEndpoint()
        cache = selector.SelectionCache()
        key = cache.key(POST.post_id, "v1")
        cache.put_candidates(key, ["Lost dog near Oak Street"])
        decision = self.run_select(endpoint, toy_params, cache)
        assert endpoint.calls == 0
        assert decision.cached is True
        assert cache.get(key)["decision"] is not None


class TestOfflineEval:
    def test_best_of_1_ratio_is_one(self, toy_params):
        posts = [POST]
        ratios = selector.offline_best_of_n_eval(
            toy_params, posts, [1], lambda p: ["Hello.", "Lost dog"]
        )
        assert ratios[1] == pytest.approx(1.0)

    def test_nested_sets_non_decreasing(self, toy_params):
        rng = random.Random(11)
        words = ["crime", "alert", "dog", "free", "hello", "sale", "urgent", "lost", "found"]
        posts = [Post(f"p{i}", "Hello. " + " ".join(rng.sample(words, 5)) + ".") for i in range(40)]

        def candidates(post):
            r = random.Random(post.post_id)
            return [" ".join(r.sample(words, 3)).capitalize() for _ in range(5)]

        ratios = selector.offline_best_of_n_eval(toy_params, posts, [1, 2, 3, 4, 5], candidates)
        values = [ratios[n] for n in (1, 2, 3, 4, 5)]
        assert values == sorted(values)
        assert all(v >= 1.0 for v in values)

    def test_empty_posts_raise(self, toy_params):
        with pytest.raises(EmptyEvalSet):
            selector.offline_best_of_n_eval(toy_params, [], [1], lambda p: ["x"])


class TestScoreLift:
    def test_identical_generators(self, toy_params):
        posts = [POST, Post("p2", "Free mulch. Come get some.")]
        gen = lambda p: "Lost dog near Oak Street"
        out = selector.score_lift(toy_params, posts, gen, gen)
        assert out["win_rate"] == 1.0
        assert out["ratio"] == pytest.approx(1.0)

    def test_ratio_arithmetic(self, toy_params):
        posts = [Post("p1", "text one."), Post("p2", "text two.")]
        fixed = {("p1", "A"): 0.6, ("p2", "A"): 0.8, ("p1", "B"): 0.5, ("p2", "B"): 0.5}

        def score_fn(params, post_text, subject):
            pid = "p1" if post_text == "text one." else "p2"
            return fixed[(pid, subject)]

        out = selector.score_lift(toy_params, posts, lambda p: "A", lambda p: "B", score_fn=score_fn)
        assert out["ratio"] == pytest.approx(1.4)
        assert out["win_rate"] == 1.0

    def test_empty_posts_raise(self, toy_params):
        with pytest.raises(EmptyEvalSet):
            selector.score_lift(toy_params, [], lambda p: "A", lambda p: "B")
