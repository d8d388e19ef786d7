import numpy as np
import pytest

from engageopt import features, generators, pipeline, reward, simulator
from engageopt.core import SOURCE_GENERATED, SOURCE_RULE, Post


class TestCorpus:
    def test_count(self):
        assert len(simulator.gen_corpus(100, seed=1)) == 100

    def test_deterministic(self):
        a = simulator.gen_corpus(50, seed=9)
        b = simulator.gen_corpus(50, seed=9)
        assert a == b

    def test_greeting_quota(self):
        corpus = simulator.gen_corpus(200, seed=2, greeting_fraction=0.25)
        greetings = sum(
            1 for p in corpus
            if any(p.text.startswith(g.split()[0]) for g in ["Hi", "Hello", "Hey", "Good"])
        )
        assert greetings >= 20  # at least 10% of posts open with a greeting


class TestUserModel:
    def test_deterministic_limit(self):
        model = simulator.planted_user_model(noise_temperature=1e-12, bias=0.0)
        post = simulator.gen_corpus(1, seed=3)[0]
        high = "CRIME ALERT stolen package found"   # positive planted tokens
        low = "Hello neighbors..."                   # greeting tokens + ellipsis
        assert model.latent(post.text, high) > 0 > model.latent(post.text, low)
        assert model.click_probability(post.text, high) == pytest.approx(1.0)
        assert model.click_probability(post.text, low) == pytest.approx(0.0)

    def test_ctr_converges_to_sigmoid(self):
        model = simulator.planted_user_model(noise_temperature=1.0)
        post = simulator.gen_corpus(1, seed=4)[0]
        subject = "Free mulch available on Oak Street"
        p = model.click_probability(post.text, subject)
        rng = np.random.default_rng(0)
        clicks = rng.binomial(10000, p)
        assert abs(clicks / 10000 - p) < 0.02

    def test_negate_weight_flips_one_dim(self):
        model = simulator.planted_user_model()
        flipped = simulator.negate_weight(model, "ends_with_ellipsis")
        idx = features.DENSE_INDEX["ends_with_ellipsis"]
        assert flipped.weights[idx] == -model.weights[idx]
        diff = np.nonzero(flipped.weights != model.weights)[0]
        assert list(diff) == [idx]


class TestSimulateAb:
    def arms(self, seed=0):
        return {
            SOURCE_RULE: lambda p: generators.rule_based_subject(p.text),
            SOURCE_GENERATED: lambda p: simulator.synthetic_generator(p, 0, seed=seed),
        }

    def test_send_accounting(self):
        config = simulator.SimConfig(num_posts=20, sends_per_post=600, seed=5)
        corpus = simulator.gen_corpus(20, seed=5)
        lines, catalog = simulator.simulate_ab(
            corpus, self.arms(), simulator.planted_user_model(), config
        )
        records = pipeline.ingest_logs(lines)
        per_post = {}
        for r in records:
            per_post[r.post_id] = per_post.get(r.post_id, 0) + r.sends
        assert all(total == 600 for total in per_post.values())
        arm_sends = [r.sends for r in records]
        assert all(200 < s < 400 for s in arm_sends)  # roughly 300 each at split 0.5
        assert len(catalog) == 20

    def test_logs_are_pipeline_compatible(self):
        config = simulator.SimConfig(num_posts=10, sends_per_post=1000, seed=6)
        corpus = simulator.gen_corpus(10, seed=6)
        lines, catalog = simulator.simulate_ab(
            corpus, self.arms(), simulator.planted_user_model(), config
        )
        records = pipeline.ingest_logs(lines)
        aggregates = pipeline.aggregate_records(records, catalog)
        pairs, summary = pipeline.label_pairs(
            aggregates, pipeline.PipelineConfig(min_sends_scope=pipeline.SCOPE_COMBINED)
        )
        assert summary.total == 10
        assert summary.emitted == len(pairs)

    def test_deterministic_per_seed(self):
        config = simulator.SimConfig(num_posts=10, sends_per_post=100, seed=7)
        corpus = simulator.gen_corpus(10, seed=7)
        model = simulator.planted_user_model()
        a = simulator.simulate_ab(corpus, self.arms(), model, config)
        b = simulator.simulate_ab(corpus, self.arms(), model, config)
        assert a == b

    def test_deterministic_limit_ctrs(self):
        model = simulator.planted_user_model(noise_temperature=1e-12, bias=0.0)
        post = Post("p0", "Hello neighbors. CRIME ALERT stolen package on Oak Street.")
        config = simulator.SimConfig(num_posts=1, sends_per_post=400, seed=8)
        arms = {
            SOURCE_RULE: lambda p: "Hello neighbors...",            # negative latent
            SOURCE_GENERATED: lambda p: "CRIME ALERT stolen package",  # positive latent
        }
        lines, catalog = simulator.simulate_ab([post], arms, model, config)
        records = pipeline.ingest_logs(lines)
        by_source = {r.source: r for r in records}
        assert by_source["generated"].clicks == by_source["generated"].sends
        assert by_source["rule"].clicks == 0


class TestPreferenceSampling:
    def test_oracle_is_ceiling(self):
        model = simulator.planted_user_model()
        corpus = simulator.gen_corpus(100, seed=10)
        pairs = simulator.sample_preference_pairs(model, corpus, 2000, seed=10)
        oracle = simulator.bayes_oracle_accuracy(model, pairs)
        assert 0.5 < oracle <= 1.0

    def test_winner_never_equals_loser(self):
        model = simulator.planted_user_model()
        corpus = simulator.gen_corpus(50, seed=11)
        pairs = simulator.sample_preference_pairs(model, corpus, 500, seed=11)
        assert all(p.winner_text != p.loser_text for p in pairs)


@pytest.fixture(scope="module")
def report():
    return simulator.run_end_to_end(simulator.SimConfig(num_posts=600, seed=12))


class TestEndToEnd:
    def test_selector_beats_rule(self, report):
        assert report.lifts[simulator.ARM_SELECTOR]["lift_pct"] > 0
        assert report.lifts[simulator.ARM_SELECTOR]["significant_95"]

    def test_generator_sign_pattern(self, report):
        # generated-only underperforms while the selector arm wins
        assert report.lifts[simulator.ARM_GENERATOR_ONLY]["lift_pct"] < 0
        assert report.lifts[simulator.ARM_SELECTOR]["lift_pct"] > 0

    def test_model_near_oracle(self, report):
        assert report.oracle_accuracy - report.holdout_accuracy < 0.02 + 1e-9

    def test_ctrs_in_range(self, report):
        for stats in report.arms.values():
            assert 0.0 <= stats["ctr"] <= 1.0

    def test_reproducible_reports(self, report):
        again = simulator.run_end_to_end(simulator.SimConfig(num_posts=600, seed=12))
        assert again.to_json() == report.to_json()
