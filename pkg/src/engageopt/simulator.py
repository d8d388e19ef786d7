"""Synthetic corpus, planted click model, and bucketed A/B loop.

The planted user model shares the production feature schema, so the
Bayes-optimal pairwise comparator is computable in closed form and every
learned quantity can be checked against an exact oracle.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import features, generators, pipeline, reward, selector
from .core import SOURCE_GENERATED, SOURCE_RULE, Post, SubjectLineCandidate
from .features import DENSE_DIM, DENSE_INDEX, TOTAL_DIM, featurize, hash_bucket

ARM_RULE_ONLY = "rule_only"
ARM_GENERATOR_ONLY = "generator_only"
ARM_SELECTOR = "selector"

_EPS = 1e-9


@dataclass
class SyntheticUserModel:
    weights: np.ndarray          # planted w*, TOTAL_DIM
    bias: float = 0.0
    noise_temperature: float = 1.0

    def latent(self, post_text: str, subject_text: str) -> float:
        fv = featurize(post_text, subject_text)
        total = float(self.weights[:DENSE_DIM] @ fv.dense) + self.bias
        for bucket, v in fv.sparse.items():
            total += self.weights[DENSE_DIM + bucket] * v
        return total

    def click_probability(self, post_text: str, subject_text: str) -> float:
        return reward.sigmoid(self.latent(post_text, subject_text) / max(self.noise_temperature, _EPS))


@dataclass(frozen=True)
class SimConfig:
    num_posts: int = 500
    sends_per_post: int = 600
    bucket_split: float = 0.5
    days: int = 1
    seed: int = 0
    noise_temperature: float = 1.0
    arms: tuple = (ARM_RULE_ONLY, ARM_GENERATOR_ONLY, ARM_SELECTOR)
    holdout_fraction: float = 0.2
    train_epochs: int = 400
    greeting_fraction: float = 0.25
    # with ~300 sends per arm the per-arm filter is knife-edge, so the
    # simulator filters on the post total by default
    min_sends_scope: str = pipeline.SCOPE_COMBINED

    def __post_init__(self):
        if self.sends_per_post < 1:
            raise ValueError(f"sends_per_post must be >= 1, got {self.sends_per_post}")
        if not 0.0 < self.bucket_split < 1.0:
            raise ValueError(f"bucket_split must be in (0, 1), got {self.bucket_split}")


_GREETINGS = [
    "Hi neighbors.",
    "Hello everyone.",
    "Good morning all.",
    "Hey there friends.",
    "Hello lovely neighbors.",
]

_TOPICS = [
    ("crime", ["CRIME ALERT on {street} last night", "someone broke into a car on {street}",
               "suspicious person spotted near {street}", "package stolen from a porch on {street}"]),
    ("pets", ["lost dog seen near {street}", "found a gray cat wandering {street}",
              "my dog ran off near {street} this morning"]),
    ("sale", ["free mulch available on {street}", "garage sale this weekend on {street} with {num} tables",
              "selling a couch for {num} dollars"]),
    ("safety", ["URGENT WARNING about a scam targeting seniors", "fire hydrant leaking on {street}",
                "water main break closing {street} today"]),
    ("community", ["petition to add a stop sign at {street}", "looking for a plumber recommendation",
                   "farmers market returns with {num} vendors"]),
]

_STREETS = ["Oak Street", "Maple Avenue", "Cedar Lane", "Elm Drive", "Birch Court", "Pine Road"]

_FILLER = [
    "Please share with anyone who might know more",
    "Thanks for reading and stay safe out there",
    "Let me know in the comments if you have questions",
    "I will update this post when I learn more",
]

# Tokens the planted model reacts to; interesting ones attract clicks,
# greeting ones repel them.
_INTERESTING_TOKENS = [
    "crime", "alert", "urgent", "warning", "stolen", "lost", "found", "free",
    "fire", "scam", "break", "dog", "cat", "sale", "petition", "leaking",
]
_GREETING_TOKENS = ["hi", "hello", "hey", "morning", "neighbors", "everyone", "friends", "there"]


def gen_corpus(num_posts: int, seed: int = 0, greeting_fraction: float = 0.3) -> list[Post]:
    """Templated posts; at least greeting_fraction of them open with a
    greeting-only first sentence (forcing a weak rule-based subject)."""
    rng = random.Random(seed)
    posts = []
    n_greeting = max(1, round(num_posts * greeting_fraction)) if num_posts else 0
    greeting_ids = set(rng.sample(range(num_posts), n_greeting)) if num_posts else set()
    for i in range(num_posts):
        topic, phrases = _TOPICS[rng.randrange(len(_TOPICS))]
        highlight = phrases[rng.randrange(len(phrases))]
        highlight = highlight.replace("{street}", rng.choice(_STREETS))
        highlight = highlight.replace("{num}", str(rng.randrange(2, 50)))
        if i in greeting_ids:
            first = rng.choice(_GREETINGS)
        else:
            first = highlight[0].upper() + highlight[1:] + "."
            highlight = phrases[rng.randrange(len(phrases))]
            highlight = highlight.replace("{street}", rng.choice(_STREETS))
            highlight = highlight.replace("{num}", str(rng.randrange(2, 50)))
        body = f"I wanted to let you know that {highlight}. {rng.choice(_FILLER)}."
        posts.append(Post(post_id=f"post-{i:05d}", text=f"{first} {body}"))
    return posts


def planted_user_model(noise_temperature: float = 1.0, bias: float = -1.0) -> SyntheticUserModel:
    """Default planted weights: ~30 active dims over the shared schema."""
    w = np.zeros(TOTAL_DIM)
    w[DENSE_INDEX["ends_with_ellipsis"]] = -1.2
    w[DENSE_INDEX["emoji_present"]] = -0.8
    w[DENSE_INDEX["all_caps_word_count"]] = 0.35
    w[DENSE_INDEX["digit_present"]] = 0.3
    w[DENSE_INDEX["question_mark"]] = 0.15
    w[DENSE_INDEX["first_person_pronoun"]] = 0.2
    w[DENSE_INDEX["word_count"]] = 0.25
    w[DENSE_INDEX["capital_ratio"]] = 0.2
    for tok in _INTERESTING_TOKENS:
        bucket, sign = hash_bucket(tok)
        w[DENSE_DIM + bucket] += sign * 0.6
    for tok in _GREETING_TOKENS:
        bucket, sign = hash_bucket(tok)
        w[DENSE_DIM + bucket] += sign * -0.9
    return SyntheticUserModel(weights=w, bias=bias, noise_temperature=noise_temperature)


def negate_weight(model: SyntheticUserModel, feature_name: str) -> SyntheticUserModel:
    """Return a copy with one planted weight's sign flipped (a preference shift)."""
    w = model.weights.copy()
    if feature_name in DENSE_INDEX:
        idx = DENSE_INDEX[feature_name]
    else:
        bucket, _ = hash_bucket(feature_name)
        idx = DENSE_DIM + bucket
    w[idx] = -w[idx]
    return replace(model, weights=w)


def synthetic_generator(post: Post, k: int = 0, seed: int = 0, max_words: int = 10) -> str:
    """Deterministic mock of the remote generator: extracts the highlight
    phrase from the post body, with style noise (ellipsis, emoji)."""
    rng = random.Random((hash_bucket(post.post_id)[0] << 8) ^ (k * 7919) ^ seed)
    sentences = [s.strip() for s in post.text.split(".") if s.strip()]
    body = sentences[1] if len(sentences) > 1 else sentences[0]
    if body.lower().startswith("i wanted to let you know that"):
        body = body[len("i wanted to let you know that"):].strip()
    words = body.split()
    if len(words) > max_words or rng.random() < 0.75:
        text = " ".join(words[:max_words]) + "..."
    else:
        text = " ".join(words)
    if rng.random() < 0.35:
        text += " \U0001F642"
    return generators.postprocess(text, max_words)


def default_candidate_fn(seed: int = 0) -> Callable[[Post, int], str]:
    """Candidate k for a post: k=0 is the rule-based subject, k>=1 are
    synthetic generator samples."""

    def candidate(post: Post, k: int) -> str:
        if k == 0:
            return generators.rule_based_subject(post.text)
        return synthetic_generator(post, k - 1, seed=seed)

    return candidate


def sample_preference_pairs(
    model: SyntheticUserModel,
    corpus: Sequence[Post],
    n_pairs: int,
    seed: int = 0,
    candidate_fn: Callable[[Post, int], str] | None = None,
    n_candidates: int = 4,
) -> list[reward.PairDatum]:
    """Bradley-Terry sampling: draw two candidates for a random post and pick
    the winner with probability sigmoid(latent difference / temperature)."""
    candidate_fn = candidate_fn or default_candidate_fn(seed)
    rng = random.Random(seed)
    pairs = []
    while len(pairs) < n_pairs:
        post = corpus[rng.randrange(len(corpus))]
        i, j = rng.sample(range(n_candidates), 2)
        a, b = candidate_fn(post, i), candidate_fn(post, j)
        if a == b:
            continue
        delta = (model.latent(post.text, a) - model.latent(post.text, b)) / max(
            model.noise_temperature, _EPS
        )
        a_wins = rng.random() < reward.sigmoid(delta)
        winner, loser = (a, b) if a_wins else (b, a)
        pairs.append(reward.PairDatum(post_text=post.text, winner_text=winner, loser_text=loser))
    return pairs


def bayes_oracle_accuracy(model: SyntheticUserModel, pairs: Sequence[reward.PairDatum]) -> float:
    """Accuracy of classifying winners by the sign of the planted latent
    difference; the ceiling for any learned comparator.

    Tied latents carry no signal (the label was a coin flip), so they score
    half credit, matching the expected accuracy of any tie-break.
    """
    total = 0.0
    for p in pairs:
        delta = model.latent(p.post_text, p.winner_text) - model.latent(p.post_text, p.loser_text)
        total += 1.0 if delta > 0 else (0.5 if delta == 0 else 0.0)
    return total / len(pairs)


def simulate_ab(
    corpus: Sequence[Post],
    arm_subjects: dict[str, Callable[[Post], str]],
    user_model: SyntheticUserModel,
    config: SimConfig,
    day: str = "2025-01-01",
) -> tuple[list[str], dict[str, dict]]:
    """Two-bucket A/B: control gets the rule arm, treatment the generated arm.

    Returns (CSV lines in the pipeline schema, catalog post_id -> texts).
    """
    if set(arm_subjects) != {SOURCE_RULE, SOURCE_GENERATED}:
        raise ValueError("arm_subjects must have exactly 'rule' and 'generated' arms")
    rng = np.random.default_rng(config.seed)
    lines = [",".join(pipeline.CSV_HEADER)]
    catalog: dict[str, dict] = {}
    for post in corpus:
        n_treat = int(rng.binomial(config.sends_per_post, config.bucket_split))
        n_control = config.sends_per_post - n_treat
        variants = {}
        for source, bucket, sends in (
            (SOURCE_RULE, "control", n_control),
            (SOURCE_GENERATED, "treatment", n_treat),
        ):
            subject = arm_subjects[source](post)
            p = user_model.click_probability(post.text, subject)
            clicks = int(rng.binomial(sends, p)) if sends > 0 else 0
            variant_id = f"{post.post_id}-{source}"
            variants[variant_id] = {"subject_text": subject, "source": source}
            lines.append(
                f"{post.post_id},{variant_id},{source},{bucket},{sends},{clicks},{day}"
            )
        catalog[post.post_id] = {"post_id": post.post_id, "post_text": post.text, "variants": variants}
    return lines, catalog


def measure_arm_ctr(
    corpus: Sequence[Post],
    subject_fn: Callable[[Post], str],
    user_model: SyntheticUserModel,
    sends_per_post: int,
    seed: int,
) -> dict[str, float]:
    """Simulated CTR for one arm with a normal-approximation standard error."""
    rng = np.random.default_rng(seed)
    clicks = sends = 0
    for post in corpus:
        p = user_model.click_probability(post.text, subject_fn(post))
        clicks += int(rng.binomial(sends_per_post, p))
        sends += sends_per_post
    ctr = clicks / sends
    se = math.sqrt(max(ctr * (1.0 - ctr), 1e-12) / sends)
    return {"ctr": ctr, "se": se, "clicks": clicks, "sends": sends}


@dataclass
class SimReport:
    config: dict
    label_summary: dict
    pairs_emitted: int
    holdout_accuracy: float
    oracle_accuracy: float
    arms: dict[str, dict]
    lifts: dict[str, dict]

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2)


def _lift_vs_rule(arm: dict, rule: dict) -> dict:
    """Two-proportion z comparison of an arm against rule_only."""
    diff = arm["ctr"] - rule["ctr"]
    se = math.sqrt(arm["se"] ** 2 + rule["se"] ** 2)
    z = diff / se if se > 0 else 0.0
    return {
        "lift_pct": 100.0 * diff / rule["ctr"] if rule["ctr"] > 0 else 0.0,
        "z": z,
        "significant_95": abs(z) > 1.96,
    }


def run_end_to_end(
    config: SimConfig,
    user_model: SyntheticUserModel | None = None,
) -> SimReport:
    """One full loop: collect A/B logs, label and train, then compare arms.

    Phase 1 runs rule vs generated buckets over the corpus; phase 2 labels
    preference pairs and fits the pairwise reward model; phase 3 measures
    per-arm CTRs (rule_only, generator_only, selector) against the planted
    user model.
    """
    user_model = user_model or planted_user_model(noise_temperature=config.noise_temperature)
    corpus = gen_corpus(config.num_posts, seed=config.seed,
                        greeting_fraction=config.greeting_fraction)

    rule_fn = lambda post: generators.rule_based_subject(post.text)
    gen_fn = lambda post: synthetic_generator(post, 0, seed=config.seed)

    # phase 1: collect engagement logs
    lines, catalog = simulate_ab(
        corpus, {SOURCE_RULE: rule_fn, SOURCE_GENERATED: gen_fn}, user_model, config
    )

    # phase 2: label and train
    records = pipeline.ingest_logs(lines)
    aggregates = pipeline.aggregate_records(records, catalog)
    pairs, summary = pipeline.label_pairs(
        aggregates, pipeline.PipelineConfig(min_sends_scope=config.min_sends_scope)
    )
    data = [
        reward.PairDatum(p.post_text, p.winner.text, p.loser.text) for p in pairs
    ]
    rng = random.Random(config.seed)
    rng.shuffle(data)
    n_holdout = max(1, int(len(data) * config.holdout_fraction))
    holdout, train = data[:n_holdout], data[n_holdout:]
    params = reward.train_pairwise(
        train or holdout,
        reward.TrainConfig(learning_rate=1.0, max_epochs=config.train_epochs, seed=config.seed),
    )
    holdout_acc = reward.evaluate_accuracy(params, holdout)
    oracle_acc = bayes_oracle_accuracy(user_model, holdout)

    # phase 3: arm comparison with the trained selector
    def selector_fn(post: Post) -> str:
        pool = selector.CandidatePool(
            post_id=post.post_id,
            post_text=post.text,
            candidates=[
                SubjectLineCandidate(rule_fn(post), SOURCE_RULE),
                SubjectLineCandidate(gen_fn(post), SOURCE_GENERATED),
            ],
        )
        return selector.select_best(params, pool, clock=lambda: 0.0).chosen.text

    arm_fns = {
        ARM_RULE_ONLY: rule_fn,
        ARM_GENERATOR_ONLY: gen_fn,
        ARM_SELECTOR: selector_fn,
    }
    arms = {}
    for i, name in enumerate(config.arms):
        arms[name] = measure_arm_ctr(
            corpus, arm_fns[name], user_model, config.sends_per_post, seed=config.seed + 1000 + i
        )
    lifts = {}
    if ARM_RULE_ONLY in arms:
        for name, stats in arms.items():
            if name != ARM_RULE_ONLY:
                lifts[name] = _lift_vs_rule(stats, arms[ARM_RULE_ONLY])

    return SimReport(
        config={
            "num_posts": config.num_posts,
            "sends_per_post": config.sends_per_post,
            "bucket_split": config.bucket_split,
            "seed": config.seed,
            "noise_temperature": config.noise_temperature,
        },
        label_summary=summary.to_dict(),
        pairs_emitted=summary.emitted,
        holdout_accuracy=holdout_acc,
        oracle_accuracy=oracle_acc,
        arms=arms,
        lifts=lifts,
    )
