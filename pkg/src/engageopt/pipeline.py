"""Preference data pipeline.

Raw per-bucket send/click logs come in as CSV (one row per post x variant x
day); a companion catalog maps ids to post/subject texts. The pipeline
aggregates the logs, derives CTR lift ratios, filters noisy posts, labels
winner/loser pairs, and renders training examples.
"""

from __future__ import annotations

import csv
import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from . import templates
from .core import SOURCE_GENERATED, SOURCE_RULE, SubjectLineCandidate
from .errors import MissingArm, ParseError, ValidationError, ZeroBaselineCtr

CSV_HEADER = ["post_id", "variant_id", "source", "bucket", "sends", "clicks", "day"]

SCOPE_PER_ARM = "per_arm"
SCOPE_COMBINED = "combined"


@dataclass(frozen=True)
class EngagementRecord:
    post_id: str
    variant_id: str
    source: str   # rule | generated
    bucket: str   # control | treatment
    sends: int
    clicks: int
    day: str


@dataclass
class VariantTotals:
    variant_id: str
    subject_text: str
    source: str
    sends: int = 0
    clicks: int = 0

    @property
    def ctr(self) -> float:
        return self.clicks / self.sends if self.sends > 0 else 0.0


@dataclass
class EngagementAggregate:
    post_id: str
    post_text: str
    variants: dict[str, VariantTotals]

    def arm(self, source: str) -> VariantTotals:
        arms = [v for v in self.variants.values() if v.source == source]
        if not arms:
            raise MissingArm(f"post {self.post_id} has no {source} arm")
        if source == SOURCE_GENERATED and len(arms) > 1:
            raise MissingArm(f"post {self.post_id} has {len(arms)} generated arms; expected 1")
        return arms[0]


@dataclass(frozen=True)
class PipelineConfig:
    margin: float = 0.1
    min_sends: int = 300
    min_sends_scope: str = SCOPE_PER_ARM

    def __post_init__(self):
        if not 0.0 < self.margin < 1.0:
            raise ValueError(f"margin must be in (0, 1), got {self.margin}")
        if self.min_sends < 1:
            raise ValueError(f"min_sends must be >= 1, got {self.min_sends}")
        if self.min_sends_scope not in (SCOPE_PER_ARM, SCOPE_COMBINED):
            raise ValueError(f"unknown min_sends_scope {self.min_sends_scope!r}")


@dataclass(frozen=True)
class PreferencePair:
    post_id: str
    post_text: str
    winner: SubjectLineCandidate
    loser: SubjectLineCandidate
    lift_ratio: float
    shuffle_seed: int

    def to_dict(self) -> dict:
        return {
            "post_id": self.post_id,
            "post_text": self.post_text,
            "winner": self.winner.to_dict(),
            "loser": self.loser.to_dict(),
            "lift_ratio": self.lift_ratio,
            "shuffle_seed": self.shuffle_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreferencePair":
        return cls(
            post_id=d["post_id"],
            post_text=d["post_text"],
            winner=SubjectLineCandidate.from_dict(d["winner"]),
            loser=SubjectLineCandidate.from_dict(d["loser"]),
            lift_ratio=float(d["lift_ratio"]),
            shuffle_seed=int(d["shuffle_seed"]),
        )


@dataclass(frozen=True)
class PointwiseExample:
    input: str
    target: str  # "yes" | "no"


@dataclass(frozen=True)
class PairwiseExample:
    input: str
    target: str  # "a" | "b"


@dataclass
class LabelSummary:
    total: int = 0
    emitted: int = 0
    dropped_min_sends: int = 0
    dropped_zero_ctr: int = 0
    dropped_dead_zone: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def ingest_logs(lines: Iterable[str]) -> list[EngagementRecord]:
    """Parse the engagement log CSV (header required) into records."""
    reader = csv.reader(iter(lines))
    try:
        header = next(reader)
    except StopIteration:
        return []
    if [h.strip() for h in header] != CSV_HEADER:
        raise ParseError(1, f"expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise ParseError(line_no, f"expected {len(CSV_HEADER)} fields, got {len(row)}")
        post_id, variant_id, source, bucket, sends_s, clicks_s, day = row
        if source not in (SOURCE_RULE, SOURCE_GENERATED):
            raise ParseError(line_no, f"unknown source {source!r}")
        if bucket not in ("control", "treatment"):
            raise ParseError(line_no, f"unknown bucket {bucket!r}")
        try:
            sends, clicks = int(sends_s), int(clicks_s)
        except ValueError:
            raise ParseError(line_no, f"non-integer sends/clicks: {sends_s!r}, {clicks_s!r}")
        if sends < 0 or clicks < 0:
            raise ValidationError(line_no, "sends and clicks must be non-negative")
        if clicks > sends:
            raise ValidationError(line_no, f"clicks ({clicks}) exceed sends ({sends})")
        if (source == SOURCE_RULE) != (bucket == "control"):
            raise ValidationError(line_no, f"source {source!r} inconsistent with bucket {bucket!r}")
        records.append(
            EngagementRecord(post_id, variant_id, source, bucket, sends, clicks, day)
        )
    return records


def aggregate_records(
    records: Sequence[EngagementRecord], catalog: dict[str, dict]
) -> list[EngagementAggregate]:
    """Sum sends/clicks per (post, variant) and attach texts from the catalog.

    catalog: post_id -> {"post_text": str, "variants": {variant_id:
    {"subject_text": str, "source": str}}}.
    """
    aggregates: dict[str, EngagementAggregate] = {}
    for rec in records:
        entry = catalog.get(rec.post_id)
        if entry is None:
            raise MissingArm(f"post {rec.post_id} not present in catalog")
        agg = aggregates.get(rec.post_id)
        if agg is None:
            agg = EngagementAggregate(rec.post_id, entry["post_text"], {})
            aggregates[rec.post_id] = agg
        totals = agg.variants.get(rec.variant_id)
        if totals is None:
            var = entry["variants"].get(rec.variant_id)
            if var is None:
                raise MissingArm(f"variant {rec.variant_id} of post {rec.post_id} not in catalog")
            totals = VariantTotals(rec.variant_id, var["subject_text"], var["source"])
            agg.variants[rec.variant_id] = totals
        totals.sends += rec.sends
        totals.clicks += rec.clicks
    return list(aggregates.values())


def compute_lift(aggregate: EngagementAggregate) -> float:
    """CTR of the generated arm over the rule arm."""
    rule = aggregate.arm(SOURCE_RULE)
    gen = aggregate.arm(SOURCE_GENERATED)
    if rule.sends == 0 or gen.sends == 0:
        raise MissingArm(f"post {aggregate.post_id} has an arm with zero sends")
    if rule.ctr == 0.0:
        raise ZeroBaselineCtr(f"post {aggregate.post_id}: rule arm CTR is zero")
    return gen.ctr / rule.ctr


def _shuffle_seed(post_id: str) -> int:
    digest = hashlib.blake2b(post_id.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "big")


def label_pairs(
    aggregates: Sequence[EngagementAggregate], config: PipelineConfig = PipelineConfig()
) -> tuple[list[PreferencePair], LabelSummary]:
    """Filter and label aggregates into preference pairs.

    A pair is emitted only when the post clears the min-sends filter and the
    lift ratio falls strictly outside the [1-margin, 1+margin] dead zone.
    Non-qualifying posts are counted in the summary, never raised.
    """
    summary = LabelSummary(total=len(aggregates))
    pairs = []
    for agg in aggregates:
        try:
            rule = agg.arm(SOURCE_RULE)
            gen = agg.arm(SOURCE_GENERATED)
        except MissingArm:
            summary.dropped_min_sends += 1
            continue
        if config.min_sends_scope == SCOPE_PER_ARM:
            enough = rule.sends >= config.min_sends and gen.sends >= config.min_sends
        else:
            enough = rule.sends + gen.sends >= config.min_sends
        if not enough:
            summary.dropped_min_sends += 1
            continue
        try:
            lift = compute_lift(agg)
        except ZeroBaselineCtr:
            summary.dropped_zero_ctr += 1
            continue
        if lift > 1.0 + config.margin:
            winner, loser = gen, rule
        elif lift < 1.0 - config.margin:
            winner, loser = rule, gen
        else:
            summary.dropped_dead_zone += 1
            continue
        pairs.append(
            PreferencePair(
                post_id=agg.post_id,
                post_text=agg.post_text,
                winner=SubjectLineCandidate(winner.subject_text, winner.source),
                loser=SubjectLineCandidate(loser.subject_text, loser.source),
                lift_ratio=lift,
                shuffle_seed=_shuffle_seed(agg.post_id),
            )
        )
        summary.emitted += 1
    return pairs, summary


def format_pointwise(pair: PreferencePair) -> list[PointwiseExample]:
    """Winner renders with target 'yes', loser with 'no'."""
    examples = []
    for cand, target in ((pair.winner, "yes"), (pair.loser, "no")):
        text = templates.render(
            templates.POINTWISE_TEMPLATE, post=pair.post_text, subject_line=cand.text
        )
        examples.append(PointwiseExample(input=text, target=target))
    return examples


def format_pairwise(pair: PreferencePair) -> PairwiseExample:
    """Slot order is a seeded coin flip; target marks where the winner landed."""
    winner_first = random.Random(pair.shuffle_seed).random() < 0.5
    a, b = (pair.winner, pair.loser) if winner_first else (pair.loser, pair.winner)
    text = templates.render(
        templates.PAIRWISE_TEMPLATE,
        post=pair.post_text,
        subject_line_a=a.text,
        subject_line_b=b.text,
    )
    return PairwiseExample(input=text, target="a" if winner_first else "b")


def export_sft(pairs: Sequence[PreferencePair]) -> list[dict]:
    """Prompt/completion records for supervised fine-tuning of a generator."""
    return [
        {
            "prompt": templates.render(templates.POLICY_TEMPLATE, post=pair.post_text),
            "completion": pair.winner.text,
        }
        for pair in pairs
    ]


def write_jsonl(records: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_pairs(pairs: Sequence[PreferencePair], path) -> None:
    write_jsonl((p.to_dict() for p in pairs), path)


def read_pairs(path) -> list[PreferencePair]:
    return [PreferencePair.from_dict(d) for d in read_jsonl(path)]


def load_catalog(path) -> dict[str, dict]:
    return {d["post_id"]: d for d in read_jsonl(path)}
