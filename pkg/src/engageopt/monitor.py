"""Daily accuracy monitoring and drift-triggered retraining.

Fresh ground-truth pairs from the live buckets are scored against the
deployed model each day; when the relative accuracy drop versus the stored
baseline exceeds the threshold (default 10%), the model is retrained and
swapped in only if the candidate matches or beats the incumbent on holdout.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import reward


@dataclass
class MonitorBaseline:
    baseline_accuracy: float
    established_at: str
    min_sample: int = 500


@dataclass
class MonitorReport:
    day: str
    sample_size: int
    accuracy: float
    relative_drop: float
    retrain_triggered: bool
    insufficient_sample: bool
    alert: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SwapResult:
    params: reward.RewardModelParams
    swapped: bool
    baseline_accuracy: float
    incumbent_accuracy: float
    candidate_accuracy: float
    alert: bool


def daily_check(
    params: reward.RewardModelParams,
    fresh_pairs: Sequence[reward.PairDatum],
    baseline: MonitorBaseline,
    threshold: float = 0.10,
    day: str = "",
) -> MonitorReport:
    sample_size = len(fresh_pairs)
    insufficient = sample_size < baseline.min_sample
    accuracy = reward.evaluate_accuracy(params, fresh_pairs) if fresh_pairs else 0.0
    drop = (baseline.baseline_accuracy - accuracy) / baseline.baseline_accuracy
    triggered = (not insufficient) and drop > threshold
    return MonitorReport(
        day=day,
        sample_size=sample_size,
        accuracy=accuracy,
        relative_drop=drop,
        retrain_triggered=triggered,
        insufficient_sample=insufficient,
    )


def retrain_and_swap(
    incumbent: reward.RewardModelParams,
    training_pairs: Sequence[reward.PairDatum],
    holdout_pairs: Sequence[reward.PairDatum],
    config: reward.TrainConfig = reward.TrainConfig(),
    params_path: str | Path | None = None,
) -> SwapResult:
    """Train a candidate and swap only if it does not regress on holdout.

    When params_path is given the swap is an atomic file replacement; the
    previous file is kept with a .prev suffix.
    """
    candidate = reward.train_pairwise(training_pairs, config)
    candidate_acc = reward.evaluate_accuracy(candidate, holdout_pairs)
    incumbent_acc = reward.evaluate_accuracy(incumbent, holdout_pairs)
    if candidate_acc >= incumbent_acc:
        if params_path is not None:
            path = Path(params_path)
            tmp = path.with_suffix(".tmp")
            candidate.save(tmp)
            if path.exists():
                os.replace(path, path.with_suffix(".prev"))
            os.replace(tmp, path)
        return SwapResult(
            params=candidate, swapped=True, baseline_accuracy=candidate_acc,
            incumbent_accuracy=incumbent_acc, candidate_accuracy=candidate_acc, alert=False,
        )
    return SwapResult(
        params=incumbent, swapped=False, baseline_accuracy=incumbent_acc,
        incumbent_accuracy=incumbent_acc, candidate_accuracy=candidate_acc, alert=True,
    )


def append_report(report: MonitorReport, log_path: str | Path) -> None:
    with open(log_path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
