"""Linear reward models over engineered + hashed text features.

Pointwise: L2-regularized logistic regression predicting "engaging" vs not.
Pairwise: Bradley-Terry maximum likelihood on feature differences, so
P(a beats b) = sigmoid(score(a) - score(b)).

Both objectives are convex and fitted by full-batch gradient descent with a
fixed step (capped at 1/L for a data-derived Lipschitz bound L, so every
step is a descent step) and gradient-norm stopping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse as sp

from . import features
from .errors import (
    EmptyCandidateSet,
    EmptyEvalSet,
    EmptyTrainingSet,
    NumericalError,
    SchemaMismatch,
)
from .features import FeatureVector, featurize

KIND_POINTWISE = "pointwise"
KIND_PAIRWISE = "pairwise"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    l2: float = 1e-4
    max_epochs: int = 200
    grad_tol: float = 1e-6
    seed: int = 0


@dataclass(frozen=True)
class PointwiseDatum:
    post_text: str
    subject_text: str
    label: bool  # True = engaging ("yes")


@dataclass(frozen=True)
class PairDatum:
    post_text: str
    winner_text: str
    loser_text: str


@dataclass
class RewardModelParams:
    weights: np.ndarray
    bias: float
    schema_version: int
    kind: str
    metadata: dict = field(default_factory=dict)

    def save(self, path: str | Path) -> None:
        payload = {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "bias": self.bias,
            "weights": self.weights.tolist(),
            "metadata": self.metadata,
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RewardModelParams":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            weights=np.asarray(payload["weights"], dtype=np.float64),
            bias=float(payload["bias"]),
            schema_version=int(payload["schema_version"]),
            kind=payload["kind"],
            metadata=payload.get("metadata", {}),
        )


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(x: float) -> float:
    return float(_sigmoid(x))


def assemble_matrix(vectors: Sequence[FeatureVector]) -> sp.csr_matrix:
    """Stack feature vectors into a CSR design matrix."""
    data, indices, indptr = [], [], [0]
    for fv in vectors:
        for j, v in enumerate(fv.dense):
            if v != 0.0:
                indices.append(j)
                data.append(v)
        for bucket, v in sorted(fv.sparse.items()):
            if v != 0.0:
                indices.append(features.DENSE_DIM + bucket)
                data.append(v)
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(vectors), features.TOTAL_DIM),
    )


def logistic_loss_and_grad(w, bias, X, y, l2, fit_bias=True):
    """Mean logistic loss + l2*||w||^2 over labels y in {-1,+1}, with gradients."""
    margins = X @ w + bias
    z = -y * margins
    # log(1 + exp(z)) computed stably
    loss = float(np.mean(np.logaddexp(0.0, z))) + l2 * float(w @ w)
    coeff = -y * _sigmoid(z) / len(y)
    grad_w = X.T @ coeff + 2.0 * l2 * w
    grad_b = float(np.sum(coeff)) if fit_bias else 0.0
    return loss, np.asarray(grad_w).ravel(), grad_b


def bt_loss_and_grad(w, Xdiff, l2):
    """Negative Bradley-Terry log-likelihood (mean) over winner-loser diffs."""
    margins = Xdiff @ w
    loss = float(np.mean(np.logaddexp(0.0, -margins))) + l2 * float(w @ w)
    coeff = -_sigmoid(-margins) / Xdiff.shape[0]
    grad_w = Xdiff.T @ coeff + 2.0 * l2 * w
    return loss, np.asarray(grad_w).ravel()


def _max_row_sq(X) -> float:
    sq = X.multiply(X) if sp.issparse(X) else np.square(X)
    row_sums = np.asarray(sq.sum(axis=1)).ravel()
    return float(row_sums.max()) if len(row_sums) else 0.0


def fit_logistic(X, y, config: TrainConfig, fit_bias: bool = True) -> tuple[np.ndarray, float, dict]:
    """Gradient-descent logistic fit. Returns (weights, bias, metadata)."""
    n = X.shape[0]
    if n == 0:
        raise EmptyTrainingSet("no training examples")
    y = np.asarray(y, dtype=np.float64)
    w = np.zeros(X.shape[1])
    bias = 0.0
    lipschitz = (_max_row_sq(X) + (1.0 if fit_bias else 0.0)) / 4.0 + 2.0 * config.l2
    step = min(config.learning_rate, 1.0 / lipschitz) if lipschitz > 0 else config.learning_rate
    epochs = 0
    loss = float("nan")
    for epochs in range(1, config.max_epochs + 1):
        loss, grad_w, grad_b = logistic_loss_and_grad(w, bias, X, y, config.l2, fit_bias)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite loss at epoch {epochs}")
        gnorm = max(float(np.max(np.abs(grad_w))), abs(grad_b))
        if gnorm < config.grad_tol:
            break
        w = w - step * grad_w
        bias = bias - step * grad_b if fit_bias else 0.0
    meta = {"seed": config.seed, "epochs": epochs, "final_loss": loss, "step": step}
    return w, bias, meta


def fit_bradley_terry(Xdiff, config: TrainConfig) -> tuple[np.ndarray, dict]:
    """Gradient-descent Bradley-Terry fit on winner-loser feature differences."""
    n = Xdiff.shape[0]
    if n == 0:
        raise EmptyTrainingSet("no training pairs")
    w = np.zeros(Xdiff.shape[1])
    lipschitz = _max_row_sq(Xdiff) / 4.0 + 2.0 * config.l2
    step = min(config.learning_rate, 1.0 / lipschitz) if lipschitz > 0 else config.learning_rate
    epochs = 0
    loss = float("nan")
    for epochs in range(1, config.max_epochs + 1):
        loss, grad_w = bt_loss_and_grad(w, Xdiff, config.l2)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite loss at epoch {epochs}")
        if float(np.max(np.abs(grad_w))) < config.grad_tol:
            break
        w = w - step * grad_w
    meta = {"seed": config.seed, "epochs": epochs, "final_loss": loss, "step": step}
    return w, meta


def train_pointwise(examples: Sequence[PointwiseDatum], config: TrainConfig = TrainConfig()) -> RewardModelParams:
    if not examples:
        raise EmptyTrainingSet("no pointwise examples")
    vectors = [featurize(ex.post_text, ex.subject_text) for ex in examples]
    X = assemble_matrix(vectors)
    y = np.array([1.0 if ex.label else -1.0 for ex in examples])
    w, bias, meta = fit_logistic(X, y, config)
    return RewardModelParams(
        weights=w, bias=bias, schema_version=features.SCHEMA_VERSION,
        kind=KIND_POINTWISE, metadata=meta,
    )


def train_pairwise(pairs: Sequence[PairDatum], config: TrainConfig = TrainConfig()) -> RewardModelParams:
    if not pairs:
        raise EmptyTrainingSet("no pairs")
    diffs = []
    for p in pairs:
        fw = featurize(p.post_text, p.winner_text)
        fl = featurize(p.post_text, p.loser_text)
        dense = fw.dense - fl.dense
        sparse_diff = dict(fw.sparse)
        for k, v in fl.sparse.items():
            sparse_diff[k] = sparse_diff.get(k, 0.0) - v
        diffs.append(FeatureVector(dense=dense, sparse=sparse_diff))
    Xdiff = assemble_matrix(diffs)
    w, meta = fit_bradley_terry(Xdiff, config)
    return RewardModelParams(
        weights=w, bias=0.0, schema_version=features.SCHEMA_VERSION,
        kind=KIND_PAIRWISE, metadata=meta,
    )


def _check_schema(params: RewardModelParams) -> None:
    if params.schema_version != features.SCHEMA_VERSION:
        raise SchemaMismatch(
            f"params schema {params.schema_version} != featurizer schema {features.SCHEMA_VERSION}"
        )
    if len(params.weights) != features.TOTAL_DIM:
        raise SchemaMismatch(
            f"params dimension {len(params.weights)} != schema dimension {features.TOTAL_DIM}"
        )


def score_features(params: RewardModelParams, fv: FeatureVector) -> float:
    _check_schema(params)
    total = float(params.weights[: features.DENSE_DIM] @ fv.dense) + params.bias
    for bucket, v in fv.sparse.items():
        total += params.weights[features.DENSE_DIM + bucket] * v
    return total


def score(params: RewardModelParams, post_text: str, subject_text: str) -> float:
    return score_features(params, featurize(post_text, subject_text))


def engagement_probability(params: RewardModelParams, post_text: str, subject_text: str) -> float:
    """Sigmoid of the linear score; the model's 'this is engaging' probability."""
    return sigmoid(score(params, post_text, subject_text))


def prob_prefers(params: RewardModelParams, post_text: str, a: str, b: str) -> float:
    """Bradley-Terry probability that candidate a beats candidate b."""
    return sigmoid(score(params, post_text, a) - score(params, post_text, b))


def evaluate_accuracy(params: RewardModelParams, pairs: Sequence[PairDatum]) -> float:
    """Fraction of pairs where the winner outscores the loser; ties count as wrong."""
    if not pairs:
        raise EmptyEvalSet("no evaluation pairs")
    correct = sum(
        1
        for p in pairs
        if score(params, p.post_text, p.winner_text) > score(params, p.post_text, p.loser_text)
    )
    return correct / len(pairs)


def classification_metrics(
    params: RewardModelParams, pairs: Sequence[PairDatum], threshold: float = 0.5
) -> dict:
    """Precision/recall for 'winner beats loser' at a preference-probability threshold."""
    if not pairs:
        raise EmptyEvalSet("no evaluation pairs")
    tp = fp = fn = 0
    for p in pairs:
        predicted = prob_prefers(params, p.post_text, p.winner_text, p.loser_text) > threshold
        if predicted:
            tp += 1
        else:
            fn += 1
        # the mirrored pair carries the complementary prediction
        if prob_prefers(params, p.post_text, p.loser_text, p.winner_text) > threshold:
            fp += 1
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    return {"precision": precision, "recall": recall, "threshold": threshold}


@dataclass
class TournamentResult:
    ordered: list
    winner_index: int
    comparison_count: int


def rank_tournament(
    params: RewardModelParams, post_text: str, candidates: Sequence[str]
) -> TournamentResult:
    """Single-elimination pass: running champion vs each next candidate.

    Uses m-1 pairwise comparisons; with a linear scorer the champion is the
    score argmax.
    """
    if not candidates:
        raise EmptyCandidateSet("no candidates to rank")
    scores = [score(params, post_text, c) for c in candidates]
    champion = 0
    comparisons = 0
    for i in range(1, len(candidates)):
        comparisons += 1
        if sigmoid(scores[i] - scores[champion]) > 0.5:
            champion = i
    ordered = [candidates[champion]] + [c for i, c in enumerate(candidates) if i != champion]
    return TournamentResult(ordered=ordered, winner_index=champion, comparison_count=comparisons)
