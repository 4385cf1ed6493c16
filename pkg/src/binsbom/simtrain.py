"""Similarity scores, the pair cross-entropy objective, and siamese training.

Both towers share one parameter set: the product name and the version string
are tokenized and encoded with the same token table (and projection, when
enabled), their similarity is mapped to a correlation probability, and binary
cross-entropy against the pair label drives plain mini-batch gradient descent.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .encoder import EmbeddingModel
from .errors import (
    DimensionMismatch,
    EmptyDataset,
    NonFiniteLoss,
    ZeroVector,
)
from .tokenizer import WordPieceVocab, tokenize

DEFAULT_BATCH_SIZE = 64
FULL_SCALE_BATCH_SIZE = 512


class Similarity(str, Enum):
    COSINE = "cosine"
    DOT = "dot"


@dataclass
class TrainConfig:
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = 1
    learning_rate: float = 0.05
    similarity: Similarity = Similarity.COSINE
    prob_epsilon: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 < self.prob_epsilon < 0.5:
            raise ValueError(f"prob_epsilon must lie in (0, 0.5), got {self.prob_epsilon}")
        self.similarity = Similarity(self.similarity)


@dataclass
class LossReport:
    per_epoch_mean_loss: list[float]
    steps: int

    def to_json_dict(self) -> dict:
        return {"per_epoch_mean_loss": self.per_epoch_mean_loss, "steps": self.steps}


def cosine_sim(u, v) -> float:
    """u.v / (|u||v|), clamped to [-1, 1] against rounding.

    Each vector is pre-scaled by its max-abs component so squared terms never
    underflow; the ratio is scale-free, so the result is unchanged.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"vector lengths differ: {u.shape} vs {v.shape}")
    mu = np.max(np.abs(u))
    mv = np.max(np.abs(v))
    if mu == 0.0 or mv == 0.0:
        raise ZeroVector("cosine similarity undefined for a zero vector")
    u = u / mu
    v = v / mv
    denominator = np.linalg.norm(u) * np.linalg.norm(v)
    return float(min(1.0, max(-1.0, np.dot(u, v) / denominator)))


def dot_sim(u, v) -> float:
    """Plain inner product, accumulated with compensated summation."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"vector lengths differ: {u.shape} vs {v.shape}")
    return math.fsum(float(a) * float(b) for a, b in zip(u, v))


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def pair_probability(
    score: float,
    similarity: Similarity = Similarity.COSINE,
    prob_epsilon: float = 1e-6,
) -> float:
    """Map a similarity score to a correlation probability in (0, 1).

    Cosine scores use the affine map (s+1)/2; unbounded dot scores use the
    logistic. Both are clamped to [eps, 1-eps] so the loss stays finite.
    """
    if similarity is Similarity.COSINE:
        p = (score + 1.0) / 2.0
    else:
        p = _logistic(score)
    return min(1.0 - prob_epsilon, max(prob_epsilon, p))


def pair_loss(p: float, label: int) -> float:
    """Binary cross-entropy of probability p against label in {0, 1}."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    return -(label * math.log(p) + (1 - label) * math.log(1.0 - p))


class _GradAccumulator:
    """Dense gradient buffers matching the model's parameters."""

    def __init__(self, model: EmbeddingModel):
        self.token_table = np.zeros_like(model.token_table)
        self.weight = None
        self.bias = None
        if model.projection is not None:
            self.weight = np.zeros_like(model.projection[0])
            self.bias = np.zeros_like(model.projection[1])

    def zero(self):
        self.token_table[:] = 0.0
        if self.weight is not None:
            self.weight[:] = 0.0
            self.bias[:] = 0.0


def _pooled_ids(seq, pad_id: int) -> np.ndarray:
    return np.asarray([i for i in seq.ids if i != pad_id], dtype=np.intp)


def _pair_loss_and_grads(model, ids_p, ids_s, label, similarity, eps, acc):
    """Forward one pair and, when `acc` is given, add its parameter gradients.

    Returns the pair loss. Gradients flow through both towers into the same
    buffers: the table (and projection) is shared siamese-style.
    """
    table = model.token_table
    pooled_u = table[ids_p].mean(axis=0)
    pooled_v = table[ids_s].mean(axis=0)
    if model.projection is not None:
        weight, bias = model.projection
        u = weight @ pooled_u + bias
        v = weight @ pooled_v + bias
    else:
        u, v = pooled_u, pooled_v

    if similarity is Similarity.COSINE:
        nu = np.linalg.norm(u)
        nv = np.linalg.norm(v)
        if nu == 0.0 or nv == 0.0:
            raise ZeroVector("zero embedding during training")
        s = float(np.dot(u, v) / (nu * nv))
        p_raw = (s + 1.0) / 2.0
        dp_ds = 0.5
    else:
        s = float(np.dot(u, v))
        p_raw = _logistic(s)
        dp_ds = p_raw * (1.0 - p_raw)
    if not math.isfinite(s):
        # Diverged parameters; surface a non-finite loss so train() aborts
        # with the offending step instead of clamping the score silently.
        return math.nan

    clamped = p_raw < eps or p_raw > 1.0 - eps
    p = min(1.0 - eps, max(eps, p_raw))
    loss = -(label * math.log(p) + (1 - label) * math.log(1.0 - p))
    if acc is None:
        return loss

    if clamped:
        return loss  # probability pinned at the clamp: no gradient flows
    dl_dp = (p - label) / (p * (1.0 - p))
    dl_ds = dl_dp * dp_ds
    if similarity is Similarity.COSINE:
        dl_du = dl_ds * (v / (nu * nv) - s * u / (nu * nu))
        dl_dv = dl_ds * (u / (nu * nv) - s * v / (nv * nv))
    else:
        dl_du = dl_ds * v
        dl_dv = dl_ds * u

    if model.projection is not None:
        weight, _ = model.projection
        acc.weight += np.outer(dl_du, pooled_u) + np.outer(dl_dv, pooled_v)
        acc.bias += dl_du + dl_dv
        dl_du = weight.T @ dl_du
        dl_dv = weight.T @ dl_dv
    np.add.at(acc.token_table, ids_p, dl_du / len(ids_p))
    np.add.at(acc.token_table, ids_s, dl_dv / len(ids_s))
    return loss


def pair_loss_value(model, seq_product, seq_string, label, config: TrainConfig) -> float:
    """Loss of one pair under the current parameters (no gradients)."""
    pad = model.config.pad_id
    return _pair_loss_and_grads(
        model, _pooled_ids(seq_product, pad), _pooled_ids(seq_string, pad),
        label, config.similarity, config.prob_epsilon, None,
    )


def pair_loss_grads(model, seq_product, seq_string, label, config: TrainConfig):
    """Loss plus dense analytic gradients for one pair; used by gradient checks."""
    acc = _GradAccumulator(model)
    pad = model.config.pad_id
    loss = _pair_loss_and_grads(
        model, _pooled_ids(seq_product, pad), _pooled_ids(seq_string, pad),
        label, config.similarity, config.prob_epsilon, acc,
    )
    return loss, acc


def train(
    model: EmbeddingModel,
    vocab: WordPieceVocab,
    pairs: list,
    config: TrainConfig,
) -> tuple[EmbeddingModel, LossReport]:
    """Mini-batch gradient descent on the pair cross-entropy objective.

    Per epoch: seeded shuffle, batches of config.batch_size (last batch may be
    smaller, and is trained), mean-batch gradient step. The input model is not
    mutated; the trained copy and per-epoch mean losses are returned. Fully
    deterministic for a fixed seed.
    """
    if not pairs:
        raise EmptyDataset("no training pairs")
    if model.config.vocab_size != len(vocab):
        raise ValueError(
            f"model vocab_size {model.config.vocab_size} != vocabulary size {len(vocab)}"
        )
    model = model.copy()
    pad = model.config.pad_id
    id_cache: dict[str, np.ndarray] = {}

    def pooled(text: str) -> np.ndarray:
        ids = id_cache.get(text)
        if ids is None:
            ids = _pooled_ids(tokenize(text, vocab), pad)
            id_cache[text] = ids
        return ids

    rng = np.random.default_rng(config.seed)
    acc = _GradAccumulator(model)
    per_epoch = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(pairs))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            acc.zero()
            for j in batch:
                pair = pairs[j]
                loss = _pair_loss_and_grads(
                    model, pooled(pair.product), pooled(pair.version_string),
                    pair.label, config.similarity, config.prob_epsilon, acc,
                )
                if not math.isfinite(loss):
                    raise NonFiniteLoss(step)
                epoch_losses.append(loss)
            scale = config.learning_rate / len(batch)
            model.token_table -= scale * acc.token_table
            if model.projection is not None:
                model.projection[0][:] -= scale * acc.weight
                model.projection[1][:] -= scale * acc.bias
            step += 1
        per_epoch.append(float(np.mean(epoch_losses)))
    return model, LossReport(per_epoch_mean_loss=per_epoch, steps=step)
