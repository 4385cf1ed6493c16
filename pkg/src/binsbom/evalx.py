"""Classification metrics and the three experiment runners.

The runners reproduce the pipeline at desk scale: generate pairs, split
(randomly or zero-shot), train the siamese encoder on the train side, score
the held-out side, and report accuracy/AUC/precision/recall/F-1. Every stage
seed is derived from one root seed, so runs are bitwise reproducible.
"""

from dataclasses import dataclass, replace

import numpy as np

from .corpus import LabeledPair, SplitSpec, VersionStringRecord, make_pairs, split_random, split_zero_shot
from .encoder import EncoderConfig, EmbeddingModel, encode, init_model
from .errors import DegenerateLabels, EmptyInput
from .simtrain import (
    LossReport,
    Similarity,
    TrainConfig,
    cosine_sim,
    dot_sim,
    pair_probability,
    train,
)
from .tokenizer import (
    DEFAULT_MAX_LEN,
    DEFAULT_TARGET_SIZE,
    WordPieceVocab,
    tokenize,
    train_vocab,
)
from .util import derive_seeds

# Metrics reported for the full-scale corpus and pretrained sentence encoder.
# Recorded for context only; the desk-scale reference pipeline does not (and
# cannot) reproduce these absolute numbers.
FULL_SCALE_REFERENCE = {
    "fully_trained": {
        "accuracy": 0.9290, "auc": 0.9810, "precision": 0.9447,
        "recall": 0.9126, "f1": 0.9284,
    },
    "zero_shot": {
        "accuracy": 0.8518, "auc": 0.9016, "precision": 0.9512,
        "recall": 0.7410, "f1": 0.8330,
    },
    "similarity_comparison": {
        "cosine": {"accuracy": 0.9290, "precision": 0.9447, "recall": 0.9126},
        "dot": {"accuracy": 0.9267, "precision": 0.9452, "recall": 0.90687},
    },
    "epoch_sweep": {
        1: {"accuracy": 0.8518, "auc": 0.9016, "precision": 0.9512,
            "recall": 0.7410, "f1": 0.8330},
        2: {"accuracy": 0.8225, "auc": 0.8783, "precision": 0.9967,
            "recall": 0.6463, "f1": 0.7841},
        5: {"accuracy": 0.7383, "auc": 0.7733, "precision": 0.9777,
            "recall": 0.4866, "f1": 0.6498},
        10: {"accuracy": 0.5579, "auc": 0.6267, "precision": 0.6901,
             "recall": 0.2068, "f1": 0.3182},
    },
}


@dataclass(frozen=True)
class ScoredPair:
    probability: float
    label: int


@dataclass
class MetricsReport:
    """Threshold metrics plus AUC; auc is None when only one class is present."""

    accuracy: float
    auc: float | None
    precision: float
    recall: float
    f1: float
    threshold: float
    counts: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "auc": self.auc,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "threshold": self.threshold,
            "counts": dict(self.counts),
        }


def classify_metrics(scored: list[ScoredPair], threshold: float = 0.5) -> MetricsReport:
    """Threshold at `threshold` (predict 1 iff probability >= threshold) and
    derive accuracy/precision/recall/F-1; zero-denominator metrics are 0."""
    if not scored:
        raise EmptyInput("no scored pairs")
    tp = fp = tn = fn = 0
    for sp in scored:
        predicted = sp.probability >= threshold
        if predicted and sp.label == 1:
            tp += 1
        elif predicted and sp.label == 0:
            fp += 1
        elif not predicted and sp.label == 0:
            tn += 1
        else:
            fn += 1
    total = tp + fp + tn + fn
    accuracy = (tp + tn) / total
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    labels = {sp.label for sp in scored}
    auc = roc_auc(scored) if labels == {0, 1} else None
    return MetricsReport(
        accuracy=accuracy, auc=auc, precision=precision, recall=recall, f1=f1,
        threshold=threshold, counts={"tp": tp, "fp": fp, "tn": tn, "fn": fn},
    )


def roc_auc(scored: list[ScoredPair]) -> float:
    """Mann-Whitney AUC by rank summation with average ranks for ties.

    Equals the brute-force fraction of positive-negative pairs where the
    positive scores higher, ties counted 1/2, exactly.
    """
    n_pos = sum(1 for sp in scored if sp.label == 1)
    n_neg = len(scored) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs at least one positive and one negative")
    ordered = sorted(range(len(scored)), key=lambda i: scored[i].probability)
    rank_pos_sum = 0.0
    i = 0
    while i < len(ordered):
        j = i
        while j + 1 < len(ordered) and (
            scored[ordered[j + 1]].probability == scored[ordered[i]].probability
        ):
            j += 1
        # Tie group occupies ranks i+1 .. j+1; everyone gets the midpoint.
        rank = (i + 1 + j + 1) / 2
        for k in range(i, j + 1):
            if scored[ordered[k]].label == 1:
                rank_pos_sum += rank
        i = j + 1
    return (rank_pos_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def score_pairs(
    model: EmbeddingModel,
    vocab: WordPieceVocab,
    pairs: list[LabeledPair],
    similarity: Similarity = Similarity.COSINE,
    prob_epsilon: float = 1e-6,
) -> list[ScoredPair]:
    """Encode both sides of each pair and map their similarity to a probability."""
    cache: dict[str, np.ndarray] = {}

    def embed(text: str) -> np.ndarray:
        vec = cache.get(text)
        if vec is None:
            vec = encode(model, tokenize(text, vocab))
            cache[text] = vec
        return vec

    sim = cosine_sim if similarity is Similarity.COSINE else dot_sim
    scored = []
    for pair in pairs:
        score = sim(embed(pair.product), embed(pair.version_string))
        scored.append(ScoredPair(pair_probability(score, similarity, prob_epsilon), pair.label))
    return scored


@dataclass
class ExperimentResult:
    """A runner's outcome: held-out metrics, the training-loss trace, and the
    scored test pairs (kept for score-distribution and ROC rendering)."""

    metrics: MetricsReport
    train_loss: LossReport
    n_train_pairs: int
    n_test_pairs: int
    scored: list[ScoredPair]


@dataclass
class SweepEntry:
    epochs: int
    result: ExperimentResult


def _vocab_from_pairs(pairs: list[LabeledPair], target_size: int, max_len: int) -> WordPieceVocab:
    texts = [p.product for p in pairs] + [p.version_string for p in pairs]
    return train_vocab(texts, target_size=target_size, max_len=max_len)


def _train_and_score(
    vocab: WordPieceVocab,
    train_pairs: list[LabeledPair],
    test_pairs: list[LabeledPair],
    train_config: TrainConfig,
    *,
    embed_dim: int,
    hidden_dim: int | None,
    threshold: float,
    init_seed: int,
) -> ExperimentResult:
    config = EncoderConfig(
        vocab_size=len(vocab), embed_dim=embed_dim, hidden_dim=hidden_dim,
        pad_id=vocab.pad_id, seed=init_seed,
    )
    model, loss_report = train(init_model(config), vocab, train_pairs, train_config)
    scored = score_pairs(
        model, vocab, test_pairs, train_config.similarity, train_config.prob_epsilon
    )
    return ExperimentResult(
        metrics=classify_metrics(scored, threshold=threshold),
        train_loss=loss_report,
        n_train_pairs=len(train_pairs),
        n_test_pairs=len(test_pairs),
        scored=scored,
    )


def run_fully_trained(
    records: list[VersionStringRecord],
    split_spec: SplitSpec,
    train_config: TrainConfig,
    *,
    negatives_per_positive: int = 1,
    embed_dim: int = 32,
    hidden_dim: int | None = None,
    vocab_target_size: int = DEFAULT_TARGET_SIZE,
    vocab_max_len: int = DEFAULT_MAX_LEN,
    threshold: float = 0.5,
    root_seed: int = 0,
) -> ExperimentResult:
    """Random-split experiment: train and test may share products.

    Stage seeds (pairing, split, init, shuffle) are derived from root_seed,
    overriding the seeds inside split_spec and train_config.
    """
    pair_seed, split_seed, init_seed, train_seed = derive_seeds(root_seed, 4)
    pairs = make_pairs(records, negatives_per_positive, pair_seed)
    train_pairs, test_pairs = split_random(pairs, replace(split_spec, seed=split_seed))
    vocab = _vocab_from_pairs(train_pairs, vocab_target_size, vocab_max_len)
    return _train_and_score(
        vocab, train_pairs, test_pairs, replace(train_config, seed=train_seed),
        embed_dim=embed_dim, hidden_dim=hidden_dim, threshold=threshold,
        init_seed=init_seed,
    )


def _zero_shot_pairs(records, split_spec, negatives_per_positive, root_seed):
    pair_seed, split_seed, init_seed, train_seed = derive_seeds(root_seed, 4)
    train_pairs, test_pairs = split_zero_shot(
        records, replace(split_spec, seed=split_seed), negatives_per_positive, pair_seed
    )
    train_products = {p.product for p in train_pairs}
    test_products = {p.product for p in test_pairs}
    assert not train_products & test_products, "zero-shot split leaked products"
    return train_pairs, test_pairs, init_seed, train_seed


def run_zero_shot(
    records: list[VersionStringRecord],
    split_spec: SplitSpec,
    train_config: TrainConfig,
    *,
    negatives_per_positive: int = 1,
    embed_dim: int = 32,
    hidden_dim: int | None = None,
    vocab_target_size: int = DEFAULT_TARGET_SIZE,
    vocab_max_len: int = DEFAULT_MAX_LEN,
    threshold: float = 0.5,
    root_seed: int = 0,
) -> ExperimentResult:
    """Zero-shot experiment: every test product is unseen during training."""
    train_pairs, test_pairs, init_seed, train_seed = _zero_shot_pairs(
        records, split_spec, negatives_per_positive, root_seed
    )
    vocab = _vocab_from_pairs(train_pairs, vocab_target_size, vocab_max_len)
    return _train_and_score(
        vocab, train_pairs, test_pairs, replace(train_config, seed=train_seed),
        embed_dim=embed_dim, hidden_dim=hidden_dim, threshold=threshold,
        init_seed=init_seed,
    )


def run_epoch_sweep(
    records: list[VersionStringRecord],
    split_spec: SplitSpec,
    train_config: TrainConfig,
    epochs_list: tuple[int, ...] = (1, 2, 5, 10),
    *,
    negatives_per_positive: int = 1,
    embed_dim: int = 32,
    hidden_dim: int | None = None,
    vocab_target_size: int = DEFAULT_TARGET_SIZE,
    vocab_max_len: int = DEFAULT_MAX_LEN,
    threshold: float = 0.5,
    root_seed: int = 0,
) -> list[SweepEntry]:
    """Zero-shot runs at several epoch counts: the data split and vocabulary
    are shared, each entry trains a fresh model from the same init."""
    if not epochs_list:
        raise ValueError("epochs_list must not be empty")
    train_pairs, test_pairs, init_seed, train_seed = _zero_shot_pairs(
        records, split_spec, negatives_per_positive, root_seed
    )
    vocab = _vocab_from_pairs(train_pairs, vocab_target_size, vocab_max_len)
    entries = []
    for epochs in epochs_list:
        result = _train_and_score(
            vocab, train_pairs, test_pairs,
            replace(train_config, epochs=epochs, seed=train_seed),
            embed_dim=embed_dim, hidden_dim=hidden_dim, threshold=threshold,
            init_seed=init_seed,
        )
        entries.append(SweepEntry(epochs=epochs, result=result))
    return entries


_TABLE_COLUMNS = ("Accuracy", "AUC", "Precision", "Recall", "F-1 Score")


def render_metrics_table(rows: list[tuple[str, MetricsReport]], label_header: str = "Run") -> str:
    """Aligned-column text table with one row per report."""

    def fmt(value) -> str:
        return "n/a" if value is None else f"{value:.4f}"

    header = [label_header, *_TABLE_COLUMNS]
    body = [
        [label, fmt(r.accuracy), fmt(r.auc), fmt(r.precision), fmt(r.recall), fmt(r.f1)]
        for label, r in rows
    ]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = []
    for row in [header, *body]:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines)
