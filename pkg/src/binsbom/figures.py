"""Matplotlib renderers for evaluation reports.

Every function writes one figure to a file path and closes it; rendering is
headless (Agg), so these are safe from the CLI and from batch jobs.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evalx import MetricsReport, ScoredPair, SweepEntry
from .simtrain import LossReport

_METRIC_FIELDS = ("accuracy", "auc", "precision", "recall", "f1")
_METRIC_LABELS = ("Accuracy", "AUC", "Precision", "Recall", "F-1 Score")


def save_metrics_bars(rows: list[tuple[str, MetricsReport]], path: str) -> None:
    """Grouped bar chart of the five headline metrics, one group per run."""
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(1, len(rows))
    for i, (label, report) in enumerate(rows):
        values = [getattr(report, f) or 0.0 for f in _METRIC_FIELDS]
        positions = [x + i * width for x in range(len(_METRIC_FIELDS))]
        ax.bar(positions, values, width=width, label=label)
    ax.set_xticks([x + 0.4 - width / 2 for x in range(len(_METRIC_FIELDS))])
    ax.set_xticklabels(_METRIC_LABELS)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("Score")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_score_histogram(scored: list[ScoredPair], path: str, bins: int = 40) -> None:
    """Overlaid probability histograms for correlated vs decorrelated pairs."""
    pos = [sp.probability for sp in scored if sp.label == 1]
    neg = [sp.probability for sp in scored if sp.label == 0]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(neg, bins=bins, range=(0, 1), alpha=0.6, label="decorrelated (0)")
    ax.hist(pos, bins=bins, range=(0, 1), alpha=0.6, label="correlated (1)")
    ax.set_xlabel("Match probability")
    ax.set_ylabel("Pairs")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _roc_points(scored: list[ScoredPair]):
    n_pos = sum(1 for sp in scored if sp.label == 1)
    n_neg = len(scored) - n_pos
    ordered = sorted(scored, key=lambda sp: -sp.probability)
    xs, ys = [0.0], [0.0]
    tp = fp = 0
    i = 0
    while i < len(ordered):
        j = i
        while j + 1 < len(ordered) and ordered[j + 1].probability == ordered[i].probability:
            j += 1
        for k in range(i, j + 1):
            if ordered[k].label == 1:
                tp += 1
            else:
                fp += 1
        xs.append(fp / n_neg if n_neg else 0.0)
        ys.append(tp / n_pos if n_pos else 0.0)
        i = j + 1
    return xs, ys


def save_roc_curve(scored: list[ScoredPair], path: str) -> None:
    xs, ys = _roc_points(scored)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(xs, ys, marker=".", lw=1.5)
    ax.plot([0, 1], [0, 1], ls="--", c="gray", lw=1)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_sweep_curves(entries: list[SweepEntry], path: str) -> None:
    """Metric trajectories over the epoch sweep."""
    epochs = [e.epochs for e in entries]
    fig, ax = plt.subplots(figsize=(7, 4))
    for fld, label in zip(_METRIC_FIELDS, _METRIC_LABELS):
        values = [getattr(e.result.metrics, fld) for e in entries]
        if any(v is None for v in values):
            continue
        ax.plot(epochs, values, marker="o", label=label)
    ax.set_xlabel("Training epochs")
    ax.set_ylabel("Score")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_loss_curve(loss: LossReport, path: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    epochs = range(1, len(loss.per_epoch_mean_loss) + 1)
    ax.plot(list(epochs), loss.per_epoch_mean_loss, marker="o")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Mean training loss")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
