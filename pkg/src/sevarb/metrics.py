"""Evaluation suite: confusion matrix, accuracy, precision/recall/F1
(weighted and macro), multiclass Matthews correlation, and caption-image
cosine scoring.

Convention check built into the numbers: weighted recall equals accuracy for
every confusion matrix (the class supports cancel), which is why weighted
averages are the headline figures. Macro variants are always computed too.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from sevarb.core import SeverityLabel, ValidationError, cosine

CLASS_NAMES = tuple(lbl.canonical_name for lbl in SeverityLabel)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix, cell[i][j] = count(true = i, predicted = j)."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 2:
            raise ValidationError(f"confusion matrix must be square k>=2, got {c.shape}")
        if np.any(c < 0) or not np.issubdtype(c.dtype, np.integer):
            raise ValidationError("confusion matrix must hold non-negative integers")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def k(self) -> int:
        return self.counts.shape[0]


def confusion(
    true_labels: Sequence[SeverityLabel | int],
    predicted_labels: Sequence[SeverityLabel | int],
    k: int = 3,
) -> ConfusionMatrix:
    if len(true_labels) != len(predicted_labels):
        raise ValidationError(
            f"label length mismatch: {len(true_labels)} true vs {len(predicted_labels)} predicted"
        )
    if len(true_labels) == 0:
        raise ValidationError("empty label sequences")
    t = np.asarray([int(x) for x in true_labels], dtype=np.int64)
    p = np.asarray([int(x) for x in predicted_labels], dtype=np.int64)
    if t.min() < 0 or t.max() >= k or p.min() < 0 or p.max() >= k:
        raise ValidationError(f"label outside [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class PerClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    recall_weighted: float
    recall_macro: float
    precision_weighted: float
    precision_macro: float
    f1_weighted: float
    f1_macro: float
    mcc: float
    per_class: tuple[PerClassMetrics, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "recall_weighted": self.recall_weighted,
            "recall_macro": self.recall_macro,
            "precision_weighted": self.precision_weighted,
            "precision_macro": self.precision_macro,
            "f1_weighted": self.f1_weighted,
            "f1_macro": self.f1_macro,
            "mcc": self.mcc,
            "per_class": [
                {
                    "class": c.name,
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "support": c.support,
                }
                for c in self.per_class
            ],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def mcc_multiclass(cm: ConfusionMatrix) -> float:
    """Covariance-form Matthews correlation; 0 when a denominator factor is 0.

    Reduces exactly to the binary TP/TN/FP/FN formula on a 2x2 matrix.
    """
    c = cm.counts.astype(np.float64)
    s = c.sum()
    trace = np.trace(c)
    t = c.sum(axis=1)  # true-class totals
    p = c.sum(axis=0)  # predicted-class totals
    numer = trace * s - float(t @ p)
    denom_t = s * s - float(t @ t)
    denom_p = s * s - float(p @ p)
    if denom_t <= 0.0 or denom_p <= 0.0:
        return 0.0
    return float(numer / np.sqrt(denom_t * denom_p))


def evaluate(cm: ConfusionMatrix) -> MetricReport:
    c = cm.counts.astype(np.float64)
    total = cm.total
    if total < 1:
        raise ValidationError("empty confusion matrix")
    diag = np.diag(c)
    row = c.sum(axis=1)  # support per true class
    col = c.sum(axis=0)  # predicted count per class

    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / np.where(col > 0, col, 1), 0.0)
        recall = np.where(row > 0, diag / np.where(row > 0, row, 1), 0.0)
    pr_sum = precision + recall
    f1 = np.where(pr_sum > 0, 2 * precision * recall / np.where(pr_sum > 0, pr_sum, 1), 0.0)

    accuracy = float(diag.sum() / total)
    weights = row / total
    # Support weights cancel in the weighted recall: sum(row/total * diag/row)
    # is identically trace/total, so compute it that way (exact identity).
    recall_weighted = accuracy
    precision_weighted = float(weights @ precision)
    f1_weighted = float(weights @ f1)

    per_class = tuple(
        PerClassMetrics(
            name=CLASS_NAMES[i] if cm.k == 3 else f"class_{i}",
            precision=float(precision[i]),
            recall=float(recall[i]),
            f1=float(f1[i]),
            support=int(row[i]),
        )
        for i in range(cm.k)
    )
    return MetricReport(
        accuracy=accuracy,
        recall_weighted=recall_weighted,
        recall_macro=float(recall.mean()),
        precision_weighted=precision_weighted,
        precision_macro=float(precision.mean()),
        f1_weighted=f1_weighted,
        f1_macro=float(f1.mean()),
        mcc=mcc_multiclass(cm),
        per_class=per_class,
    )


def clip_score(img: np.ndarray, txt: np.ndarray) -> float:
    """Image-caption alignment as plain cosine of the two embeddings."""
    return cosine(img, txt)


def corpus_clip_score(pairs: Iterable[tuple[np.ndarray, np.ndarray]]) -> float:
    """Arithmetic mean of per-pair scores, accumulated in input order."""
    total = 0.0
    n = 0
    for img, txt in pairs:
        total += clip_score(img, txt)
        n += 1
    if n == 0:
        raise ValidationError("corpus score needs at least one pair")
    return total / n


TABLE_COLUMNS = ("Accuracy", "Recall", "Precision", "SW-F1", "MCC", "CLIPScore")


def format_metric_table(rows: Sequence[tuple[str, MetricReport, float | None]]) -> str:
    """Aligned plain-text comparison table, one row per model.

    Column order matches the headline report: Accuracy, Recall, Precision,
    SW-F1, MCC, CLIPScore. Recall/Precision/F1 are the weighted variants.
    """
    header = ["Model", *TABLE_COLUMNS]
    body: list[list[str]] = []
    for name, report, cscore in rows:
        body.append(
            [
                name,
                f"{report.accuracy:.4f}",
                f"{report.recall_weighted:.4f}",
                f"{report.precision_weighted:.4f}",
                f"{report.f1_weighted:.4f}",
                f"{report.mcc:.4f}",
                f"{cscore:.4f}" if cscore is not None else "-",
            ]
        )
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(r)) for r in [header, *body]]
    return "\n".join(lines) + "\n"
