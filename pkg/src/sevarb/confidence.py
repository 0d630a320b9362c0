"""Confidence-margin analysis of misclassified samples.

A misclassification's margin is the predicted-class probability minus the
true-class probability (non-negative by the argmax). Margins triage errors
into Overconfident / Medium / Ambiguous buckets; the profile report gives
bucket shares and the true-severity mix of the errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from sevarb.core import ProbTriple, SeverityLabel, ValidationError, argmax_class


class TriageCategory(Enum):
    OVERCONFIDENT = "overconfident"
    MEDIUM = "medium"
    AMBIGUOUS = "ambiguous"


TRIAGE_ORDER = (TriageCategory.OVERCONFIDENT, TriageCategory.MEDIUM, TriageCategory.AMBIGUOUS)


@dataclass(frozen=True)
class TriageThresholds:
    """Margin cutoffs: >= m_hi is overconfident, <= m_lo is ambiguous."""

    m_hi: float = 0.5
    m_lo: float = 0.1

    def __post_init__(self) -> None:
        if not (0.0 <= self.m_lo < self.m_hi <= 1.0):
            raise ValidationError(
                f"need 0 <= m_lo < m_hi <= 1, got m_lo={self.m_lo}, m_hi={self.m_hi}"
            )


@dataclass(frozen=True)
class MarginRecord:
    id: str
    predicted: SeverityLabel
    truth: SeverityLabel
    margin: float
    triage: TriageCategory

    def __post_init__(self) -> None:
        if self.predicted == self.truth:
            raise ValidationError("margin records exist only for misclassified samples")
        if not (0.0 <= self.margin <= 1.0):
            raise ValidationError(f"margin {self.margin} outside [0, 1]")


def margin(pred: ProbTriple, truth: SeverityLabel) -> tuple[SeverityLabel, float] | None:
    """(predicted_class, margin) for a misclassification, None when correct."""
    predicted = argmax_class(pred)
    if predicted == truth:
        return None
    return predicted, pred[predicted] - pred[truth]


def triage(margin_value: float, th: TriageThresholds = TriageThresholds()) -> TriageCategory:
    if not (0.0 <= margin_value <= 1.0):
        raise ValidationError(f"margin {margin_value} outside [0, 1]")
    if margin_value >= th.m_hi:
        return TriageCategory.OVERCONFIDENT
    if margin_value <= th.m_lo:
        return TriageCategory.AMBIGUOUS
    return TriageCategory.MEDIUM


def margin_record(
    sample_id: str,
    pred: ProbTriple,
    truth: SeverityLabel,
    th: TriageThresholds = TriageThresholds(),
) -> MarginRecord | None:
    """Full per-sample record, or None when the prediction is correct."""
    result = margin(pred, truth)
    if result is None:
        return None
    predicted, m = result
    return MarginRecord(id=sample_id, predicted=predicted, truth=truth, margin=m, triage=triage(m, th))


@dataclass(frozen=True)
class ProfileReport:
    """Error shares by triage bucket and by true severity, each summing to 100%."""

    n_errors: int
    triage_pct: dict[TriageCategory, float]
    truth_pct: dict[SeverityLabel, float]

    @property
    def no_errors(self) -> bool:
        return self.n_errors == 0

    def to_dict(self) -> dict:
        return {
            "n_errors": self.n_errors,
            "no_errors": self.no_errors,
            "overconfident_pct": self.triage_pct[TriageCategory.OVERCONFIDENT],
            "medium_pct": self.triage_pct[TriageCategory.MEDIUM],
            "ambiguous_pct": self.triage_pct[TriageCategory.AMBIGUOUS],
            "mild_mis_pct": self.truth_pct[SeverityLabel.MILD],
            "moderate_mis_pct": self.truth_pct[SeverityLabel.MODERATE],
            "severe_mis_pct": self.truth_pct[SeverityLabel.SEVERE],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def profile(errors: list[MarginRecord]) -> ProfileReport:
    n = len(errors)
    if n == 0:
        return ProfileReport(
            n_errors=0,
            triage_pct={cat: 0.0 for cat in TriageCategory},
            truth_pct={lbl: 0.0 for lbl in SeverityLabel},
        )
    triage_counts = {cat: 0 for cat in TriageCategory}
    truth_counts = {lbl: 0 for lbl in SeverityLabel}
    for rec in errors:
        triage_counts[rec.triage] += 1
        truth_counts[rec.truth] += 1
    return ProfileReport(
        n_errors=n,
        triage_pct={cat: 100.0 * c / n for cat, c in triage_counts.items()},
        truth_pct={lbl: 100.0 * c / n for lbl, c in truth_counts.items()},
    )


PROFILE_COLUMNS = ("Overconfident", "Medium", "Ambiguous", "Mild Mis", "Moderate Mis", "Severe Mis")


def format_profile_table(rows: list[tuple[str, ProfileReport]]) -> str:
    """Aligned text table of misclassification profiles, one row per model."""
    header = ["Model", *PROFILE_COLUMNS]
    body = []
    for name, rep in rows:
        cells = [
            rep.triage_pct[TriageCategory.OVERCONFIDENT],
            rep.triage_pct[TriageCategory.MEDIUM],
            rep.triage_pct[TriageCategory.AMBIGUOUS],
            rep.truth_pct[SeverityLabel.MILD],
            rep.truth_pct[SeverityLabel.MODERATE],
            rep.truth_pct[SeverityLabel.SEVERE],
        ]
        body.append([name, *[f"{c:.2f}%" for c in cells]])
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(r)) for r in [header, *body]]
    return "\n".join(lines) + "\n"
