"""Canonical domain types and pure math primitives shared by all modules.

Everything here is a pure function on immutable values and is safe to call
from any number of concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

# Probability triples exported by external tools may carry small rounding
# drift; anything within this tolerance is renormalized, beyond it rejected.
PROB_SUM_TOL = 1e-5


class ValidationError(ValueError):
    """Raised when input data violates a documented invariant."""


class SeverityLabel(IntEnum):
    """Three-level damage severity. Ordering is fixed and used for tie-breaks."""

    MILD = 0
    MODERATE = 1
    SEVERE = 2

    @classmethod
    def from_name(cls, name: str) -> "SeverityLabel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValidationError(f"unknown severity label {name!r}") from None

    @property
    def canonical_name(self) -> str:
        return self.name.lower()


class ProbeDimension(Enum):
    """The four semantic probe dimensions, in fixed component order."""

    TREES = "trees"
    DEBRIS = "debris"
    INFRASTRUCTURE = "infrastructure"
    FLOOD = "flood"

    @classmethod
    def from_name(cls, name: str) -> "ProbeDimension":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValidationError(f"unknown probe dimension {name!r}") from None


PROBE_DIMENSIONS: tuple[ProbeDimension, ...] = (
    ProbeDimension.TREES,
    ProbeDimension.DEBRIS,
    ProbeDimension.INFRASTRUCTURE,
    ProbeDimension.FLOOD,
)


@dataclass(frozen=True)
class ProbTriple:
    """A 3-class probability distribution (mild, moderate, severe).

    Construct untrusted values through :meth:`from_values`, which enforces the
    ingestion tolerance and renormalizes so the components sum to exactly 1.
    """

    mild: float
    moderate: float
    severe: float

    @classmethod
    def from_values(cls, mild: float, moderate: float, severe: float) -> "ProbTriple":
        p = (float(mild), float(moderate), float(severe))
        if not all(math.isfinite(x) for x in p):
            raise ValidationError(f"non-finite probability in {p}")
        if any(x < 0.0 or x > 1.0 for x in p):
            raise ValidationError(f"probability outside [0, 1] in {p}")
        total = p[0] + p[1] + p[2]
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValidationError(f"probability sum {total:.6g} deviates from 1")
        if abs(total - 1.0) <= 1e-12:
            # already exact to float precision; skipping the division makes
            # ingestion idempotent, so file round-trips are byte-stable
            return cls(p[0], p[1], p[2])
        return cls(p[0] / total, p[1] / total, p[2] / total)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ProbTriple":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (3,):
            raise ValidationError(f"expected 3 probabilities, got shape {arr.shape}")
        return cls.from_values(arr[0], arr[1], arr[2])

    def as_array(self) -> np.ndarray:
        return np.array([self.mild, self.moderate, self.severe], dtype=float)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.mild, self.moderate, self.severe)

    def __getitem__(self, label: SeverityLabel | int) -> float:
        return self.as_tuple()[int(label)]


@dataclass(frozen=True)
class Sample:
    """One geotagged street-view record.

    ``row`` is the sample's index into every embedding matrix bound to the
    same manifest; manifest line order is the single source of alignment.
    """

    id: str
    lat: float
    lon: float
    label: SeverityLabel
    caption_human: str | None = None
    caption_llm: str | None = None
    row: int = 0

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("sample id must be non-empty")
        if not (-90.0 <= self.lat <= 90.0):
            raise ValidationError(f"sample {self.id!r}: latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValidationError(f"sample {self.id!r}: longitude {self.lon} outside [-180, 180]")
        if self.row < 0:
            raise ValidationError(f"sample {self.id!r}: negative row index {self.row}")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max subtraction) along the last axis.

    Rejects non-finite inputs and vectors shorter than 2.
    """
    x = np.asarray(logits, dtype=float)
    if x.shape[-1] < 2:
        raise ValidationError(f"softmax needs >= 2 logits, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("non-finite logits passed to softmax")
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def entropy(p: ProbTriple | np.ndarray) -> float:
    """Shannon entropy in nats, with 0*ln(0) := 0. Bounded by ln(k)."""
    arr = p.as_array() if isinstance(p, ProbTriple) else np.asarray(p, dtype=float)
    nz = arr[arr > 0.0]
    return float(-np.sum(nz * np.log(nz)))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity between two vectors; rejects zero-norm inputs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine undefined for zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def argmax_class(p: ProbTriple | np.ndarray) -> SeverityLabel:
    """Class of maximal probability; ties break toward the lowest class index."""
    arr = p.as_array() if isinstance(p, ProbTriple) else np.asarray(p, dtype=float)
    return SeverityLabel(int(np.argmax(arr)))
