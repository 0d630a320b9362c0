"""Bit-exact file formats and validated ingestion.

Formats:
  manifest.jsonl          one sample per line; line order defines row alignment
  *.darb                  embedding blobs: "DARB", u32 LE version, u64 LE rows,
                          u64 LE cols, then rows*cols float32 LE row-major
  predictions.jsonl       {id, model, p_mild, p_moderate, p_severe} per line
  prompts_<dim>.json      {"dimension": ..., "prompts": [...]}
  captions.jsonl          {id, description} per line

All JSON is UTF-8 and written canonically (fixed key order, compact
separators), so identical inputs produce byte-identical files on every
platform.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from sevarb.core import (
    PROB_SUM_TOL,
    ProbeDimension,
    ProbTriple,
    Sample,
    SeverityLabel,
    ValidationError,
)

DARB_MAGIC = b"DARB"
DARB_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")  # magic, version, rows, cols


def dumps_canonical(obj: object) -> str:
    """Compact, deterministic JSON used for every data file this package writes."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass
class Manifest:
    """Ordered list of samples; order defines row alignment everywhere."""

    samples: list[Sample]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for s in self.samples:
            if s.id in seen:
                raise ValidationError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def class_counts(self) -> tuple[int, int, int]:
        counts = [0, 0, 0]
        for s in self.samples:
            counts[int(s.label)] += 1
        return (counts[0], counts[1], counts[2])

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.samples], dtype=np.int64)

    def by_id(self) -> dict[str, Sample]:
        return {s.id: s for s in self.samples}


def read_manifest(path: str | Path) -> Manifest:
    """Parse a JSONL manifest; every error names the offending line or id."""
    path = Path(path)
    samples: list[Sample] = []
    seen: set[str] = set()
    with path.open("rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.decode("utf-8").strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path.name}:{lineno}: malformed JSON ({exc.msg})") from None
            for key in ("id", "lat", "lon", "label"):
                if key not in rec:
                    raise ValidationError(f"{path.name}:{lineno}: missing field {key!r}")
            if rec["id"] in seen:
                raise ValidationError(f"duplicate sample id {rec['id']!r}")
            seen.add(rec["id"])
            samples.append(
                Sample(
                    id=str(rec["id"]),
                    lat=float(rec["lat"]),
                    lon=float(rec["lon"]),
                    label=SeverityLabel.from_name(str(rec["label"])),
                    caption_human=rec.get("caption_human"),
                    caption_llm=rec.get("caption_llm"),
                    row=len(samples),
                )
            )
    if not samples:
        raise ValidationError(f"empty manifest: {path}")
    return Manifest(samples)


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    with path.open("wb") as fh:
        for s in manifest.samples:
            rec: dict[str, object] = {
                "id": s.id,
                "lat": s.lat,
                "lon": s.lon,
                "label": s.label.canonical_name,
            }
            if s.caption_human is not None:
                rec["caption_human"] = s.caption_human
            if s.caption_llm is not None:
                rec["caption_llm"] = s.caption_llm
            fh.write(dumps_canonical(rec).encode("utf-8") + b"\n")


# ---------------------------------------------------------------------------
# Embedding blobs
# ---------------------------------------------------------------------------


def write_embeddings(matrix: np.ndarray, path: str | Path) -> None:
    """Write a 2-D float matrix as a .darb blob (float32 LE, row-major)."""
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValidationError(f"embedding matrix must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("embedding matrix contains non-finite values")
    m32 = np.ascontiguousarray(m, dtype="<f4")
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(DARB_MAGIC, DARB_VERSION, m32.shape[0], m32.shape[1]))
        fh.write(m32.tobytes())


def read_embeddings(path: str | Path) -> np.ndarray:
    """Read a .darb blob; validates magic, version, exact byte count, finiteness."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise ValidationError(f"{path.name}: truncated header ({len(blob)} bytes)")
    magic, version, rows, cols = _HEADER.unpack_from(blob)
    if magic != DARB_MAGIC:
        raise ValidationError(f"{path.name}: bad magic {magic!r}")
    if version != DARB_VERSION:
        raise ValidationError(f"{path.name}: unsupported version {version}")
    expected = _HEADER.size + rows * cols * 4
    if len(blob) != expected:
        raise ValidationError(
            f"{path.name}: truncated payload ({len(blob)} bytes, header promises {expected})"
        )
    m = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(rows, cols)
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{path.name}: non-finite values in payload")
    return m.copy()


def bind_embeddings(manifest: Manifest, matrix: np.ndarray, name: str = "embeddings") -> np.ndarray:
    """Check the manifest/matrix row alignment contract."""
    if matrix.shape[0] != len(manifest):
        raise ValidationError(
            f"{name}: {matrix.shape[0]} rows but manifest has {len(manifest)} samples"
        )
    return matrix


# ---------------------------------------------------------------------------
# Predictions
# ---------------------------------------------------------------------------


@dataclass
class PredictionSet:
    """Per-model id -> ProbTriple maps plus a coverage report."""

    by_model: dict[str, dict[str, ProbTriple]]
    missing: dict[str, list[str]]  # model -> manifest ids absent from the file

    def models(self) -> list[str]:
        return sorted(self.by_model)

    def matrix(self, model: str, manifest: Manifest) -> np.ndarray:
        """Probabilities in manifest order, shape (n, 3). Requires full coverage."""
        preds = self.by_model[model]
        if self.missing.get(model):
            raise ValidationError(
                f"model {model!r} is missing predictions for {len(self.missing[model])} samples"
            )
        return np.stack([preds[s.id].as_array() for s in manifest.samples])


def read_predictions(path: str | Path, manifest: Manifest) -> PredictionSet:
    path = Path(path)
    ids = {s.id for s in manifest.samples}
    by_model: dict[str, dict[str, ProbTriple]] = {}
    with path.open("rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.decode("utf-8").strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path.name}:{lineno}: malformed JSON ({exc.msg})") from None
            for key in ("id", "model", "p_mild", "p_moderate", "p_severe"):
                if key not in rec:
                    raise ValidationError(f"{path.name}:{lineno}: missing field {key!r}")
            sid, model = str(rec["id"]), str(rec["model"])
            if sid not in ids:
                raise ValidationError(f"{path.name}:{lineno}: unknown id {sid!r}")
            total = float(rec["p_mild"]) + float(rec["p_moderate"]) + float(rec["p_severe"])
            if abs(total - 1.0) > PROB_SUM_TOL:
                raise ValidationError(f"id {sid!r}: probability sum {total:.6g}")
            slot = by_model.setdefault(model, {})
            if sid in slot:
                raise ValidationError(f"duplicate prediction for (id={sid!r}, model={model!r})")
            slot[sid] = ProbTriple.from_values(rec["p_mild"], rec["p_moderate"], rec["p_severe"])
    missing = {
        model: [s.id for s in manifest.samples if s.id not in preds]
        for model, preds in by_model.items()
    }
    return PredictionSet(by_model=by_model, missing=missing)


def write_predictions(
    records: Iterable[tuple[str, str, ProbTriple]], path: str | Path
) -> None:
    """Write (id, model, probs) records as predictions.jsonl."""
    with Path(path).open("wb") as fh:
        for sid, model, probs in records:
            rec = {
                "id": sid,
                "model": model,
                "p_mild": probs.mild,
                "p_moderate": probs.moderate,
                "p_severe": probs.severe,
            }
            fh.write(dumps_canonical(rec).encode("utf-8") + b"\n")


# ---------------------------------------------------------------------------
# Prompt sets
# ---------------------------------------------------------------------------


@dataclass
class PromptSet:
    dimension: ProbeDimension
    prompts: list[str]
    embeddings: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not self.prompts:
            raise ValidationError(f"prompt set for {self.dimension.value} is empty")
        if self.embeddings is not None and self.embeddings.shape[0] != len(self.prompts):
            raise ValidationError(
                f"prompt set for {self.dimension.value}: {self.embeddings.shape[0]} embedding "
                f"rows for {len(self.prompts)} prompts"
            )


def write_prompt_set(ps: PromptSet, path: str | Path) -> None:
    payload = {"dimension": ps.dimension.value, "prompts": ps.prompts}
    Path(path).write_bytes(dumps_canonical(payload).encode("utf-8") + b"\n")


def read_prompt_set(path: str | Path) -> PromptSet:
    path = Path(path)
    try:
        rec = json.loads(path.read_bytes().decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path.name}: malformed JSON ({exc.msg})") from None
    for key in ("dimension", "prompts"):
        if key not in rec:
            raise ValidationError(f"{path.name}: missing field {key!r}")
    if not isinstance(rec["prompts"], list) or not all(isinstance(p, str) for p in rec["prompts"]):
        raise ValidationError(f"{path.name}: prompts must be a list of strings")
    return PromptSet(ProbeDimension.from_name(rec["dimension"]), list(rec["prompts"]))


# ---------------------------------------------------------------------------
# Caption records
# ---------------------------------------------------------------------------

CAPTION_MIN_WORDS = 10
CAPTION_MAX_WORDS = 120


def validate_caption_record(record: dict) -> list[str]:
    """Return warnings for a parsed caption object; missing fields raise."""
    for key in ("id", "description"):
        if key not in record:
            raise ValidationError(f"caption record missing field {key!r}")
    warnings: list[str] = []
    desc = str(record["description"]).strip()
    if not desc:
        warnings.append(f"id {record['id']!r}: empty description")
        return warnings
    n_words = len(desc.split())
    if not (CAPTION_MIN_WORDS <= n_words <= CAPTION_MAX_WORDS):
        warnings.append(
            f"id {record['id']!r}: length {n_words} outside "
            f"{CAPTION_MIN_WORDS}-{CAPTION_MAX_WORDS}"
        )
    return warnings


def read_captions(path: str | Path) -> tuple[list[dict], list[str]]:
    """Read captions.jsonl; returns (records, accumulated warnings)."""
    path = Path(path)
    records: list[dict] = []
    warnings: list[str] = []
    with path.open("rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.decode("utf-8").strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path.name}:{lineno}: malformed JSON ({exc.msg})") from None
            warnings.extend(validate_caption_record(rec))
            records.append(rec)
    return records, warnings
