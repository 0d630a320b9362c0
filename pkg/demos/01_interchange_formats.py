"""Walkthrough of the interchange formats: manifests, embedding blobs,
prediction files, prompt sets, and the validation they enforce.

Run:  python demos/01_interchange_formats.py
"""

import tempfile
from pathlib import Path

import numpy as np

from sevarb.core import ProbTriple, Sample, SeverityLabel, ValidationError
from sevarb.interchange import (
    Manifest,
    read_embeddings,
    read_manifest,
    read_predictions,
    write_embeddings,
    write_manifest,
    write_predictions,
)

work = Path(tempfile.mkdtemp(prefix="sevarb_demo_"))
print(f"working in {work}\n")

# --- a manifest is an ordered JSONL of geotagged, labeled samples ----------
manifest = Manifest(
    [
        Sample("img-001", 29.43, -83.29, SeverityLabel.MILD, caption_human="light debris by the curb"),
        Sample("img-002", 29.44, -83.30, SeverityLabel.MODERATE, caption_llm="a fallen tree leans on a roof"),
        Sample("img-003", 29.45, -83.31, SeverityLabel.SEVERE),
    ]
)
write_manifest(manifest, work / "manifest.jsonl")
loaded = read_manifest(work / "manifest.jsonl")
print(f"manifest round-trip: {len(loaded)} samples, class counts {loaded.class_counts}")
print((work / "manifest.jsonl").read_text())

# --- embeddings travel as a small binary blob: magic, version, shape, f32 --
rng = np.random.default_rng(0)
matrix = rng.standard_normal((3, 8)).astype(np.float32)
write_embeddings(matrix, work / "img.darb")
back = read_embeddings(work / "img.darb")
print(f"embedding blob round-trip bit-identical: {np.array_equal(back, matrix)}")
print(f"file size: 24-byte header + {matrix.size * 4} payload bytes = "
      f"{(work / 'img.darb').stat().st_size}\n")

# --- predictions are (id, model, probability triple) records ---------------
write_predictions(
    [
        ("img-001", "demo_model", ProbTriple.from_values(0.7, 0.2, 0.1)),
        ("img-002", "demo_model", ProbTriple.from_values(0.2, 0.5, 0.3)),
        ("img-003", "demo_model", ProbTriple.from_values(0.1, 0.2, 0.7)),
    ],
    work / "predictions.jsonl",
)
pset = read_predictions(work / "predictions.jsonl", loaded)
print(f"predictions: models={pset.models()}, missing={pset.missing['demo_model']}")

# --- everything is validated on the way in ---------------------------------
(work / "bad.jsonl").write_text('{"id": "x", "lat": 123.0, "lon": 0.0, "label": "mild"}\n')
try:
    read_manifest(work / "bad.jsonl")
except ValidationError as exc:
    print(f"\nvalidation catches bad coordinates: {exc}")

(work / "bad_pred.jsonl").write_text(
    '{"id": "img-001", "model": "m", "p_mild": 0.5, "p_moderate": 0.4, "p_severe": 0.2}\n'
)
try:
    read_predictions(work / "bad_pred.jsonl", loaded)
except ValidationError as exc:
    print(f"validation catches probability drift: {exc}")
