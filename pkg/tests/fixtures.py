"""Synthetic fixture generators shared by the harness, CLI, and acceptance
tests. Everything is seed-deterministic."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from sevarb.core import ProbTriple, Sample, SeverityLabel
from sevarb.interchange import Manifest, write_embeddings, write_manifest, write_predictions


def manifest_from_labels(labels, prefix="s") -> Manifest:
    samples = [
        Sample(
            id=f"{prefix}{i:05d}",
            lat=29.0 + 0.0001 * (i % 5000),
            lon=-83.0 - 0.0001 * (i % 5000),
            label=SeverityLabel(int(lbl)),
            row=i,
        )
        for i, lbl in enumerate(labels)
    ]
    return Manifest(samples)


def clustered_embeddings(labels, d=16, spread=0.15, seed=0, shift=0):
    """One tight Gaussian cluster per class; linearly separable."""
    rng = np.random.default_rng(seed)
    centers = np.zeros((3, d))
    for c in range(3):
        centers[c, (c + shift) % d] = 1.0
    labels = np.asarray(labels, dtype=int)
    return centers[labels] + spread * rng.standard_normal((len(labels), d))


def write_synthetic_dataset(out_dir, n_per_class=10, d=16, seed=0):
    """Manifest + image/text blobs + four probe prompt blobs on disk.

    Returns a dict of paths keyed by artifact name.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1, 2], n_per_class)
    labels = labels[rng.permutation(len(labels))]
    manifest = manifest_from_labels(labels)
    paths = {"manifest": out_dir / "manifest.jsonl"}
    write_manifest(manifest, paths["manifest"])

    img = clustered_embeddings(labels, d=d, seed=seed + 1)
    txt = clustered_embeddings(labels, d=d, spread=0.25, seed=seed + 2)
    paths["images"] = out_dir / "img.darb"
    paths["texts"] = out_dir / "txt.darb"
    write_embeddings(img.astype(np.float32), paths["images"])
    write_embeddings(txt.astype(np.float32), paths["texts"])

    for k, dim in enumerate(("trees", "debris", "infrastructure", "flood")):
        emb = rng.standard_normal((3, d))
        emb[:, k] += 2.0  # give each dimension a distinct direction
        path = out_dir / f"prompt_{dim}.darb"
        write_embeddings(emb.astype(np.float32), path)
        paths[f"prompt_{dim}"] = path
    return paths, manifest, labels


def overconfident_fixture(n=600, seed=0):
    """Engineered OOF predictions: model A overconfident-wrong on 20% of
    samples (model B correct there with confidence uncorrelated to A's
    correctness), model B wrong on a separate 30% (A right), 4% both wrong.
    Model A's confidence separates its errors, so a trust arbiter can beat
    both bases.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, n)
    preds_a = np.zeros((n, 3))
    preds_b = np.zeros((n, 3))
    u = rng.uniform(size=n)
    # sample kinds: 0 = A wrong / B right, 1 = both wrong, 2 = B wrong / A right, 3 = both right
    kind = np.select([u < 0.20, u < 0.24, u < 0.54], [0, 1, 2], default=3)

    for i in range(n):
        t = int(labels[i])
        w1 = (t + 1 + rng.integers(0, 2)) % 3  # a wrong class != t
        w2 = 3 - t - w1  # the remaining class (w2 != t, w2 != w1)
        conf_b = rng.uniform(0.45, 0.60)
        if kind[i] in (0, 1):  # A overconfident-wrong
            conf_a = rng.uniform(0.96, 0.99)
            preds_a[i] = (1 - conf_a) / 2
            preds_a[i, w1] = conf_a
        else:  # A right, ordinary confidence
            conf_a = rng.uniform(0.75, 0.92)
            preds_a[i] = (1 - conf_a) / 2
            preds_a[i, t] = conf_a
        if kind[i] in (0, 3):  # B right
            preds_b[i] = (1 - conf_b) / 2
            preds_b[i, t] = conf_b
        else:  # B wrong, on a class that differs from A's pick
            wb = w2 if kind[i] == 1 else w1
            preds_b[i, wb] = conf_b
            preds_b[i, t] = (1 - conf_b) * 0.55
            preds_b[i, 3 - t - wb] = (1 - conf_b) * 0.45
    return labels, preds_a, preds_b, kind


def conf_encodes_correctness_fixture(n=900, seed=0):
    """Model A's confidence encodes its own correctness; probe features are
    pure noise. Used for the ablation-ordering check."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, n)
    preds_a = np.zeros((n, 3))
    preds_b = np.zeros((n, 3))
    a_correct = rng.uniform(size=n) < 0.5
    for i in range(n):
        t = int(labels[i])
        wrong = (t + 1 + rng.integers(0, 2)) % 3
        if a_correct[i]:
            pa_class, pa_conf = t, 0.9
            pb_class, pb_conf = wrong, 0.5
        else:
            pa_class, pa_conf = wrong, 0.4
            pb_class, pb_conf = t, 0.5
        preds_a[i] = (1 - pa_conf) / 2
        preds_a[i, pa_class] = pa_conf
        preds_b[i] = (1 - pb_conf) / 2
        preds_b[i, pb_class] = pb_conf
    probes = 0.1 * rng.standard_normal((n, 4))
    fold_of = np.arange(n) % 3
    return labels, preds_a, preds_b, probes, fold_of


def write_prediction_file(path, manifest, probs, tag):
    write_predictions(
        ((s.id, tag, ProbTriple.from_array(probs[s.row])) for s in manifest.samples),
        path,
    )
