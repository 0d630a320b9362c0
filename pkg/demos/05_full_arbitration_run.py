"""End-to-end experiment: two base models, disagreement arbitration, the
full report set, and geo-referenced exports.

The synthetic dataset makes model A overconfident-wrong on a slice of the
data where model B is quietly right; the arbiter learns from confidence
features which model to trust on disagreements.

Run:  python demos/05_full_arbitration_run.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from sevarb.confidence import TriageCategory
from sevarb.core import ProbTriple, Sample, SeverityLabel
from sevarb.harness import ExperimentConfig, run_experiment
from sevarb.interchange import Manifest, write_manifest, write_predictions

work = Path(tempfile.mkdtemp(prefix="sevarb_run_"))
rng = np.random.default_rng(21)
n = 450

# --- engineered base-model behavior ----------------------------------------
labels = rng.integers(0, 3, n)
preds_a = np.zeros((n, 3))
preds_b = np.zeros((n, 3))
u = rng.uniform(size=n)
for i in range(n):
    t = int(labels[i])
    w1 = (t + 1 + rng.integers(0, 2)) % 3
    conf_b = rng.uniform(0.45, 0.6)
    if u[i] < 0.2:  # A overconfident-wrong, B right
        conf_a = rng.uniform(0.96, 0.99)
        preds_a[i] = (1 - conf_a) / 2
        preds_a[i, w1] = conf_a
        preds_b[i] = (1 - conf_b) / 2
        preds_b[i, t] = conf_b
    elif u[i] < 0.5:  # A right, B wrong
        conf_a = rng.uniform(0.75, 0.92)
        preds_a[i] = (1 - conf_a) / 2
        preds_a[i, t] = conf_a
        preds_b[i, w1] = conf_b
        preds_b[i, t] = (1 - conf_b) * 0.55
        preds_b[i, 3 - t - w1] = (1 - conf_b) * 0.45
    else:  # both right
        conf_a = rng.uniform(0.75, 0.92)
        preds_a[i] = (1 - conf_a) / 2
        preds_a[i, t] = conf_a
        preds_b[i] = (1 - conf_b) / 2
        preds_b[i, t] = conf_b

manifest = Manifest(
    [
        Sample(f"sv{i:05d}", 29.0 + 0.001 * i, -83.0 - 0.001 * i, SeverityLabel(int(labels[i])), row=i)
        for i in range(n)
    ]
)
write_manifest(manifest, work / "manifest.jsonl")
write_predictions(
    ((s.id, "image_baseline", ProbTriple.from_array(preds_a[s.row])) for s in manifest.samples),
    work / "pred_a.jsonl",
)
write_predictions(
    ((s.id, "fusion_baseline", ProbTriple.from_array(preds_b[s.row])) for s in manifest.samples),
    work / "pred_b.jsonl",
)

# --- run --------------------------------------------------------------------
config = ExperimentConfig.from_dict(
    {
        "manifest": str(work / "manifest.jsonl"),
        "seed": 21,
        "model_a": {"predictions": str(work / "pred_a.jsonl")},
        "model_b": {"predictions": str(work / "pred_b.jsonl")},
        "arbiter_preset": "conf",
        "run_ablation_table": True,
    }
)
result = run_experiment(config, work / "run")

print(f"run directory: {work / 'run'}\n")
print((work / "run" / "reports" / "metrics.txt").read_text())
print((work / "run" / "reports" / "profiles.txt").read_text())
print((work / "run" / "reports" / "ablation.txt").read_text())

summary = result.arbitration
print(
    f"agreement on {summary['n_agreement']}/{summary['n_samples']} samples; "
    f"{summary['n_to_model_a']} disagreements went to model A, "
    f"{summary['n_to_model_b']} to model B"
)
print(
    f"accuracy: A {summary['accuracy_model_a']:.3f}, B {summary['accuracy_model_b']:.3f} "
    f"-> arbitrated {summary['accuracy_arbitrated']:.3f} "
    f"(oracle ceiling {summary['oracle_upper_bound']:.3f})"
)
over_a = result.profiles["model_a"].triage_pct[TriageCategory.OVERCONFIDENT]
over_arb = result.profiles["arbitrated"].triage_pct[TriageCategory.OVERCONFIDENT]
print(f"overconfident error share: model A {over_a:.1f}% -> arbitrated {over_arb:.1f}%")

geo = json.loads((work / "run" / "geo" / "arbitrated_misclassified.geojson").read_text())
print(f"\ngeo export: {len(geo['features'])} misclassified points ([lon, lat] order)")
