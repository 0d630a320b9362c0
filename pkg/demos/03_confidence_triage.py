"""Confidence-margin triage of misclassifications.

An error's margin is the probability gap between the wrongly predicted
class and the true class. Large-margin errors are the dangerous kind (the
model was confidently wrong); near-zero margins mean the model was torn.

Run:  python demos/03_confidence_triage.py
"""

import numpy as np

from sevarb.confidence import (
    TriageThresholds,
    format_profile_table,
    margin_record,
    profile,
)
from sevarb.core import ProbTriple, SeverityLabel, softmax

rng = np.random.default_rng(11)
th = TriageThresholds(m_hi=0.5, m_lo=0.1)

print("worked examples:")
cases = [
    ((0.9, 0.05, 0.05), SeverityLabel.MODERATE),
    ((0.25, 0.45, 0.30), SeverityLabel.SEVERE),
    ((0.34, 0.33, 0.33), SeverityLabel.MODERATE),
    ((0.2, 0.5, 0.3), SeverityLabel.MODERATE),  # correct: no record
]
for probs, truth in cases:
    rec = margin_record("demo", ProbTriple.from_values(*probs), truth, th)
    if rec is None:
        print(f"  {probs} truth={truth.canonical_name:<8} -> correct, no margin record")
    else:
        print(
            f"  {probs} truth={truth.canonical_name:<8} -> margin {rec.margin:.2f}, "
            f"{rec.triage.value}"
        )

# two synthetic models: a sharp one (overconfident errors) and a flat one
print("\nprofiles of two synthetic error populations:")


def synthetic_errors(temperature, n=400, seed=0):
    r = np.random.default_rng(seed)
    records = []
    for i in range(n):
        logits = r.standard_normal(3) * 4.0
        p = ProbTriple.from_array(softmax(logits / temperature))
        truth = SeverityLabel(int(r.integers(0, 3)))
        rec = margin_record(f"e{i}", p, truth, th)
        if rec is not None:
            records.append(rec)
    return records


sharp = profile(synthetic_errors(temperature=0.5, seed=1))
flat = profile(synthetic_errors(temperature=50.0, seed=2))
print(format_profile_table([("sharp_model", sharp), ("flat_model", flat)]))
print("the flat model cannot produce overconfident errors; the sharp one mostly does")
