"""Mining semantic probes from a caption corpus.

Candidate 1-3-grams are scored per dimension with a smoothed log-odds ratio
between anchored (foreground) and other (background) captions, assigned to
their best dimension, expanded through prompt templates, and finally used
to score images into 4-dimensional probe vectors.

Run:  python demos/04_probe_mining.py
"""

import tempfile
from pathlib import Path

import numpy as np

from sevarb.core import PROBE_DIMENSIONS
from sevarb.interchange import PromptSet
from sevarb.probes import (
    Pooling,
    ProbeConfig,
    export_phrase_frequencies,
    mine_probes,
    probe_vector,
    write_prompt_sets,
)

# a tiny caption corpus; real corpora come from captions.jsonl
corpus = (
    [f"a fallen tree with snapped branches across the road near house {i}" for i in range(12)]
    + [f"debris pile and scattered rubble beside the driveway at lot {i}" for i in range(12)]
    + [f"downed power line hanging from a leaning pole at corner {i}" for i in range(12)]
    + [f"flood water covering the intersection and standing water at {i}" for i in range(12)]
    + [f"calm residential street with parked cars and intact homes {i}" for i in range(12)]
)

cfg = ProbeConfig(f_min=4, top_n=6)
selected, prompt_sets = mine_probes(corpus, cfg)

print("top phrases per dimension (smoothed log-odds score, caption count):")
for dim in PROBE_DIMENSIONS:
    print(f"  {dim.value}:")
    for sp in selected[dim][:4]:
        print(f"    {sp.score:6.2f}  x{sp.corpus_count:<3} {sp.text}")

work = Path(tempfile.mkdtemp(prefix="sevarb_probes_"))
written = write_prompt_sets(prompt_sets, work)
print(f"\nwrote {len(written)} prompt files to {work}")
print(f"example prompts ({PROBE_DIMENSIONS[0].value}):")
for prompt in prompt_sets[PROBE_DIMENSIONS[0]].prompts[:3]:
    print(f"  - {prompt}")

freq_json = export_phrase_frequencies(selected)
print(f"\nword-cloud feed: {len(freq_json)} bytes of JSON (rendering is external)")

# scoring: cosine of the image embedding against each dimension's prompts
rng = np.random.default_rng(5)
d = 32
sets_with_embeddings = {}
for k, dim in enumerate(PROBE_DIMENSIONS):
    emb = 0.1 * rng.standard_normal((len(prompt_sets[dim].prompts), d))
    emb[:, k] += 2.0  # give each dimension a distinct direction
    sets_with_embeddings[dim] = PromptSet(dim, prompt_sets[dim].prompts, embeddings=emb)

tree_like_image = np.zeros(d)
tree_like_image[0] = 1.0
vec = probe_vector(tree_like_image, sets_with_embeddings, Pooling.MAX)
print("\nprobe vector of a trees-aligned image (trees, debris, infrastructure, flood):")
print("  " + "  ".join(f"{x:+.3f}" for x in vec))
