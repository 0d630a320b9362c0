"""Semantic probes: mine dimension-specific phrases from caption corpora,
expand them into prompt sets, and score images against prompt embeddings.

Mining is fully deterministic: candidate phrases are 1-3-grams over
lowercased, punctuation-stripped captions; each candidate is scored per
dimension with a smoothed log-odds ratio between the dimension's foreground
captions (those containing an anchor term) and the background; phrases go to
their best-scoring dimension when that score is positive. No syntactic
parsing happens here; externally extracted candidate lists (e.g. from a
parser-based pipeline) can be fed straight into ``assign_and_select``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from sevarb.core import PROBE_DIMENSIONS, ProbeDimension, ValidationError
from sevarb.interchange import PromptSet, dumps_canonical, write_prompt_set

ALPHA_SMOOTHING = 0.5  # Haldane-Anscombe pseudo-count for zero-safe log-odds

# Boundary filter only: phrases may not start or end with these; interior
# stopwords are fine ("tree on road").
STOPWORDS = frozenset(
    """a an the and or but of in on at to for with by from as is are was were be been
    being this that these those it its his her their our your my we you they he she i
    there here very so too not no nor do does did done can could will would shall
    should may might must have has had having if then than while after before during
    over under again more most some such only own same just about into through""".split()
)

DEFAULT_ANCHOR_TERMS: dict[ProbeDimension, tuple[str, ...]] = {
    ProbeDimension.TREES: ("tree", "trees", "fallen", "branch", "branches"),
    ProbeDimension.DEBRIS: ("debris", "rubble", "wreckage"),
    ProbeDimension.INFRASTRUCTURE: ("power", "line", "lines", "pole", "bridge", "infrastructure"),
    ProbeDimension.FLOOD: ("flood", "flooding", "water", "inundated", "submerged"),
}

DEFAULT_TEMPLATES = (
    "a street-view photo showing {phrase}",
    "a photo of {phrase} after the storm",
    "an outdoor scene with {phrase}",
)

MAX_PHRASE_TOKENS = 3


class Pooling(Enum):
    MAX = "max"
    MEAN = "mean"


def tokenize(text: str) -> list[str]:
    """Lowercase, map every non-alphanumeric character to space, split."""
    return "".join(ch if ch.isalnum() else " " for ch in text.lower()).split()


def normalize_phrase(text: str) -> str:
    return " ".join(tokenize(text))


@dataclass(frozen=True)
class CandidatePhrase:
    text: str  # normalized: lowercase, single-spaced
    n: int  # token count, 1..3
    corpus_count: int  # number of captions containing the phrase

    def __post_init__(self) -> None:
        tokens = self.text.split()
        if not (1 <= self.n <= MAX_PHRASE_TOKENS) or self.n != len(tokens):
            raise ValidationError(f"phrase {self.text!r} has {self.n} declared tokens")
        if tokens[0] in STOPWORDS or tokens[-1] in STOPWORDS:
            raise ValidationError(f"phrase {self.text!r} starts or ends with a stopword")
        if any(tok.isdigit() for tok in tokens):
            raise ValidationError(f"phrase {self.text!r} contains a purely numeric token")
        if self.corpus_count < 1:
            raise ValidationError(f"phrase {self.text!r} has non-positive corpus count")


@dataclass(frozen=True)
class ScoredPhrase:
    dimension: ProbeDimension
    text: str
    score: float
    corpus_count: int


@dataclass
class DimensionAnchors:
    """Anchor terms per dimension plus global white/blacklists."""

    anchors: dict[ProbeDimension, list[str]] = field(
        default_factory=lambda: {d: list(t) for d, t in DEFAULT_ANCHOR_TERMS.items()}
    )
    whitelist: list[str] = field(default_factory=list)
    blacklist: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.anchors = {d: [normalize_phrase(a) for a in terms] for d, terms in self.anchors.items()}
        self.whitelist = [normalize_phrase(w) for w in self.whitelist]
        self.blacklist = [normalize_phrase(b) for b in self.blacklist]
        for dim in PROBE_DIMENSIONS:
            if not self.anchors.get(dim):
                raise ValidationError(f"dimension {dim.value} has no anchor terms")
        seen: dict[str, ProbeDimension] = {}
        for dim, terms in self.anchors.items():
            for t in terms:
                if t in seen and seen[t] != dim:
                    raise ValidationError(
                        f"anchor {t!r} assigned to both {seen[t].value} and {dim.value}"
                    )
                seen[t] = dim


@dataclass
class ProbeConfig:
    anchors: DimensionAnchors = field(default_factory=DimensionAnchors)
    f_min: int = 5
    top_n: int = 20
    templates: tuple[str, ...] = DEFAULT_TEMPLATES
    pooling: Pooling = Pooling.MAX

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeConfig":
        anchors = DimensionAnchors(
            anchors={
                ProbeDimension.from_name(k): list(v)
                for k, v in d.get("anchors", {d0.value: list(t) for d0, t in DEFAULT_ANCHOR_TERMS.items()}).items()
            },
            whitelist=list(d.get("whitelist", [])),
            blacklist=list(d.get("blacklist", [])),
        )
        return cls(
            anchors=anchors,
            f_min=int(d.get("f_min", 5)),
            top_n=int(d.get("top_n", 20)),
            templates=tuple(d.get("templates", DEFAULT_TEMPLATES)),
            pooling=Pooling(d.get("pooling", "max")),
        )

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ProbeConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "anchors": {d.value: list(t) for d, t in self.anchors.anchors.items()},
            "whitelist": list(self.anchors.whitelist),
            "blacklist": list(self.anchors.blacklist),
            "f_min": self.f_min,
            "top_n": self.top_n,
            "templates": list(self.templates),
            "pooling": self.pooling.value,
        }


class Corpus:
    """Tokenized captions with per-caption n-gram sets for O(1) containment."""

    def __init__(self, captions: list[str]):
        if not captions:
            raise ValidationError("empty caption corpus")
        self.captions = list(captions)
        self.gram_sets: list[set[str]] = []
        for cap in self.captions:
            tokens = tokenize(cap)
            grams: set[str] = set()
            for n in range(1, MAX_PHRASE_TOKENS + 1):
                for i in range(len(tokens) - n + 1):
                    grams.add(" ".join(tokens[i : i + n]))
            self.gram_sets.append(grams)

    def __len__(self) -> int:
        return len(self.captions)

    def containing(self, phrase: str) -> int:
        return sum(1 for grams in self.gram_sets if phrase in grams)

    def foreground_indices(self, anchors: DimensionAnchors) -> dict[ProbeDimension, set[int]]:
        """Caption indices containing at least one anchor of each dimension."""
        out: dict[ProbeDimension, set[int]] = {}
        for dim in PROBE_DIMENSIONS:
            terms = anchors.anchors[dim]
            out[dim] = {
                i for i, grams in enumerate(self.gram_sets) if any(t in grams for t in terms)
            }
        return out


def extract_candidates(
    captions: list[str],
    f_min: int,
    anchors: DimensionAnchors | None = None,
) -> list[CandidatePhrase]:
    """All filtered 1-3-grams with document frequency >= f_min.

    Whitelist phrases bypass the frequency floor (they must still occur in
    at least one caption); the structural rules (no boundary stopword, no
    purely numeric token) are type invariants and apply to every candidate.
    Blacklist phrases never appear. Sorted by (count desc, text asc).
    """
    anchors = anchors or DimensionAnchors()
    corpus = Corpus(captions)
    counts: dict[str, int] = {}
    for grams in corpus.gram_sets:
        for g in grams:
            counts[g] = counts.get(g, 0) + 1

    blacklist = set(anchors.blacklist)
    whitelist = set(anchors.whitelist)
    out: list[CandidatePhrase] = []
    for text, count in counts.items():
        if text in blacklist:
            continue
        tokens = text.split()
        if tokens[0] in STOPWORDS or tokens[-1] in STOPWORDS:
            continue
        if any(tok.isdigit() for tok in tokens):
            continue
        if count < f_min and text not in whitelist:
            continue
        out.append(CandidatePhrase(text=text, n=len(tokens), corpus_count=count))
    out.sort(key=lambda c: (-c.corpus_count, c.text))
    return out


def log_odds(
    phrase: str,
    dim: ProbeDimension,
    anchors: DimensionAnchors,
    corpus: Corpus,
    _foreground: dict[ProbeDimension, set[int]] | None = None,
) -> float:
    """Smoothed log-odds of phrase occurrence, foreground vs background.

    With k_f captions of the dimension's foreground F_d containing the
    phrase (k_b likewise in the background) and alpha = 0.5:
      ln((k_f+a)/(N_f-k_f+a)) - ln((k_b+a)/(N_b-k_b+a))
    """
    phrase = normalize_phrase(phrase)
    fg = (_foreground or corpus.foreground_indices(anchors))[dim]
    n_f = len(fg)
    if n_f == 0:
        raise ValidationError(f"dimension {dim.value} has no foreground captions")
    n_b = len(corpus) - n_f
    k_f = sum(1 for i in fg if phrase in corpus.gram_sets[i])
    k_b = corpus.containing(phrase) - k_f
    a = ALPHA_SMOOTHING
    return math.log((k_f + a) / (n_f - k_f + a)) - math.log((k_b + a) / (n_b - k_b + a))


def assign_and_select(
    candidates: list[CandidatePhrase],
    anchors: DimensionAnchors,
    corpus: Corpus,
    top_n: int,
) -> dict[ProbeDimension, list[ScoredPhrase]]:
    """Assign each candidate to its best-scoring dimension (if positive),
    then keep the per-dimension top_n by (score desc, text asc)."""
    foreground = corpus.foreground_indices(anchors)
    assigned: dict[ProbeDimension, list[ScoredPhrase]] = {d: [] for d in PROBE_DIMENSIONS}
    for cand in candidates:
        scores = [
            log_odds(cand.text, dim, anchors, corpus, _foreground=foreground)
            for dim in PROBE_DIMENSIONS
        ]
        best = int(np.argmax(scores))
        if scores[best] <= 0.0:
            continue
        dim = PROBE_DIMENSIONS[best]
        assigned[dim].append(
            ScoredPhrase(dimension=dim, text=cand.text, score=scores[best], corpus_count=cand.corpus_count)
        )
    for dim in PROBE_DIMENSIONS:
        assigned[dim].sort(key=lambda s: (-s.score, s.text))
        assigned[dim] = assigned[dim][:top_n]
    return assigned


def expand_templates(
    phrases: dict[ProbeDimension, list[ScoredPhrase]],
    templates: tuple[str, ...] | list[str] = DEFAULT_TEMPLATES,
) -> dict[ProbeDimension, PromptSet]:
    """Cartesian phrase x template expansion, deduplicated, deterministic."""
    for t in templates:
        if t.count("{phrase}") != 1:
            raise ValidationError(f"template {t!r} must contain exactly one {{phrase}} slot")
    out: dict[ProbeDimension, PromptSet] = {}
    for dim in PROBE_DIMENSIONS:
        seen: set[str] = set()
        prompts: list[str] = []
        for sp in phrases.get(dim, []):
            for t in templates:
                prompt = t.replace("{phrase}", sp.text)
                if prompt not in seen:
                    seen.add(prompt)
                    prompts.append(prompt)
        if prompts:
            out[dim] = PromptSet(dimension=dim, prompts=prompts)
    return out


def mine_probes(
    captions: list[str], config: ProbeConfig | None = None
) -> tuple[dict[ProbeDimension, list[ScoredPhrase]], dict[ProbeDimension, PromptSet]]:
    """Full mining pipeline: candidates -> scores -> selection -> prompts."""
    config = config or ProbeConfig()
    corpus = Corpus(captions)
    candidates = extract_candidates(captions, config.f_min, config.anchors)
    selected = assign_and_select(candidates, config.anchors, corpus, config.top_n)
    prompt_sets = expand_templates(selected, config.templates)
    return selected, prompt_sets


def write_prompt_sets(prompt_sets: dict[ProbeDimension, PromptSet], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for dim in PROBE_DIMENSIONS:
        if dim in prompt_sets:
            path = out_dir / f"prompts_{dim.value}.json"
            write_prompt_set(prompt_sets[dim], path)
            written.append(path)
    return written


def export_phrase_frequencies(selected: dict[ProbeDimension, list[ScoredPhrase]]) -> str:
    """JSON array of {dimension, phrase, score, corpus_count} records, in
    selection order; feeds external word-cloud rendering."""
    records = [
        {"dimension": sp.dimension.value, "phrase": sp.text, "score": sp.score, "corpus_count": sp.corpus_count}
        for dim in PROBE_DIMENSIONS
        for sp in selected.get(dim, [])
    ]
    return dumps_canonical(records)


# ---------------------------------------------------------------------------
# Probe scoring
# ---------------------------------------------------------------------------


def _unit_rows(m: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValidationError(f"{what}: zero-norm row")
    return m / norms


def probe_vector(
    img: np.ndarray,
    prompt_sets: dict[ProbeDimension, PromptSet],
    pooling: Pooling = Pooling.MAX,
) -> np.ndarray:
    """Four pooled image-prompt cosines in fixed order
    (trees, debris, infrastructure, flood)."""
    return probe_matrix(np.asarray(img, dtype=float)[None, :], prompt_sets, pooling)[0]


def probe_matrix(
    images: np.ndarray,
    prompt_sets: dict[ProbeDimension, PromptSet],
    pooling: Pooling = Pooling.MAX,
) -> np.ndarray:
    """Probe vectors for a batch of images, shape (n, 4)."""
    embeddings: dict[ProbeDimension, np.ndarray] = {}
    for dim in PROBE_DIMENSIONS:
        ps = prompt_sets.get(dim)
        if ps is None or ps.embeddings is None:
            raise ValidationError(f"missing prompt embeddings for dimension {dim.value}")
        embeddings[dim] = np.asarray(ps.embeddings, dtype=float)
    return probe_matrix_raw(images, embeddings, pooling)


def probe_matrix_raw(
    images: np.ndarray,
    prompt_embeddings: dict[ProbeDimension, np.ndarray],
    pooling: Pooling = Pooling.MAX,
) -> np.ndarray:
    """Probe vectors from bare prompt embedding matrices (one per dimension)."""
    images = np.asarray(images, dtype=float)
    img_unit = _unit_rows(images, "image embeddings")
    cols = []
    for dim in PROBE_DIMENSIONS:
        emb = prompt_embeddings.get(dim)
        if emb is None:
            raise ValidationError(f"missing prompt embeddings for dimension {dim.value}")
        emb = np.asarray(emb, dtype=float)
        if emb.shape[1] != images.shape[1]:
            raise ValidationError(
                f"dimension {dim.value}: prompt embedding dim {emb.shape[1]} "
                f"!= image dim {images.shape[1]}"
            )
        sims = img_unit @ _unit_rows(emb, f"prompt embeddings ({dim.value})").T
        cols.append(sims.max(axis=1) if pooling is Pooling.MAX else sims.mean(axis=1))
    return np.stack(cols, axis=1)
