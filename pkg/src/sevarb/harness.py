"""Cross-validation harness: stratified folds, out-of-fold prediction
collection, end-to-end experiment runs, and geo-referenced exports.

An experiment run produces a fixed directory layout so reruns can be audited
by file diff:

    <run>/config.json          resolved config snapshot
    <run>/folds.json           fold assignment
    <run>/run_meta.json        timestamps (kept out of the deterministic set)
    <run>/models/              per-fold fusion head parameters + config echoes
    <run>/logs/                per-fold training logs (JSONL)
    <run>/predictions/         OOF predictions per model, arbitration outcomes
    <run>/probes/              probe score matrix (when probe blobs are given)
    <run>/reports/             metrics / profiles / arbitration / ablation
    <run>/geo/                 GeoJSON exports

Reports are byte-deterministic for a fixed (config, seed).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from sevarb.arbiter import (
    PRESETS,
    AblationTable,
    ArbiterModel,
    ArbitrationOutcome,
    FeatureConfig,
    OutcomeSource,
    arbitrate,
    assemble_feature_matrix,
    fit_arbiter,
    run_ablation,
    trust_training_mask,
)
from sevarb.confidence import (
    MarginRecord,
    ProfileReport,
    TriageThresholds,
    format_profile_table,
    margin_record,
    profile,
)
from sevarb.core import (
    PROBE_DIMENSIONS,
    ProbeDimension,
    ProbTriple,
    SeverityLabel,
    ValidationError,
    argmax_class,
)
from sevarb.fusion import (
    Mode,
    TrainConfig,
    predict_proba_batch,
    save_params,
    train,
    write_training_log,
)
from sevarb.interchange import (
    Manifest,
    bind_embeddings,
    dumps_canonical,
    read_embeddings,
    read_manifest,
    read_predictions,
    write_embeddings,
    write_predictions,
)
from sevarb.metrics import MetricReport, confusion, corpus_clip_score, evaluate, format_metric_table
from sevarb.probes import Pooling, probe_matrix_raw


# ---------------------------------------------------------------------------
# Stratified folds
# ---------------------------------------------------------------------------


@dataclass
class FoldAssignment:
    k: int
    fold_of: np.ndarray  # per-sample fold index, manifest row order
    seed: int

    def indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "fold_of": self.fold_of.tolist()}

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(dumps_canonical(self.to_dict()).encode("utf-8") + b"\n")

    @classmethod
    def load(cls, path: str | Path) -> "FoldAssignment":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(k=int(d["k"]), fold_of=np.asarray(d["fold_of"], dtype=np.int64), seed=int(d["seed"]))


def stratified_folds(manifest: Manifest, k: int = 3, seed: int = 0) -> FoldAssignment:
    """Shuffle within each class, then deal one continuous round-robin stream
    across classes in label order. Guarantees per-class and per-fold
    imbalance of at most 1, deterministically for a given seed."""
    if k < 2:
        raise ValidationError(f"fold count must be >= 2, got {k}")
    labels = manifest.labels
    for cls, count in zip(SeverityLabel, manifest.class_counts):
        if count < k:
            raise ValidationError(
                f"class {cls.canonical_name} has {count} samples, fewer than {k} folds"
            )
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(manifest), dtype=np.int64)
    counter = 0
    for cls in SeverityLabel:
        rows = np.flatnonzero(labels == int(cls))
        for row in rng.permutation(rows):
            fold_of[row] = counter % k
            counter += 1
    return FoldAssignment(k=k, fold_of=fold_of, seed=seed)


# ---------------------------------------------------------------------------
# OOF collection
# ---------------------------------------------------------------------------


def collect_oof(
    fold_params: list,
    folds: FoldAssignment,
    img_embs: np.ndarray | None,
    txt_embs: np.ndarray | None,
    mode: Mode,
) -> np.ndarray:
    """Every sample predicted by the model whose training excluded its fold."""
    if len(fold_params) != folds.k:
        raise ValidationError(f"{len(fold_params)} fold models for {folds.k} folds")
    n = len(folds.fold_of)
    out = np.full((n, 3), np.nan)
    for fold, params in enumerate(fold_params):
        if params is None:
            raise ValidationError(f"missing model for fold {fold}")
        idx = folds.indices(fold)
        out[idx] = predict_proba_batch(
            params,
            None if img_embs is None else img_embs[idx],
            None if txt_embs is None else txt_embs[idx],
            mode,
        )
    if np.any(np.isnan(out)):
        raise ValidationError("OOF coverage incomplete")
    return out


# ---------------------------------------------------------------------------
# GeoJSON export
# ---------------------------------------------------------------------------


class GeoMode(Enum):
    ALL = "all"
    MISCLASSIFIED_ONLY = "misclassified"


@dataclass(frozen=True)
class GeoEntry:
    pred_label: SeverityLabel
    source: str
    probs: ProbTriple | None = None  # enables margin/triage on errors


def geo_entries_from_predictions(
    preds: dict[str, ProbTriple], source: str
) -> dict[str, GeoEntry]:
    return {
        sid: GeoEntry(pred_label=argmax_class(p), source=source, probs=p)
        for sid, p in preds.items()
    }


def geo_entries_from_outcomes(
    outcomes: list[ArbitrationOutcome], probs_by_id: dict[str, ProbTriple] | None = None
) -> dict[str, GeoEntry]:
    probs_by_id = probs_by_id or {}
    return {
        o.id: GeoEntry(pred_label=o.final, source=o.source.value, probs=probs_by_id.get(o.id))
        for o in outcomes
    }


def export_geojson(
    manifest: Manifest,
    entries: dict[str, GeoEntry],
    mode: GeoMode = GeoMode.ALL,
    thresholds: TriageThresholds = TriageThresholds(),
) -> dict:
    """RFC 7946 FeatureCollection of Point features in manifest order.

    Coordinates are [lon, lat]; properties carry id, true/predicted label,
    correctness, source, and margin/triage for misclassified samples with
    known probability distributions.
    """
    features = []
    for s in manifest.samples:
        entry = entries.get(s.id)
        if entry is None:
            raise ValidationError(f"no prediction entry for sample {s.id!r}")
        if not (-90.0 <= s.lat <= 90.0) or not (-180.0 <= s.lon <= 180.0):
            raise ValidationError(f"sample {s.id!r}: coordinate out of range")
        correct = entry.pred_label == s.label
        if mode is GeoMode.MISCLASSIFIED_ONLY and correct:
            continue
        props: dict[str, object] = {
            "id": s.id,
            "true_label": s.label.canonical_name,
            "pred_label": entry.pred_label.canonical_name,
            "correct": bool(correct),
            "source": entry.source,
        }
        if not correct and entry.probs is not None:
            rec = margin_record(s.id, entry.probs, s.label, thresholds)
            if rec is not None:
                props["margin"] = rec.margin
                props["triage"] = rec.triage.value
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [s.lon, s.lat]},
                "properties": props,
            }
        )
    return {"type": "FeatureCollection", "features": features}


def write_geojson(collection: dict, path: str | Path) -> None:
    Path(path).write_bytes(dumps_canonical(collection).encode("utf-8") + b"\n")


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------


@dataclass
class ModelRole:
    """Either a fusion head trained in-run, or externally supplied OOF
    predictions read from a predictions.jsonl."""

    train: TrainConfig | None = None
    predictions_path: str | None = None

    def __post_init__(self) -> None:
        if (self.train is None) == (self.predictions_path is None):
            raise ValidationError("model role needs exactly one of train config or predictions path")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelRole":
        if "predictions" in d:
            return cls(predictions_path=str(d["predictions"]))
        return cls(train=TrainConfig.from_dict(d))

    def to_dict(self) -> dict:
        if self.predictions_path is not None:
            return {"predictions": self.predictions_path}
        return self.train.to_dict()


@dataclass
class ExperimentConfig:
    manifest: str
    image_embeddings: str | None = None
    text_embeddings: str | None = None
    probe_embeddings: dict[str, str] | None = None  # dimension name -> blob path
    k_folds: int = 3
    seed: int = 0
    model_a: ModelRole = field(
        default_factory=lambda: ModelRole(train=TrainConfig(mode=Mode.IMAGE_ONLY))
    )
    model_b: ModelRole = field(default_factory=lambda: ModelRole(train=TrainConfig(mode=Mode.FUSED)))
    arbiter_preset: str = "conf"
    arbiter: FeatureConfig | None = None  # overrides preset when given
    reg_l2: float = 1e-2
    m_hi: float = 0.5
    m_lo: float = 0.1
    pooling: Pooling = Pooling.MAX
    run_ablation_table: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if "manifest" not in d:
            raise ValidationError("experiment config missing 'manifest'")
        cfg = cls(manifest=str(d["manifest"]))
        if d.get("image_embeddings"):
            cfg.image_embeddings = str(d["image_embeddings"])
        if d.get("text_embeddings"):
            cfg.text_embeddings = str(d["text_embeddings"])
        if d.get("probe_embeddings"):
            cfg.probe_embeddings = {str(k): str(v) for k, v in d["probe_embeddings"].items()}
        cfg.k_folds = int(d.get("k_folds", 3))
        cfg.seed = int(d.get("seed", 0))
        if "model_a" in d:
            cfg.model_a = ModelRole.from_dict(d["model_a"])
        if "model_b" in d:
            cfg.model_b = ModelRole.from_dict(d["model_b"])
        cfg.arbiter_preset = str(d.get("arbiter_preset", "conf"))
        if cfg.arbiter_preset not in PRESETS:
            raise ValidationError(f"unknown arbiter preset {cfg.arbiter_preset!r}")
        if d.get("arbiter") is not None:
            cfg.arbiter = FeatureConfig.from_dict(d["arbiter"])
        cfg.reg_l2 = float(d.get("reg_l2", 1e-2))
        thresholds = d.get("thresholds", {})
        cfg.m_hi = float(thresholds.get("m_hi", 0.5))
        cfg.m_lo = float(thresholds.get("m_lo", 0.1))
        cfg.pooling = Pooling(d.get("pooling", "max"))
        cfg.run_ablation_table = bool(d.get("run_ablation_table", True))
        return cfg

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest,
            "image_embeddings": self.image_embeddings,
            "text_embeddings": self.text_embeddings,
            "probe_embeddings": self.probe_embeddings,
            "k_folds": self.k_folds,
            "seed": self.seed,
            "model_a": self.model_a.to_dict(),
            "model_b": self.model_b.to_dict(),
            "arbiter_preset": self.arbiter_preset,
            "arbiter": self.arbiter.to_dict() if self.arbiter else None,
            "reg_l2": self.reg_l2,
            "thresholds": {"m_hi": self.m_hi, "m_lo": self.m_lo},
            "pooling": self.pooling.value,
            "run_ablation_table": self.run_ablation_table,
        }

    def feature_config(self) -> FeatureConfig:
        return self.arbiter if self.arbiter is not None else PRESETS[self.arbiter_preset]


@dataclass
class ExperimentRun:
    run_dir: Path
    config: ExperimentConfig
    folds: FoldAssignment
    metrics: dict[str, MetricReport]
    profiles: dict[str, ProfileReport]
    arbitration: dict
    ablation: AblationTable | None
    outcomes: list[ArbitrationOutcome]
    timestamps: dict


# ---------------------------------------------------------------------------
# Experiment stages
# ---------------------------------------------------------------------------


def _stage(name: str, fold: int | None = None):
    where = name if fold is None else f"{name} (fold {fold})"

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, _StageError):
                raise _StageError(f"stage {where}: {exc}") from exc
            return False

    return _Ctx()


class _StageError(RuntimeError):
    pass


def _oof_for_role(
    role: ModelRole,
    tag: str,
    manifest: Manifest,
    folds: FoldAssignment,
    img: np.ndarray | None,
    txt: np.ndarray | None,
    run_dir: Path,
) -> np.ndarray:
    """OOF probability matrix for one base-model role, (n, 3)."""
    if role.predictions_path is not None:
        with _stage(f"read external predictions for {tag}"):
            pset = read_predictions(role.predictions_path, manifest)
            models = pset.models()
            if len(models) != 1:
                raise ValidationError(
                    f"{role.predictions_path}: expected one model tag, found {models}"
                )
            return pset.matrix(models[0], manifest)

    cfg = role.train
    if cfg.mode is not Mode.TEXT_ONLY and img is None:
        raise ValidationError(f"{tag}: mode {cfg.mode.value} needs image embeddings")
    if cfg.mode is not Mode.IMAGE_ONLY and txt is None:
        raise ValidationError(f"{tag}: mode {cfg.mode.value} needs text embeddings")

    labels = manifest.labels
    fold_params = []
    for fold in range(folds.k):
        with _stage(f"train {tag}", fold):
            tr = folds.train_indices(fold)
            fold_cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": cfg.seed + fold})
            result = train(
                None if img is None else img[tr],
                None if txt is None else txt[tr],
                labels[tr],
                fold_cfg,
            )
            fold_params.append(result.params)
            save_params(result.params, run_dir / "models" / f"{tag}_fold{fold}.darp", fold_cfg)
            write_training_log(result.log, run_dir / "logs" / f"{tag}_fold{fold}.jsonl")
    with _stage(f"collect OOF for {tag}"):
        return collect_oof(fold_params, folds, img, txt, cfg.mode)


def _margin_records(
    manifest: Manifest, probs: np.ndarray, thresholds: TriageThresholds
) -> list[MarginRecord]:
    records = []
    for s in manifest.samples:
        rec = margin_record(s.id, ProbTriple.from_array(probs[s.row]), s.label, thresholds)
        if rec is not None:
            records.append(rec)
    return records


def _constant_trust_model(cfg: FeatureConfig, trust_a: bool) -> ArbiterModel:
    """Degenerate-trust fallback: every training disagreement favored one
    model, so fit_arbiter has no second class to learn from. A zero-weight
    model with a saturated bias reproduces the only defensible policy
    (always trust that model) through the normal scoring path."""
    names = cfg.active_feature_names()
    return ArbiterModel(
        weights=np.zeros(len(names)),
        bias=13.0 if trust_a else -13.0,
        feature_means=np.zeros(len(names)),
        feature_stds=np.ones(len(names)),
        feature_names=names,
        dropped_features=(),
        config=cfg,
        n_train=0,
    )


def _arbitrate_all(
    manifest: Manifest,
    folds: FoldAssignment,
    preds_a: np.ndarray,
    preds_b: np.ndarray,
    probes: np.ndarray | None,
    cfg: FeatureConfig,
    reg_l2: float,
    seed: int,
) -> tuple[list[ArbitrationOutcome], list[int]]:
    """Arbitrate every sample with an arbiter fit outside its fold.

    Returns the outcomes plus the folds (if any) that fell back to a
    constant-trust arbiter because their training labels were single-class.
    """
    labels = manifest.labels
    trust_mask, _ = trust_training_mask(labels, preds_a, preds_b)
    outcomes: list[ArbitrationOutcome | None] = [None] * len(manifest)
    fallback_folds: list[int] = []
    for fold in range(folds.k):
        with _stage("fit arbiter", fold):
            train_side = (folds.fold_of != fold) & trust_mask
            if not np.any(train_side):
                # no trust evidence at all: default to model A
                model = _constant_trust_model(cfg, trust_a=True)
                fallback_folds.append(fold)
            else:
                x_train = assemble_feature_matrix(
                    preds_a[train_side],
                    preds_b[train_side],
                    None if probes is None else probes[train_side],
                    cfg,
                )
                _, y_train = trust_training_mask(
                    labels[train_side], preds_a[train_side], preds_b[train_side]
                )
                try:
                    model = fit_arbiter(x_train, y_train, cfg, reg_l2=reg_l2, seed=seed)
                except ValidationError as exc:
                    if "degenerate" not in str(exc):
                        raise
                    model = _constant_trust_model(cfg, trust_a=bool(y_train.mean() >= 0.5))
                    fallback_folds.append(fold)
        with _stage("arbitrate", fold):
            for i in folds.indices(fold):
                s = manifest.samples[i]
                outcomes[i] = arbitrate(
                    ProbTriple.from_array(preds_a[i]),
                    ProbTriple.from_array(preds_b[i]),
                    None if probes is None else probes[i],
                    model,
                    sample_id=s.id,
                )
    return list(outcomes), fallback_folds


def _chosen_probs(outcome: ArbitrationOutcome, pa: np.ndarray, pb: np.ndarray) -> ProbTriple:
    # agreement keeps model A's distribution (same argmax either way)
    if outcome.source is OutcomeSource.ARBITER_B:
        return ProbTriple.from_array(pb)
    return ProbTriple.from_array(pa)


def run_experiment(config: ExperimentConfig, out_dir: str | Path) -> ExperimentRun:
    """Folds -> per-role training -> OOF -> metrics -> profiles -> probes ->
    arbitration -> ablation -> reports + geo exports."""
    t_start = time.time()
    run_dir = Path(out_dir)
    for sub in ("models", "logs", "predictions", "reports", "geo", "probes"):
        (run_dir / sub).mkdir(parents=True, exist_ok=True)

    (run_dir / "config.json").write_bytes(
        dumps_canonical(config.to_dict()).encode("utf-8") + b"\n"
    )

    with _stage("read manifest"):
        manifest = read_manifest(config.manifest)
        labels = manifest.labels

    img = txt = None
    if config.image_embeddings:
        with _stage("read image embeddings"):
            img = bind_embeddings(manifest, read_embeddings(config.image_embeddings), "image")
    if config.text_embeddings:
        with _stage("read text embeddings"):
            txt = bind_embeddings(manifest, read_embeddings(config.text_embeddings), "text")

    with _stage("stratified folds"):
        folds = stratified_folds(manifest, config.k_folds, config.seed)
        folds.save(run_dir / "folds.json")

    preds = {}
    for tag, role in (("model_a", config.model_a), ("model_b", config.model_b)):
        preds[tag] = _oof_for_role(role, tag, manifest, folds, img, txt, run_dir)
        write_predictions(
            (
                (s.id, tag, ProbTriple.from_array(preds[tag][s.row]))
                for s in manifest.samples
            ),
            run_dir / "predictions" / f"{tag}.jsonl",
        )

    probes = None
    if config.probe_embeddings:
        with _stage("score probes"):
            if img is None:
                raise ValidationError("probe scoring needs image embeddings")
            blobs = {
                ProbeDimension.from_name(name): read_embeddings(path)
                for name, path in config.probe_embeddings.items()
            }
            for dim in PROBE_DIMENSIONS:
                if dim not in blobs:
                    raise ValidationError(f"probe embeddings missing dimension {dim.value}")
            probes = probe_matrix_raw(img, blobs, config.pooling)
            write_embeddings(probes.astype(np.float32), run_dir / "probes" / "probe_matrix.darb")

    thresholds = TriageThresholds(m_hi=config.m_hi, m_lo=config.m_lo)

    metrics: dict[str, MetricReport] = {}
    profiles: dict[str, ProfileReport] = {}
    for tag in ("model_a", "model_b"):
        with _stage(f"evaluate {tag}"):
            metrics[tag] = evaluate(confusion(labels, np.argmax(preds[tag], axis=1)))
            profiles[tag] = profile(_margin_records(manifest, preds[tag], thresholds))

    with _stage("arbitration"):
        outcomes, fallback_folds = _arbitrate_all(
            manifest,
            folds,
            preds["model_a"],
            preds["model_b"],
            probes,
            config.feature_config(),
            config.reg_l2,
            config.seed,
        )
        finals = np.array([int(o.final) for o in outcomes])
        metrics["arbitrated"] = evaluate(confusion(labels, finals))
        arb_errors = []
        for o, s in zip(outcomes, manifest.samples):
            # the final class is the chosen side's argmax, so its margin
            # record exists exactly when the arbitrated output is wrong
            chosen = _chosen_probs(o, preds["model_a"][s.row], preds["model_b"][s.row])
            rec = margin_record(s.id, chosen, s.label, thresholds)
            if rec is not None:
                arb_errors.append(rec)
        profiles["arbitrated"] = profile(arb_errors)

        n = len(manifest)
        agree = sum(1 for o in outcomes if o.source is OutcomeSource.AGREEMENT)
        a_right = np.argmax(preds["model_a"], axis=1) == labels
        b_right = np.argmax(preds["model_b"], axis=1) == labels
        agree_mask = np.argmax(preds["model_a"], axis=1) == np.argmax(preds["model_b"], axis=1)
        oracle = float(np.mean(np.where(agree_mask, a_right, a_right | b_right)))
        arbitration_summary = {
            "n_samples": n,
            "n_agreement": agree,
            "n_arbitrated": n - agree,
            "n_to_model_a": sum(1 for o in outcomes if o.source is OutcomeSource.ARBITER_A),
            "n_to_model_b": sum(1 for o in outcomes if o.source is OutcomeSource.ARBITER_B),
            "accuracy_model_a": metrics["model_a"].accuracy,
            "accuracy_model_b": metrics["model_b"].accuracy,
            "accuracy_arbitrated": metrics["arbitrated"].accuracy,
            "oracle_upper_bound": oracle,
            "feature_config": config.feature_config().to_dict(),
            "constant_trust_folds": fallback_folds,
        }

        with (run_dir / "predictions" / "arbitrated.jsonl").open("wb") as fh:
            for o in outcomes:
                rec = {
                    "id": o.id,
                    "final": o.final.canonical_name,
                    "source": o.source.value,
                    "score": o.score,
                }
                fh.write(dumps_canonical(rec).encode("utf-8") + b"\n")

    ablation = None
    if config.run_ablation_table:
        with _stage("ablation"):
            ablation = run_ablation(
                labels,
                preds["model_a"],
                preds["model_b"],
                probes,
                folds.fold_of,
                reg_l2=config.reg_l2,
                seed=config.seed,
            )

    with _stage("write reports"):
        clip = None
        if img is not None and txt is not None:
            clip = corpus_clip_score(zip(img, txt))
        report_payload = {
            tag: rep.to_dict() for tag, rep in metrics.items()
        }
        if clip is not None:
            report_payload["corpus_clip_score"] = clip
        (run_dir / "reports" / "metrics.json").write_bytes(
            dumps_canonical(report_payload).encode("utf-8") + b"\n"
        )
        rows = [
            ("model_a", metrics["model_a"], None),
            ("model_b", metrics["model_b"], clip),
            ("arbitrated", metrics["arbitrated"], None),
        ]
        (run_dir / "reports" / "metrics.txt").write_text(format_metric_table(rows), encoding="utf-8")

        profile_payload = {tag: rep.to_dict() for tag, rep in profiles.items()}
        (run_dir / "reports" / "profiles.json").write_bytes(
            dumps_canonical(profile_payload).encode("utf-8") + b"\n"
        )
        (run_dir / "reports" / "profiles.txt").write_text(
            format_profile_table(sorted(profiles.items())), encoding="utf-8"
        )
        (run_dir / "reports" / "arbitration.json").write_bytes(
            dumps_canonical(arbitration_summary).encode("utf-8") + b"\n"
        )
        if ablation is not None:
            (run_dir / "reports" / "ablation.json").write_bytes(
                dumps_canonical(ablation.to_dict()).encode("utf-8") + b"\n"
            )
            (run_dir / "reports" / "ablation.txt").write_text(ablation.to_text(), encoding="utf-8")

    with _stage("geo export"):
        probs_a = {s.id: ProbTriple.from_array(preds["model_a"][s.row]) for s in manifest.samples}
        probs_b = {s.id: ProbTriple.from_array(preds["model_b"][s.row]) for s in manifest.samples}
        chosen = {
            o.id: _chosen_probs(o, preds["model_a"][i], preds["model_b"][i])
            for i, o in enumerate(outcomes)
        }
        arb_entries = geo_entries_from_outcomes(outcomes, chosen)
        write_geojson(
            export_geojson(manifest, arb_entries, GeoMode.ALL, thresholds),
            run_dir / "geo" / "arbitrated_all.geojson",
        )
        write_geojson(
            export_geojson(manifest, arb_entries, GeoMode.MISCLASSIFIED_ONLY, thresholds),
            run_dir / "geo" / "arbitrated_misclassified.geojson",
        )
        for tag, probs in (("model_a", probs_a), ("model_b", probs_b)):
            entries = geo_entries_from_predictions(probs, tag)
            write_geojson(
                export_geojson(manifest, entries, GeoMode.MISCLASSIFIED_ONLY, thresholds),
                run_dir / "geo" / f"{tag}_misclassified.geojson",
            )

    timestamps = {"started": t_start, "finished": time.time()}
    (run_dir / "run_meta.json").write_text(
        json.dumps({"timestamps": timestamps}, indent=2) + "\n", encoding="utf-8"
    )

    return ExperimentRun(
        run_dir=run_dir,
        config=config,
        folds=folds,
        metrics=metrics,
        profiles=profiles,
        arbitration=arbitration_summary,
        ablation=ablation,
        outcomes=outcomes,
        timestamps=timestamps,
    )
