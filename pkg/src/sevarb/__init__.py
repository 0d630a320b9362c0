"""sevarb: street-view damage severity classification with model arbitration.

The package covers the full workflow: interchange file formats, a fusion
head trained with a combined contrastive + classification objective,
confidence-margin error profiling, semantic probe mining and scoring, a
logistic-regression arbitration meta-classifier, evaluation metrics, and a
cross-validation harness with geo-referenced exports.
"""

from sevarb.arbiter import (
    PRESETS,
    ArbiterModel,
    ArbitrationOutcome,
    FeatureConfig,
    OutcomeSource,
    arbitrate,
    assemble_features,
    fit_arbiter,
    run_ablation,
)
from sevarb.confidence import (
    MarginRecord,
    ProfileReport,
    TriageCategory,
    TriageThresholds,
    margin,
    margin_record,
    profile,
    triage,
)
from sevarb.core import (
    PROBE_DIMENSIONS,
    ProbeDimension,
    ProbTriple,
    Sample,
    SeverityLabel,
    ValidationError,
    argmax_class,
    cosine,
    entropy,
    softmax,
)
from sevarb.fusion import (
    FusionParams,
    Mode,
    TrainConfig,
    cls_loss,
    gradient_check,
    info_nce,
    predict_proba,
    predict_proba_batch,
    total_loss,
    train,
)
from sevarb.harness import (
    ExperimentConfig,
    ExperimentRun,
    FoldAssignment,
    GeoMode,
    collect_oof,
    export_geojson,
    run_experiment,
    stratified_folds,
)
from sevarb.interchange import (
    Manifest,
    PromptSet,
    read_embeddings,
    read_manifest,
    read_predictions,
    write_embeddings,
    write_manifest,
    write_predictions,
)
from sevarb.metrics import (
    ConfusionMatrix,
    MetricReport,
    clip_score,
    confusion,
    corpus_clip_score,
    evaluate,
    mcc_multiclass,
)
from sevarb.probes import (
    DimensionAnchors,
    Pooling,
    ProbeConfig,
    extract_candidates,
    log_odds,
    mine_probes,
    probe_matrix,
    probe_vector,
)

__version__ = "0.1.0"

__all__ = [
    "PRESETS",
    "PROBE_DIMENSIONS",
    "ArbiterModel",
    "ArbitrationOutcome",
    "ConfusionMatrix",
    "DimensionAnchors",
    "ExperimentConfig",
    "ExperimentRun",
    "FeatureConfig",
    "FoldAssignment",
    "FusionParams",
    "GeoMode",
    "Manifest",
    "MarginRecord",
    "MetricReport",
    "Mode",
    "OutcomeSource",
    "Pooling",
    "ProbeConfig",
    "ProbeDimension",
    "ProbTriple",
    "ProfileReport",
    "PromptSet",
    "Sample",
    "SeverityLabel",
    "TrainConfig",
    "TriageCategory",
    "TriageThresholds",
    "ValidationError",
    "arbitrate",
    "argmax_class",
    "assemble_features",
    "clip_score",
    "cls_loss",
    "collect_oof",
    "confusion",
    "corpus_clip_score",
    "cosine",
    "entropy",
    "evaluate",
    "export_geojson",
    "extract_candidates",
    "fit_arbiter",
    "gradient_check",
    "info_nce",
    "log_odds",
    "margin",
    "margin_record",
    "mcc_multiclass",
    "mine_probes",
    "predict_proba",
    "predict_proba_batch",
    "probe_matrix",
    "probe_vector",
    "profile",
    "read_embeddings",
    "read_manifest",
    "read_predictions",
    "run_ablation",
    "run_experiment",
    "softmax",
    "stratified_folds",
    "total_loss",
    "train",
    "triage",
    "write_embeddings",
    "write_manifest",
    "write_predictions",
    "__version__",
]
