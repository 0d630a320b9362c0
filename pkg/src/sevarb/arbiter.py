"""Disagreement-driven arbitration between two base models.

When both models pick the same class, that prediction passes through.
Otherwise a binary logistic-regression meta-classifier scores the case from
confidence / entropy / semantic-probe features; score >= tau trusts model A
(label 1 in the trust training set means "model A was correct"). The fit is
full-batch gradient descent with backtracking line search on an
L2-regularized objective, which is convex, so it converges to gradient
infinity-norm < 1e-8 on any non-degenerate training set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from sevarb.core import (
    PROBE_DIMENSIONS,
    ProbTriple,
    SeverityLabel,
    ValidationError,
    argmax_class,
)
from sevarb.metrics import confusion, evaluate

FEATURE_NAMES = (
    "conf_a",
    "conf_b",
    "ent_a",
    "ent_b",
    "probe_trees",
    "probe_debris",
    "probe_infrastructure",
    "probe_flood",
)


@dataclass(frozen=True)
class FeatureConfig:
    use_confidence: bool = True
    use_uncertainty: bool = True
    use_probes: bool = True
    tau_decision: float = 0.5

    def __post_init__(self) -> None:
        if not (self.use_confidence or self.use_uncertainty or self.use_probes):
            raise ValidationError("at least one feature family must be enabled")
        if not (0.0 <= self.tau_decision <= 1.0):
            raise ValidationError(f"tau_decision {self.tau_decision} outside [0, 1]")

    def active_feature_names(self) -> tuple[str, ...]:
        names: list[str] = []
        if self.use_confidence:
            names += ["conf_a", "conf_b"]
        if self.use_uncertainty:
            names += ["ent_a", "ent_b"]
        if self.use_probes:
            names += [f"probe_{d.value}" for d in PROBE_DIMENSIONS]
        return tuple(names)

    def to_dict(self) -> dict:
        return {
            "use_confidence": self.use_confidence,
            "use_uncertainty": self.use_uncertainty,
            "use_probes": self.use_probes,
            "tau_decision": self.tau_decision,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(
            use_confidence=bool(d["use_confidence"]),
            use_uncertainty=bool(d["use_uncertainty"]),
            use_probes=bool(d["use_probes"]),
            tau_decision=float(d["tau_decision"]),
        )


# Canonical presets with their decision thresholds.
PRESETS: dict[str, FeatureConfig] = {
    "conf": FeatureConfig(True, False, False, 0.35),
    "conf+unc": FeatureConfig(True, True, False, 0.40),
    "conf+unc+probe": FeatureConfig(True, True, True, 0.45),
    "probe_only": FeatureConfig(False, False, True, 0.50),
}

PRESET_FEATURE_LABELS = {
    "conf": "confidence only",
    "conf+unc": "confidence + uncertainty",
    "conf+unc+probe": "confidence + uncertainty + semantic probes",
    "probe_only": "probes only",
}


def _entropy_rows(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logs).sum(axis=1)


def assemble_feature_matrix(
    preds_a: np.ndarray,
    preds_b: np.ndarray,
    probes: np.ndarray | None,
    cfg: FeatureConfig,
) -> np.ndarray:
    """Feature rows in the fixed order, filtered by the config flags."""
    preds_a = np.asarray(preds_a, dtype=float)
    preds_b = np.asarray(preds_b, dtype=float)
    cols: list[np.ndarray] = []
    if cfg.use_confidence:
        cols += [preds_a.max(axis=1), preds_b.max(axis=1)]
    if cfg.use_uncertainty:
        cols += [_entropy_rows(preds_a), _entropy_rows(preds_b)]
    if cfg.use_probes:
        if probes is None:
            raise ValidationError("feature config uses probes but none were given")
        probes = np.asarray(probes, dtype=float)
        if probes.shape != (preds_a.shape[0], 4):
            raise ValidationError(f"probe matrix shape {probes.shape} != ({preds_a.shape[0]}, 4)")
        cols += [probes[:, k] for k in range(4)]
    return np.stack(cols, axis=1)


def assemble_features(
    pred_a: ProbTriple,
    pred_b: ProbTriple,
    probes: np.ndarray | None,
    cfg: FeatureConfig,
) -> np.ndarray:
    """Single-sample feature vector."""
    pr = None if probes is None else np.asarray(probes, dtype=float)[None, :]
    return assemble_feature_matrix(
        pred_a.as_array()[None, :], pred_b.as_array()[None, :], pr, cfg
    )[0]


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


@dataclass
class ArbiterModel:
    weights: np.ndarray  # over kept (active, non-constant) features
    bias: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    feature_names: tuple[str, ...]  # kept features, in order
    dropped_features: tuple[str, ...]  # zero-variance features removed at fit
    config: FeatureConfig
    n_train: int = 0
    n_iterations: int = 0
    final_grad_norm: float = 0.0

    def score(self, features: np.ndarray) -> float:
        """Sigmoid trust score for one raw (unstandardized) feature vector."""
        x = np.asarray(features, dtype=float)
        active = self.config.active_feature_names()
        if x.shape != (len(active),):
            raise ValidationError(f"expected {len(active)} features, got shape {x.shape}")
        keep = [i for i, name in enumerate(active) if name in self.feature_names]
        z = (x[keep] - self.feature_means) / self.feature_stds
        return float(_sigmoid(np.array([z @ self.weights + self.bias]))[0])

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "feature_means": self.feature_means.tolist(),
            "feature_stds": self.feature_stds.tolist(),
            "feature_names": list(self.feature_names),
            "dropped_features": list(self.dropped_features),
            "config": self.config.to_dict(),
            "n_train": self.n_train,
            "n_iterations": self.n_iterations,
            "final_grad_norm": self.final_grad_norm,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "ArbiterModel":
        return cls(
            weights=np.asarray(d["weights"], dtype=float),
            bias=float(d["bias"]),
            feature_means=np.asarray(d["feature_means"], dtype=float),
            feature_stds=np.asarray(d["feature_stds"], dtype=float),
            feature_names=tuple(d["feature_names"]),
            dropped_features=tuple(d["dropped_features"]),
            config=FeatureConfig.from_dict(d["config"]),
            n_train=int(d["n_train"]),
            n_iterations=int(d["n_iterations"]),
            final_grad_norm=float(d["final_grad_norm"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ArbiterModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def fit_arbiter(
    features: np.ndarray,
    labels: np.ndarray,
    cfg: FeatureConfig,
    reg_l2: float = 1e-2,
    seed: int = 0,
    max_iter: int = 5000,
    grad_tol: float = 1e-8,
    balance_classes: bool = False,
) -> ArbiterModel:
    """L2-regularized logistic regression on z-standardized features.

    labels: 1 trusts model A, 0 trusts model B. Build the training set from
    disagreements where exactly one base model is correct; both-wrong cases
    carry no trust label and must be excluded by the caller.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValidationError("feature/label shape mismatch")
    m = x.shape[0]
    if m == 0:
        raise ValidationError("empty arbitration training set")
    if len(np.unique(y)) < 2:
        raise ValidationError("degenerate arbitration labels (single class)")

    active = cfg.active_feature_names()
    if x.shape[1] != len(active):
        raise ValidationError(f"expected {len(active)} features, got {x.shape[1]}")

    means = x.mean(axis=0)
    stds = x.std(axis=0)
    # numerically constant columns (float noise around the mean) count as
    # zero-variance; standardizing by ~1e-16 would explode them
    keep = stds > 1e-12 * np.maximum(1.0, np.abs(means))
    dropped = tuple(name for name, k in zip(active, keep) if not k)
    if not np.any(keep):
        raise ValidationError("all features have zero variance")
    xs = (x[:, keep] - means[keep]) / stds[keep]
    kept_names = tuple(name for name, k in zip(active, keep) if k)

    if balance_classes:
        pos = y.sum()
        w_pos = m / (2.0 * pos)
        w_neg = m / (2.0 * (m - pos))
        sample_w = np.where(y == 1.0, w_pos, w_neg)
    else:
        sample_w = np.ones(m)
    sw_sum = sample_w.sum()

    def objective_and_grad(w: np.ndarray, b: float):
        z = xs @ w + b
        # stable BCE: softplus(z) - y*z, weighted mean
        softplus = np.logaddexp(0.0, z)
        loss = float((sample_w * (softplus - y * z)).sum() / sw_sum)
        loss += 0.5 * reg_l2 * float(w @ w)
        p = _sigmoid(z)
        resid = sample_w * (p - y) / sw_sum
        g_w = xs.T @ resid + reg_l2 * w
        g_b = float(resid.sum())
        return loss, g_w, g_b

    w = np.zeros(xs.shape[1])
    b = 0.0
    loss, g_w, g_b = objective_and_grad(w, b)
    step = 1.0
    iterations = 0
    grad_norm = max(float(np.max(np.abs(g_w))), abs(g_b))
    while grad_norm >= grad_tol and iterations < max_iter:
        g_sq = float(g_w @ g_w) + g_b * g_b
        # backtracking line search (Armijo, monotone descent guaranteed)
        t = min(step * 2.0, 1e6)
        while True:
            w_new = w - t * g_w
            b_new = b - t * g_b
            loss_new, g_w_new, g_b_new = objective_and_grad(w_new, b_new)
            if loss_new <= loss - 0.5 * t * g_sq or t < 1e-18:
                break
            t *= 0.5
        step = t
        w, b, loss, g_w, g_b = w_new, b_new, loss_new, g_w_new, g_b_new
        grad_norm = max(float(np.max(np.abs(g_w))), abs(g_b))
        iterations += 1

    return ArbiterModel(
        weights=w,
        bias=b,
        feature_means=means[keep],
        feature_stds=stds[keep],
        feature_names=kept_names,
        dropped_features=dropped,
        config=cfg,
        n_train=m,
        n_iterations=iterations,
        final_grad_norm=grad_norm,
    )


# ---------------------------------------------------------------------------
# Arbitration
# ---------------------------------------------------------------------------


class OutcomeSource(Enum):
    AGREEMENT = "agreement"
    ARBITER_A = "arbiter_a"
    ARBITER_B = "arbiter_b"


@dataclass(frozen=True)
class ArbitrationOutcome:
    id: str
    final: SeverityLabel
    source: OutcomeSource
    score: float | None = None

    def __post_init__(self) -> None:
        if (self.source is OutcomeSource.AGREEMENT) != (self.score is None):
            raise ValidationError("score must be present exactly when arbitrated")


def arbitrate(
    pred_a: ProbTriple,
    pred_b: ProbTriple,
    probes: np.ndarray | None,
    model: ArbiterModel,
    sample_id: str = "",
) -> ArbitrationOutcome:
    """Pass-through on agreement; otherwise trust A iff score >= tau."""
    cls_a = argmax_class(pred_a)
    cls_b = argmax_class(pred_b)
    if cls_a == cls_b:
        return ArbitrationOutcome(id=sample_id, final=cls_a, source=OutcomeSource.AGREEMENT)
    x = assemble_features(pred_a, pred_b, probes, model.config)
    score = model.score(x)
    if score >= model.config.tau_decision:
        return ArbitrationOutcome(
            id=sample_id, final=cls_a, source=OutcomeSource.ARBITER_A, score=score
        )
    return ArbitrationOutcome(id=sample_id, final=cls_b, source=OutcomeSource.ARBITER_B, score=score)


def arbitrate_batch(
    ids: list[str],
    preds_a: np.ndarray,
    preds_b: np.ndarray,
    probes: np.ndarray | None,
    model: ArbiterModel,
) -> list[ArbitrationOutcome]:
    out = []
    for i, sid in enumerate(ids):
        pr = None if probes is None else probes[i]
        out.append(
            arbitrate(
                ProbTriple.from_array(preds_a[i]),
                ProbTriple.from_array(preds_b[i]),
                pr,
                model,
                sample_id=sid,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Trust-set construction and ablation
# ---------------------------------------------------------------------------


def disagreement_mask(preds_a: np.ndarray, preds_b: np.ndarray) -> np.ndarray:
    return np.argmax(preds_a, axis=1) != np.argmax(preds_b, axis=1)


def trust_training_mask(
    labels: np.ndarray, preds_a: np.ndarray, preds_b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(mask, y): disagreements where exactly one model is correct;
    y = 1 where model A is the correct one."""
    labels = np.asarray(labels)
    a_correct = np.argmax(preds_a, axis=1) == labels
    b_correct = np.argmax(preds_b, axis=1) == labels
    mask = disagreement_mask(preds_a, preds_b) & (a_correct ^ b_correct)
    return mask, a_correct[mask].astype(float)


@dataclass
class AblationRow:
    setting: str
    features: str
    accuracy: float
    macro_f1: float
    n_disagreements: int
    trust_accuracy: float | None = None

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "features": self.features,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "n_disagreements": self.n_disagreements,
            "trust_accuracy": self.trust_accuracy,
        }


@dataclass
class AblationTable:
    rows: list[AblationRow] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (setting, reason)

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "skipped": [{"setting": s, "reason": r} for s, r in self.skipped],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def to_text(self) -> str:
        header = ["Setting", "Features", "Accuracy", "Macro-F1"]
        body = [
            [r.setting, r.features, f"{r.accuracy:.3f}", f"{r.macro_f1:.3f}"] for r in self.rows
        ]
        widths = [max(len(row[i]) for row in [header, *body]) for i in range(4)]
        lines = [
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row))
            for row in [header, *body]
        ]
        for setting, reason in self.skipped:
            lines.append(f"{setting}: skipped ({reason})")
        return "\n".join(lines) + "\n"


def run_ablation(
    labels: np.ndarray,
    preds_a: np.ndarray,
    preds_b: np.ndarray,
    probes: np.ndarray | None,
    fold_of: np.ndarray,
    presets: dict[str, FeatureConfig] | None = None,
    reg_l2: float = 1e-2,
    seed: int = 0,
) -> AblationTable:
    """Per preset: fit the arbiter on training-fold disagreements (exactly one
    model correct), arbitrate held-out-fold disagreements, and report
    severity-level accuracy / macro-F1 over those held-out cases. A binary
    trust_accuracy diagnostic is included for the exactly-one-correct subset.
    """
    presets = PRESETS if presets is None else presets
    labels = np.asarray(labels)
    fold_of = np.asarray(fold_of)
    n = labels.shape[0]
    table = AblationTable()

    dis_mask = disagreement_mask(preds_a, preds_b)
    trust_mask, _ = trust_training_mask(labels, preds_a, preds_b)

    for name, cfg in presets.items():
        finals = np.full(n, -1, dtype=np.int64)
        trust_hits: list[bool] = []
        skip_reason = None
        for fold in np.unique(fold_of):
            train_side = (fold_of != fold) & trust_mask
            eval_side = (fold_of == fold) & dis_mask
            if not np.any(eval_side):
                skip_reason = f"no disagreements in fold {fold}"
                break
            if not np.any(train_side):
                skip_reason = f"no trainable disagreements outside fold {fold}"
                break
            try:
                x_train = assemble_feature_matrix(
                    preds_a[train_side], preds_b[train_side],
                    None if probes is None else probes[train_side], cfg,
                )
                _, y_train = trust_training_mask(
                    labels[train_side], preds_a[train_side], preds_b[train_side]
                )
                model = fit_arbiter(x_train, y_train, cfg, reg_l2=reg_l2, seed=seed)
            except ValidationError as exc:
                skip_reason = f"fold {fold}: {exc}"
                break
            idx = np.flatnonzero(eval_side)
            outcomes = arbitrate_batch(
                [str(i) for i in idx],
                preds_a[idx],
                preds_b[idx],
                None if probes is None else probes[idx],
                model,
            )
            for i, out in zip(idx, outcomes):
                finals[i] = int(out.final)
                if trust_mask[i]:
                    a_right = int(np.argmax(preds_a[i])) == int(labels[i])
                    picked_a = out.source is OutcomeSource.ARBITER_A
                    trust_hits.append(picked_a == a_right)
        if skip_reason is not None:
            table.skipped.append((name, skip_reason))
            continue
        eval_idx = np.flatnonzero(dis_mask)
        rep = evaluate(confusion(labels[eval_idx], finals[eval_idx]))
        table.rows.append(
            AblationRow(
                setting=name,
                features=PRESET_FEATURE_LABELS.get(name, ", ".join(cfg.active_feature_names())),
                accuracy=rep.accuracy,
                macro_f1=rep.f1_macro,
                n_disagreements=int(len(eval_idx)),
                trust_accuracy=float(np.mean(trust_hits)) if trust_hits else None,
            )
        )
    return table
