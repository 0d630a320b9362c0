"""Fusion head over frozen embeddings: trainable linear projections per
modality plus a linear classification head on the concatenation of the two
L2-normalized projected embeddings.

The training objective mixes a single-directional InfoNCE term (images as
queries, matched captions as positive keys) with per-sample mean
cross-entropy: lambda * contrastive + (1 - lambda) * classification.
Gradients are derived by hand (no autodiff); `gradient_check` verifies them
against central finite differences. Unimodal baselines run as modes of the
same head with the absent modality's slot zero-filled.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from sevarb.core import ProbTriple, ValidationError, softmax

PARAMS_MAGIC = b"DARP"
PARAMS_VERSION = 1
_PARAMS_HEADER = struct.Struct("<4sIQQQ")  # magic, version, d_proj, d_img, d_txt

LOG_CLAMP = 1e-12


class Mode(Enum):
    IMAGE_ONLY = "image_only"
    TEXT_ONLY = "text_only"
    FUSED = "fused"


@dataclass
class TrainConfig:
    mode: Mode = Mode.FUSED
    lambda_mix: float = 0.5
    tau_contrast: float = 0.07
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    d_proj: int = 128

    def __post_init__(self) -> None:
        if isinstance(self.mode, str):
            self.mode = Mode(self.mode)
        if not (0.0 <= self.lambda_mix <= 1.0):
            raise ValidationError(f"lambda_mix {self.lambda_mix} outside [0, 1]")
        if self.tau_contrast <= 0.0:
            raise ValidationError(f"tau_contrast must be positive, got {self.tau_contrast}")
        if self.lr <= 0.0 or self.weight_decay < 0.0:
            raise ValidationError("lr must be positive, weight_decay non-negative")
        if self.batch_size < 1 or self.epochs < 1 or self.d_proj < 1:
            raise ValidationError("batch_size, epochs, d_proj must be >= 1")
        if self.mode is not Mode.FUSED:
            # no contrastive term without two modalities
            self.lambda_mix = 0.0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "lambda_mix": self.lambda_mix,
            "tau_contrast": self.tau_contrast,
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "d_proj": self.d_proj,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class FusionParams:
    w_img: np.ndarray  # (d_proj, d_img)
    w_txt: np.ndarray  # (d_proj, d_txt)
    w_head: np.ndarray  # (3, 2 * d_proj)
    b_head: np.ndarray  # (3,)

    def __post_init__(self) -> None:
        p = self.w_img.shape[0]
        if self.w_txt.shape[0] != p or self.w_head.shape != (3, 2 * p) or self.b_head.shape != (3,):
            raise ValidationError("inconsistent parameter shapes")
        for name, arr in self.arrays():
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite values in {name}")

    @property
    def d_proj(self) -> int:
        return self.w_img.shape[0]

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("w_img", self.w_img),
            ("w_txt", self.w_txt),
            ("w_head", self.w_head),
            ("b_head", self.b_head),
        ]

    def copy(self) -> "FusionParams":
        return FusionParams(
            self.w_img.copy(), self.w_txt.copy(), self.w_head.copy(), self.b_head.copy()
        )


class ClampCounter:
    """Counts how many log arguments were clamped at the numeric floor."""

    def __init__(self) -> None:
        self.count = 0


# ---------------------------------------------------------------------------
# Loss terms
# ---------------------------------------------------------------------------


def _unit_rows(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValidationError("zero-norm row in projected embeddings")
    return m / norms, norms


def info_nce(img_proj: np.ndarray, txt_proj: np.ndarray, tau: float) -> float:
    """Single-directional InfoNCE over a batch of projection pairs.

    Inputs are L2-normalized here; sim(x, y) is their cosine.
    """
    if tau <= 0.0:
        raise ValidationError(f"temperature must be positive, got {tau}")
    a = np.asarray(img_proj, dtype=float)
    b = np.asarray(txt_proj, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] < 1:
        raise ValidationError(f"projection batches must match, got {a.shape} vs {b.shape}")
    ua, _ = _unit_rows(a)
    ub, _ = _unit_rows(b)
    s = (ua @ ub.T) / tau
    # loss_i = logsumexp(s_i) - s_ii
    smax = s.max(axis=1, keepdims=True)
    lse = smax[:, 0] + np.log(np.exp(s - smax).sum(axis=1))
    return float(np.mean(lse - np.diag(s)))


def cls_loss(
    probs: np.ndarray,
    truth: np.ndarray,
    counter: ClampCounter | None = None,
) -> float:
    """Mean negative log-probability of the true class over the batch."""
    p = np.asarray(probs, dtype=float)
    t = np.asarray([int(x) for x in truth], dtype=np.int64)
    if p.ndim != 2 or p.shape[0] != t.shape[0] or p.shape[0] < 1:
        raise ValidationError("probability/label batch mismatch or empty batch")
    picked = p[np.arange(len(t)), t]
    n_clamped = int(np.sum(picked < LOG_CLAMP))
    if n_clamped and counter is not None:
        counter.count += n_clamped
    return float(np.mean(-np.log(np.maximum(picked, LOG_CLAMP))))


def total_loss(contrast: float, cls: float, lambda_mix: float) -> float:
    if not (0.0 <= lambda_mix <= 1.0):
        raise ValidationError(f"lambda_mix {lambda_mix} outside [0, 1]")
    return lambda_mix * contrast + (1.0 - lambda_mix) * cls


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _combine(u_unit: np.ndarray, v_unit: np.ndarray, mode: Mode) -> np.ndarray:
    if mode is Mode.IMAGE_ONLY:
        return np.concatenate([u_unit, np.zeros_like(u_unit)], axis=1)
    if mode is Mode.TEXT_ONLY:
        return np.concatenate([np.zeros_like(v_unit), v_unit], axis=1)
    return np.concatenate([u_unit, v_unit], axis=1)


def _forward_backward(
    params: FusionParams,
    x_img: np.ndarray,
    x_txt: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    counter: ClampCounter | None = None,
):
    """One batch: losses plus gradients for every parameter tensor."""
    n = x_img.shape[0]
    lam = cfg.lambda_mix

    u = x_img @ params.w_img.T
    v = x_txt @ params.w_txt.T
    u_unit, u_norm = _unit_rows(u)
    v_unit, v_norm = _unit_rows(v)
    z = _combine(u_unit, v_unit, cfg.mode)

    logits = z @ params.w_head.T + params.b_head
    probs = softmax(logits)
    l_cls = cls_loss(probs, labels, counter)

    if lam > 0.0:
        s = (u_unit @ v_unit.T) / cfg.tau_contrast
        smax = s.max(axis=1, keepdims=True)
        es = np.exp(s - smax)
        q = es / es.sum(axis=1, keepdims=True)
        l_con = float(np.mean((smax[:, 0] + np.log(es.sum(axis=1))) - np.diag(s)))
    else:
        q = None
        l_con = 0.0

    l_total = total_loss(l_con, l_cls, lam)

    # classification backward: d l_cls / d logits = (probs - onehot) / n
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    g_logits = (1.0 - lam) * (probs - onehot) / n
    g_w_head = g_logits.T @ z
    g_b_head = g_logits.sum(axis=0)
    g_z = g_logits @ params.w_head
    g_u_unit = g_z[:, : params.d_proj]
    g_v_unit = g_z[:, params.d_proj :]
    if cfg.mode is Mode.IMAGE_ONLY:
        g_v_unit = np.zeros_like(g_v_unit)
    elif cfg.mode is Mode.TEXT_ONLY:
        g_u_unit = np.zeros_like(g_u_unit)

    # contrastive backward: d l_con / d s = (q - I) / n, chain through s/tau
    if lam > 0.0:
        c = lam * (q - np.eye(n)) / (n * cfg.tau_contrast)
        g_u_unit = g_u_unit + c @ v_unit
        g_v_unit = g_v_unit + c.T @ u_unit

    # through the row normalization: du = (g - (g . u_unit) u_unit) / |u|
    def denorm(g_unit: np.ndarray, unit: np.ndarray, norm: np.ndarray) -> np.ndarray:
        return (g_unit - (g_unit * unit).sum(axis=1, keepdims=True) * unit) / norm

    g_u = denorm(g_u_unit, u_unit, u_norm)
    g_v = denorm(g_v_unit, v_unit, v_norm)
    g_w_img = g_u.T @ x_img
    g_w_txt = g_v.T @ x_txt

    grads = {"w_img": g_w_img, "w_txt": g_w_txt, "w_head": g_w_head, "b_head": g_b_head}
    return l_total, l_con, l_cls, grads


def batch_loss(
    params: FusionParams,
    x_img: np.ndarray,
    x_txt: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
) -> float:
    l_total, _, _, _ = _forward_backward(params, x_img, x_txt, labels, cfg)
    return l_total


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    params: FusionParams
    log: list[dict] = field(default_factory=list)
    clamped_logs: int = 0


def init_params(d_img: int, d_txt: int, cfg: TrainConfig, rng: np.random.Generator) -> FusionParams:
    p = cfg.d_proj
    return FusionParams(
        w_img=rng.standard_normal((p, d_img)) / np.sqrt(d_img),
        w_txt=rng.standard_normal((p, d_txt)) / np.sqrt(d_txt),
        w_head=np.zeros((3, 2 * p)),
        b_head=np.zeros(3),
    )


def train(
    img_embs: np.ndarray,
    txt_embs: np.ndarray | None,
    labels: np.ndarray,
    cfg: TrainConfig,
) -> TrainResult:
    """Mini-batch AdamW on the mixed objective; deterministic given cfg.seed."""
    if img_embs is None and cfg.mode is not Mode.TEXT_ONLY:
        raise ValidationError(f"mode {cfg.mode.value} requires image embeddings")
    if txt_embs is None and cfg.mode is not Mode.IMAGE_ONLY:
        raise ValidationError(f"mode {cfg.mode.value} requires text embeddings")
    present = img_embs if img_embs is not None else txt_embs
    present = np.asarray(present, dtype=float)
    if present.ndim != 2:
        raise ValidationError("embeddings must be a 2-D matrix")
    n = present.shape[0]

    def _resolve(embs, name):
        if embs is None:
            # inert placeholder for the unused modality; its slot is
            # zero-filled in the combined vector and gets no gradient
            return np.full_like(present, 1.0 / np.sqrt(present.shape[1]))
        m = np.asarray(embs, dtype=float)
        if m.ndim != 2 or m.shape[0] != n:
            raise ValidationError(f"{name}: shape {m.shape} does not align with {n} samples")
        return m

    x_img = _resolve(img_embs, "image embeddings")
    x_txt = _resolve(txt_embs, "text embeddings")
    labels = np.asarray([int(l) for l in labels], dtype=np.int64)
    if labels.shape[0] != n:
        raise ValidationError(f"{labels.shape[0]} labels vs {n} embedding rows")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(x_img.shape[1], x_txt.shape[1], cfg, rng)
    counter = ClampCounter()

    # AdamW state
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(a) for k, a in params.arrays()}
    v = {k: np.zeros_like(a) for k, a in params.arrays()}
    step = 0
    tensors = dict(params.arrays())

    log: list[dict] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = {"loss": 0.0, "contrast": 0.0, "cls": 0.0}
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            try:
                l_total, l_con, l_cls, grads = _forward_backward(
                    params, x_img[idx], x_txt[idx], labels[idx], cfg, counter
                )
            except ValidationError as exc:
                if "non-finite" in str(exc):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                    ) from exc
                raise
            if not np.isfinite(l_total):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            sums["loss"] += l_total * len(idx)
            sums["contrast"] += l_con * len(idx)
            sums["cls"] += l_cls * len(idx)
            step += 1
            for key, g in grads.items():
                m[key] = beta1 * m[key] + (1 - beta1) * g
                v[key] = beta2 * v[key] + (1 - beta2) * (g * g)
                m_hat = m[key] / (1 - beta1**step)
                v_hat = v[key] / (1 - beta2**step)
                t = tensors[key]
                t -= cfg.lr * cfg.weight_decay * t  # decoupled decay
                t -= cfg.lr * m_hat / (np.sqrt(v_hat) + eps)
        log.append(
            {
                "epoch": epoch,
                "mean_loss": sums["loss"] / n,
                "mean_contrast": sums["contrast"] / n,
                "mean_cls": sums["cls"] / n,
            }
        )
    return TrainResult(params=params, log=log, clamped_logs=counter.count)


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


def predict_proba_batch(
    params: FusionParams,
    img_embs: np.ndarray | None,
    txt_embs: np.ndarray | None,
    mode: Mode,
) -> np.ndarray:
    """Softmax head probabilities for a batch, shape (n, 3)."""
    if mode is not Mode.TEXT_ONLY:
        if img_embs is None:
            raise ValidationError(f"mode {mode.value} requires image embeddings")
        u = np.asarray(img_embs, dtype=float) @ params.w_img.T
        u_unit, _ = _unit_rows(u)
    if mode is not Mode.IMAGE_ONLY:
        if txt_embs is None:
            raise ValidationError(f"mode {mode.value} requires text embeddings")
        v = np.asarray(txt_embs, dtype=float) @ params.w_txt.T
        v_unit, _ = _unit_rows(v)
    if mode is Mode.IMAGE_ONLY:
        v_unit = np.zeros_like(u_unit)
    elif mode is Mode.TEXT_ONLY:
        u_unit = np.zeros_like(v_unit)
    z = _combine(u_unit, v_unit, mode)
    return softmax(z @ params.w_head.T + params.b_head)


def predict_proba(
    params: FusionParams,
    img_emb: np.ndarray | None,
    txt_emb: np.ndarray | None,
    mode: Mode,
) -> ProbTriple:
    img = None if img_emb is None else np.asarray(img_emb, dtype=float)[None, :]
    txt = None if txt_emb is None else np.asarray(txt_emb, dtype=float)[None, :]
    return ProbTriple.from_array(predict_proba_batch(params, img, txt, mode)[0])


def predict_labels(probs: np.ndarray) -> np.ndarray:
    """Argmax classes for a (n, 3) probability matrix, ties to lowest index."""
    return np.argmax(probs, axis=1)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


def gradient_check(
    params: FusionParams,
    x_img: np.ndarray,
    x_txt: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    h: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients,
    checked over every entry of every parameter tensor."""
    labels = np.asarray([int(l) for l in labels], dtype=np.int64)
    _, _, _, grads = _forward_backward(params, x_img, x_txt, labels, cfg)
    worst = 0.0
    work = params.copy()
    tensors = dict(work.arrays())
    for key, tensor in tensors.items():
        analytic = grads[key]
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            ij = it.multi_index
            orig = tensor[ij]
            tensor[ij] = orig + h
            lp = batch_loss(work, x_img, x_txt, labels, cfg)
            tensor[ij] = orig - h
            lm = batch_loss(work, x_img, x_txt, labels, cfg)
            tensor[ij] = orig
            numeric = (lp - lm) / (2 * h)
            denom = max(abs(analytic[ij]), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic[ij] - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def save_params(params: FusionParams, path: str | Path, cfg: TrainConfig | None = None) -> None:
    """Versioned binary (float64 LE) plus a JSON config echo alongside."""
    path = Path(path)
    d_img = params.w_img.shape[1]
    d_txt = params.w_txt.shape[1]
    with path.open("wb") as fh:
        fh.write(_PARAMS_HEADER.pack(PARAMS_MAGIC, PARAMS_VERSION, params.d_proj, d_img, d_txt))
        for _, arr in params.arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    if cfg is not None:
        echo = Path(str(path) + ".json")
        echo.write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_params(path: str | Path) -> FusionParams:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _PARAMS_HEADER.size:
        raise ValidationError(f"{path.name}: truncated header")
    magic, version, d_proj, d_img, d_txt = _PARAMS_HEADER.unpack_from(blob)
    if magic != PARAMS_MAGIC:
        raise ValidationError(f"{path.name}: bad magic {magic!r}")
    if version != PARAMS_VERSION:
        raise ValidationError(f"{path.name}: unsupported version {version}")
    shapes = [(d_proj, d_img), (d_proj, d_txt), (3, 2 * d_proj), (3,)]
    need = _PARAMS_HEADER.size + sum(int(np.prod(s)) for s in shapes) * 8
    if len(blob) != need:
        raise ValidationError(f"{path.name}: truncated payload ({len(blob)} vs {need})")
    offset = _PARAMS_HEADER.size
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", offset=offset, count=count).reshape(shape).copy()
        arrays.append(arr)
        offset += count * 8
    return FusionParams(*arrays)


def load_train_config(params_path: str | Path) -> TrainConfig | None:
    echo = Path(str(params_path) + ".json")
    if not echo.exists():
        return None
    return TrainConfig.from_dict(json.loads(echo.read_text(encoding="utf-8")))


def write_training_log(log: list[dict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for entry in log:
            fh.write(json.dumps(entry) + "\n")
