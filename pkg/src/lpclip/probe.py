"""Linear probe trained with a confidence-weighted consistency loss.

The teacher (zero-shot anchors over the weak view) is frozen, so its
pseudo-labels and confidence weights are computed once up front. Each
training step then samples a batch, looks up one strong view per sample,
and takes a single SGD-with-momentum step on the mean weighted
cross-entropy, with the learning rate on a cosine schedule and the global
gradient norm clipped.

Per sample, with student logits l, pseudo-label y and weight w:

    loss = -w * logsoftmax(l)[y]
    dloss/dl = w * (softmax(l) - onehot(y))

so w = 0 annihilates the sample exactly. The whole loop is bitwise
deterministic given (config, view group, anchors): batches come from a
counter-based Philox stream seeded by config.seed and the arithmetic is
plain float64 numpy.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .tensorio import Manifest, ViewGroup, read_store, write_store
from .zeroshot import ClassAnchors, DEFAULT_TEMPERATURE, softmax, teacher_predict


@dataclass
class ProbeParams:
    """Weights W (C x D) and bias b (C) of the linear head."""

    weights: np.ndarray
    bias: np.ndarray

    def copy(self) -> "ProbeParams":
        return ProbeParams(self.weights.copy(), self.bias.copy())

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class OptimizerState:
    velocity_w: np.ndarray
    velocity_b: np.ndarray
    step: int = 0


@dataclass
class TrainConfig:
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    total_steps: int = 2000
    batch_size: int = 64
    clip_norm: float = 1.0
    temperature: float = DEFAULT_TEMPERATURE
    seed: int = 42
    strong_view_policy: str = "uniform_random"

    def __post_init__(self) -> None:
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.strong_view_policy not in ("cycle", "uniform_random"):
            raise ValueError(f"unknown strong_view_policy {self.strong_view_policy!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text))


@dataclass
class TrainHistory:
    steps: list[int] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "lr", "loss"])
            for s, lr, loss in zip(self.steps, self.lrs, self.losses):
                w.writerow([s, repr(lr), repr(loss)])


def init_probe(dim: int, n_classes: int) -> ProbeParams:
    """Zero-initialized probe. The unit-weight objective is convex, so the
    optimum does not depend on the init; zeros keep it seed-free."""
    if dim < 1 or n_classes < 1:
        raise ValueError("dim and n_classes must be >= 1")
    return ProbeParams(
        weights=np.zeros((n_classes, dim), dtype=np.float64),
        bias=np.zeros(n_classes, dtype=np.float64),
    )


def consistency_loss(
    student_logits: np.ndarray, pseudo_label: int, weight: float
) -> tuple[float, np.ndarray]:
    """Weighted cross-entropy of one sample against its pseudo-label.

    Returns (loss, gradient w.r.t. the logits). Uses a stable log-sum-exp.
    """
    ell = np.asarray(student_logits, dtype=np.float64)
    if ell.ndim != 1:
        raise ValueError("student logits must be a single row")
    m = ell.max()
    lse = m + np.log(np.exp(ell - m).sum())
    loss = -weight * (ell[pseudo_label] - lse)
    grad = weight * softmax(ell)
    grad[pseudo_label] -= weight
    return float(loss), grad


def consistency_loss_batch(
    student_logits: np.ndarray, pseudo_labels: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized per-sample losses and logit gradients (no reduction)."""
    ell = np.asarray(student_logits, dtype=np.float64)
    n = len(ell)
    rows = np.arange(n)
    m = ell.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(ell - m).sum(axis=1))
    losses = -weights * (ell[rows, pseudo_labels] - lse)
    grads = weights[:, None] * softmax(ell, axis=1)
    grads[rows, pseudo_labels] -= weights
    return losses, grads


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Cosine decay from lr0 at step 0 to exactly 0 at step total_steps."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr0 * 0.5 * (1.0 + np.cos(np.pi * step / total_steps))


def clip_global_norm(
    grad_w: np.ndarray, grad_b: np.ndarray, clip_norm: float
) -> tuple[np.ndarray, np.ndarray, float]:
    """Scale both gradients by clip_norm/g when their joint norm g exceeds it."""
    g = float(np.sqrt(np.sum(grad_w * grad_w) + np.sum(grad_b * grad_b)))
    if g > clip_norm:
        scale = clip_norm / g
        return grad_w * scale, grad_b * scale, g
    return grad_w, grad_b, g


def sgd_step_with_clip(
    params: ProbeParams,
    grad_w: np.ndarray,
    grad_b: np.ndarray,
    state: OptimizerState,
    lr: float,
    config: TrainConfig,
) -> None:
    """One in-place update: clip to global norm, then v <- m*v + g, p <- p - lr*v.

    Velocity form, no dampening, no Nesterov. Weight decay (when nonzero) is
    added to the raw gradient before clipping.
    """
    if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
        raise FloatingPointError("diverged (non-finite gradient)")
    if config.weight_decay > 0:
        grad_w = grad_w + config.weight_decay * params.weights
        grad_b = grad_b + config.weight_decay * params.bias
    grad_w, grad_b, _ = clip_global_norm(grad_w, grad_b, config.clip_norm)
    state.velocity_w = config.momentum * state.velocity_w + grad_w
    state.velocity_b = config.momentum * state.velocity_b + grad_b
    params.weights = params.weights - lr * state.velocity_w
    params.bias = params.bias - lr * state.velocity_b
    state.step += 1


def probe_logits(params: ProbeParams, embeddings: np.ndarray) -> np.ndarray:
    z = np.asarray(embeddings, dtype=np.float64)
    if z.shape[1] != params.dim:
        raise ValueError(
            f"dimension mismatch: embeddings D={z.shape[1]}, probe D={params.dim}"
        )
    return z @ params.weights.T + params.bias


def train_probe(
    group: ViewGroup,
    anchors: ClassAnchors,
    config: TrainConfig,
    unit_weights: bool = False,
    weight_override: np.ndarray | None = None,
) -> tuple[ProbeParams, TrainHistory]:
    """Distill the frozen zero-shot teacher into a linear probe.

    The teacher scores the weak view once; every step draws batch_size
    sample indices with replacement, picks one strong view per sample
    (uniform at random, or all samples on view step % K under the "cycle"
    policy), and applies one clipped SGD step on the batch-mean loss at the
    cosine learning rate. K = 0 trains the student on the weak view itself
    (the no-augmentation ablation); unit_weights=True forces every
    confidence weight to 1 (the no-weighting ablation). weight_override
    replaces the teacher confidences outright, e.g. to study degenerate
    weightings.
    """
    weak = np.asarray(group.weak, dtype=np.float64)
    n, dim = weak.shape
    if n == 0:
        raise ValueError("empty dataset")
    if dim != anchors.dim:
        raise ValueError(
            f"dimension mismatch: stores D={dim}, anchors D={anchors.dim}"
        )
    n_classes = anchors.n_classes

    teacher = teacher_predict(
        weak @ anchors.matrix.T, temperature=config.temperature
    )
    pseudo = teacher.pseudo_label
    if weight_override is not None:
        weights = np.asarray(weight_override, dtype=np.float64)
        if weights.shape != (n,):
            raise ValueError("weight_override must have one entry per sample")
    elif unit_weights:
        weights = np.ones(n, dtype=np.float64)
    else:
        weights = teacher.confidence

    k = group.n_views
    views = (
        np.stack([np.asarray(s, dtype=np.float64) for s in group.strong])
        if k > 0
        else weak[None, :, :]
    )

    params = init_probe(dim, n_classes)
    state = OptimizerState(
        velocity_w=np.zeros_like(params.weights),
        velocity_b=np.zeros_like(params.bias),
    )
    rng = np.random.Generator(np.random.Philox(config.seed))
    history = TrainHistory()

    for step in range(config.total_steps):
        idx = rng.integers(0, n, size=config.batch_size)
        if k > 1 and config.strong_view_policy == "uniform_random":
            view_idx = rng.integers(0, k, size=config.batch_size)
        elif k > 1:
            view_idx = np.full(config.batch_size, step % k)
        else:
            view_idx = np.zeros(config.batch_size, dtype=np.int64)
        z = views[view_idx, idx]

        logits = z @ params.weights.T + params.bias
        losses, grad_logits = consistency_loss_batch(logits, pseudo[idx], weights[idx])
        grad_logits /= config.batch_size
        grad_w = grad_logits.T @ z
        grad_b = grad_logits.sum(axis=0)

        lr = cosine_lr(step, config.total_steps, config.lr0)
        sgd_step_with_clip(params, grad_w, grad_b, state, lr, config)

        history.steps.append(step)
        history.lrs.append(float(lr))
        history.losses.append(float(losses.mean()))

    return params, history


def predict_probe(
    params: ProbeParams, embeddings: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Student predictions: plain softmax over probe logits, no temperature.

    Returns (labels, probs, confidence); argmax ties resolve to the lowest
    class index.
    """
    probs = softmax(probe_logits(params, embeddings), axis=1)
    labels = np.argmax(probs, axis=1)
    confidence = probs[np.arange(len(probs)), labels]
    return labels, probs, confidence


def save_probe(params: ProbeParams, path: str | Path, source: str = "") -> None:
    """Checkpoint as a 1 x (C*D + C) store: [W row-major, then b]."""
    flat = np.concatenate([params.weights.ravel(), params.bias])[None, :]
    manifest = Manifest(
        source=source,
        probe={"C": params.n_classes, "D": params.dim, "bias": True},
    )
    write_store(flat, manifest, path)


def load_probe(path: str | Path) -> ProbeParams:
    flat, manifest = read_store(path)
    if manifest.probe is None:
        raise ValueError(f"{path} is not a probe checkpoint (no probe manifest)")
    c, d = int(manifest.probe["C"]), int(manifest.probe["D"])
    if flat.shape != (1, c * d + c):
        raise ValueError(
            f"checkpoint shape {flat.shape} does not match probe C={c}, D={d}"
        )
    row = flat[0].astype(np.float64)
    return ProbeParams(weights=row[: c * d].reshape(c, d), bias=row[c * d :])


__all__ = [
    "OptimizerState",
    "ProbeParams",
    "TrainConfig",
    "TrainHistory",
    "clip_global_norm",
    "consistency_loss",
    "consistency_loss_batch",
    "cosine_lr",
    "init_probe",
    "load_probe",
    "predict_probe",
    "probe_logits",
    "save_probe",
    "sgd_step_with_clip",
    "train_probe",
]
