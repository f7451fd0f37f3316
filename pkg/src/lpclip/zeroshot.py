"""Zero-shot classification against text-derived class anchors.

A prompt bank holds one embedding per (class, prompt) pair. Anchors are the
per-class vectors actually matched against image embeddings: either a single
prompt column or the renormalized mean of all prompts for that class.
Teacher predictions sharpen the cosine logits with a temperature softmax
(default 0.01) and carry the argmax pseudo-label and its probability as the
per-sample confidence weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_TEMPERATURE = 0.01
_NORM_TOL = 1e-4


@dataclass
class PromptBank:
    """C x P x D unit-norm prompt embeddings, optionally with prompt texts."""

    embeddings: np.ndarray
    prompt_texts: list[str] | None = None

    def __post_init__(self) -> None:
        e = np.asarray(self.embeddings, dtype=np.float64)
        if e.ndim != 3:
            raise ValueError(f"prompt bank must be C x P x D, got shape {e.shape}")
        c, p, _ = e.shape
        if c < 2:
            raise ValueError("prompt bank needs at least 2 classes")
        if p < 1:
            raise ValueError("prompt bank needs at least 1 prompt")
        norms = np.linalg.norm(e, axis=2)
        if not np.all(np.abs(norms - 1.0) <= _NORM_TOL):
            raise ValueError("prompt embeddings must be unit-norm")
        if self.prompt_texts is not None and len(self.prompt_texts) != p:
            raise ValueError("prompt_texts length must equal P")
        self.embeddings = e

    @property
    def n_classes(self) -> int:
        return self.embeddings.shape[0]

    @property
    def n_prompts(self) -> int:
        return self.embeddings.shape[1]


@dataclass
class ClassAnchors:
    """C x D unit-norm class embeddings."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError(f"anchors must be C x D, got shape {m.shape}")
        norms = np.linalg.norm(m, axis=1)
        if not np.all(np.abs(norms - 1.0) <= _NORM_TOL):
            raise ValueError("anchor rows must be unit-norm")
        self.matrix = m

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass
class TeacherOutput:
    """Per-sample zero-shot outputs: raw logits, sharpened probabilities,
    pseudo-label and its confidence, plus the temperature used."""

    logits: np.ndarray
    probs: np.ndarray
    pseudo_label: np.ndarray
    confidence: np.ndarray
    temperature: float


def ensemble_class_embeddings(
    bank: PromptBank, mode: str = "mean", prompt_index: int = 0
) -> ClassAnchors:
    """Collapse a prompt bank into per-class anchors.

    mode "single" picks column ``prompt_index`` and renormalizes; mode "mean"
    averages each class's unit-norm prompt vectors and renormalizes. Prompts
    that cancel to (near) zero make the mean undefined.
    """
    if mode == "single":
        if not 0 <= prompt_index < bank.n_prompts:
            raise ValueError(f"prompt index {prompt_index} out of range")
        vecs = bank.embeddings[:, prompt_index, :].copy()
    elif mode == "mean":
        vecs = bank.embeddings.mean(axis=1)
    else:
        raise ValueError(f"unknown ensemble mode {mode!r}")

    norms = np.linalg.norm(vecs, axis=1)
    if np.any(norms < 1e-9):
        raise ValueError("degenerate ensemble (prompts average to zero)")
    return ClassAnchors(vecs / norms[:, None])


def compute_logits(img_embs: np.ndarray, anchors: ClassAnchors) -> np.ndarray:
    """Cosine logits: out[i, c] = <img_embs[i], anchor_c>.

    Inputs are expected unit-norm (stores carry a flag for this), which keeps
    every logit in [-1, 1].
    """
    z = np.asarray(img_embs, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"image embeddings must be N x D, got shape {z.shape}")
    if z.shape[1] != anchors.dim:
        raise ValueError(
            f"dimension mismatch: embeddings D={z.shape[1]}, anchors D={anchors.dim}"
        )
    return z @ anchors.matrix.T


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max-subtraction)."""
    x = np.asarray(logits, dtype=np.float64)
    x = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=axis, keepdims=True)


def teacher_predict(
    logits: np.ndarray, temperature: float = DEFAULT_TEMPERATURE
) -> TeacherOutput:
    """Sharpen logits into pseudo-labels and confidence weights.

    probs = softmax(logits / temperature); the pseudo-label is the argmax
    (ties resolve to the lowest class index) and the confidence is its
    probability.
    """
    ell = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if not np.all(np.isfinite(ell)):
        raise ValueError("logits must be finite")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    probs = softmax(ell / temperature, axis=1)
    pseudo = np.argmax(probs, axis=1)
    conf = probs[np.arange(len(probs)), pseudo]
    return TeacherOutput(
        logits=ell,
        probs=probs,
        pseudo_label=pseudo,
        confidence=conf,
        temperature=float(temperature),
    )


def select_best_prompt(
    bank: PromptBank,
    img_embs: np.ndarray,
    labels: np.ndarray,
    temperature: float = DEFAULT_TEMPERATURE,
) -> tuple[int, np.ndarray]:
    """Labeled-data utility: zero-shot accuracy of every single-prompt anchor
    set; returns (argmax prompt index, per-prompt accuracy table).

    Ties resolve to the lowest prompt index. Not part of the unsupervised
    training path; every label must be known.
    """
    labels = np.asarray(labels)
    if np.any(labels < 0):
        raise ValueError("selection requires labels (found -1 entries)")
    if len(labels) != len(img_embs):
        raise ValueError("labels length must match embeddings")

    table = np.zeros(bank.n_prompts, dtype=np.float64)
    for p in range(bank.n_prompts):
        anchors = ensemble_class_embeddings(bank, mode="single", prompt_index=p)
        out = teacher_predict(compute_logits(img_embs, anchors), temperature)
        table[p] = float(np.mean(out.pseudo_label == labels))
    return int(np.argmax(table)), table


__all__ = [
    "DEFAULT_TEMPERATURE",
    "ClassAnchors",
    "PromptBank",
    "TeacherOutput",
    "compute_logits",
    "ensemble_class_embeddings",
    "select_best_prompt",
    "softmax",
    "teacher_predict",
]
