"""Deterministic synthetic dataset and encoder so the whole pipeline runs at
desk scale with no external model.

Each class is a fixed sinusoid-plus-color-gradient pattern; samples jitter
the pattern geometrically (cyclic shift plus amplitude scaling) and add
pixel noise. The encoder flattens non-overlapping patches, projects them
through a fixed seeded gaussian matrix, squashes with tanh, mean-pools over
patches and L2-normalizes. tanh matters: it makes strong augmentation move
embeddings non-linearly, so the consistency mechanism is actually
exercised.

Everything is keyed off (spec.seed, stream tag, index) so any store the toy
world emits is reproducible in isolation. Anchors come from freshly drawn
samples (stream ANCHORS), never from train or test streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import AugmentRng, corrupt, make_rng, strong_augment, weak_augment
from .zeroshot import PromptBank

# stream tags, disjoint per purpose
_STREAM_CLASS = 1
_STREAM_TRAIN = 2
_STREAM_TEST = 3
_STREAM_ANCHORS = 4
_STREAM_VIEWS = 5
_STREAM_CORRUPT = 6

_ENCODER_GAIN = 8.0


@dataclass
class ToyDatasetSpec:
    n_classes: int = 10
    n_per_class: int = 200
    img_size: int = 64
    jitter: float = 0.3
    noise_sigma: float = 0.05
    seed: int = 7

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.n_per_class < 1:
            raise ValueError("need at least 1 sample per class")
        if self.img_size < 8:
            raise ValueError("img_size must be >= 8")
        if not 0 <= self.jitter <= 1:
            raise ValueError("jitter must be in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass
class ToyEncoderSpec:
    dim: int = 64
    patch: int = 8
    seed: int = 11

    def __post_init__(self) -> None:
        if self.dim < 8:
            raise ValueError("dim must be >= 8")
        if self.patch < 1:
            raise ValueError("patch must be >= 1")


def class_pattern(spec: ToyDatasetSpec, c: int) -> np.ndarray:
    """The class's base image: per-channel color offset plus sinusoid texture
    plus a linear color ramp.

    The mean color and the ramp are what survive the encoder's patch pooling
    (an odd nonlinearity averages the sinusoid out over full periods), so
    they carry the class identity; the sinusoid supplies texture that
    augmentation can disturb.
    """
    rng = make_rng(spec.seed, _STREAM_CLASS, c)
    s = spec.img_size
    mean_color = 0.5 + 0.18 * rng.uniform(-1.0, 1.0, size=3)
    fx, fy = rng.integers(1, 4, size=2)
    phases = rng.uniform(0.0, 2 * np.pi, size=3)
    grad_a = rng.uniform(-1.0, 1.0, size=3)
    grad_b = rng.uniform(-1.0, 1.0, size=3)

    ii, jj = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    wave = 2 * np.pi * (fx * ii + fy * jj) / s
    img = np.empty((s, s, 3), dtype=np.float64)
    for k in range(3):
        img[:, :, k] = (
            mean_color[k]
            + 0.18 * np.sin(wave + phases[k])
            + 0.12 * (grad_a[k] * (ii / s - 0.5) + grad_b[k] * (jj / s - 0.5))
        )
    return np.clip(img, 0.0, 1.0)


def _perturb(pattern: np.ndarray, spec: ToyDatasetSpec, rng: AugmentRng) -> np.ndarray:
    """One sample: per-channel amplitude jitter of the pattern, a cyclic
    geometric shift, then pixel noise. Draw order is fixed."""
    s = spec.img_size
    amp = 1.0 + 1.75 * spec.jitter * rng.uniform(-1.0, 1.0, size=3)
    r = round(spec.jitter * s / 4)
    dy, dx = rng.integers(-r, r + 1, size=2)
    img = 0.5 + amp * (pattern - 0.5)
    img = np.roll(img, (int(dy), int(dx)), axis=(0, 1))
    img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def _draw_samples(
    spec: ToyDatasetSpec, stream: int, c: int, count: int
) -> np.ndarray:
    pattern = class_pattern(spec, c)
    out = np.empty((count, spec.img_size, spec.img_size, 3), dtype=np.float64)
    for i in range(count):
        out[i] = _perturb(pattern, spec, make_rng(spec.seed, stream, c, i))
    return out


def gen_dataset(
    spec: ToyDatasetSpec, split: str = "train"
) -> tuple[np.ndarray, np.ndarray]:
    """Balanced images + labels, class-major order. Splits ("train", "test")
    draw from disjoint deterministic streams of the same class patterns."""
    stream = {"train": _STREAM_TRAIN, "test": _STREAM_TEST}[split]
    images = np.concatenate(
        [_draw_samples(spec, stream, c, spec.n_per_class) for c in range(spec.n_classes)]
    )
    labels = np.repeat(np.arange(spec.n_classes), spec.n_per_class)
    return images, labels


def projection_matrix(enc: ToyEncoderSpec, img_size: int) -> np.ndarray:
    if img_size % enc.patch != 0:
        raise ValueError(f"patch {enc.patch} does not divide image side {img_size}")
    in_dim = 3 * enc.patch * enc.patch
    rng = make_rng(enc.seed, 1)
    return rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, enc.dim))


def encode_images(images: np.ndarray, enc: ToyEncoderSpec) -> np.ndarray:
    """Batch encode N square images into unit-norm D-vectors.

    Pixels are centered before projection so embeddings spread over the
    sphere instead of piling up around the all-brightness direction. When
    the patch grid is at least 3x3, pooling skips the outermost ring of
    patches: border content is where crop padding and warp fill land, and a
    useful encoder should not let those dominate the representation.
    """
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    n, h, w, _ = x.shape
    if h != w:
        raise ValueError("toy encoder expects square images")
    p = enc.patch
    proj = projection_matrix(enc, h)
    g = h // p
    patches = (
        x.reshape(n, g, p, g, p, 3)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(n, g, g, 3 * p * p)
    )
    hidden = np.tanh(_ENCODER_GAIN * ((patches - 0.5) @ proj))
    if g >= 3:
        hidden = hidden[:, 1 : g - 1, 1 : g - 1]
    pooled = hidden.reshape(n, -1, enc.dim).mean(axis=1)
    norms = np.linalg.norm(pooled, axis=1, keepdims=True)
    if np.any(norms < 1e-9):
        raise ValueError("degenerate embedding (zero norm)")
    return pooled / norms


def toy_encode(img: np.ndarray, enc: ToyEncoderSpec) -> np.ndarray:
    return encode_images(img[None], enc)[0]


def build_class_prompt_bank(
    spec: ToyDatasetSpec,
    enc: ToyEncoderSpec,
    n_prompts: int,
    anchor_samples: int,
) -> PromptBank:
    """P imperfect class anchors per class, from held-out generated samples.

    Prompt p for class c averages the embeddings of ``anchor_samples`` fresh
    weakly-augmented class-c draws from anchor stream p, then renormalizes.
    Distinct streams make prompts distinct, and finite anchor_samples keeps
    the toy teacher imperfect on jittered data.
    """
    if n_prompts < 1:
        raise ValueError("need at least one prompt")
    if anchor_samples < 1:
        raise ValueError("need at least one anchor sample")
    bank = np.empty((spec.n_classes, n_prompts, enc.dim), dtype=np.float64)
    for c in range(spec.n_classes):
        for p in range(n_prompts):
            imgs = _draw_samples(spec, _STREAM_ANCHORS + p, c, anchor_samples)
            imgs = np.stack([weak_augment(im, spec.img_size) for im in imgs])
            embs = encode_images(imgs, enc)
            mean = embs.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm < 1e-9:
                raise ValueError("degenerate anchor (zero norm)")
            bank[c, p] = mean / norm
    return PromptBank(embeddings=bank)


def encode_weak(images: np.ndarray, enc: ToyEncoderSpec) -> np.ndarray:
    """Weak-view embeddings (deterministic transform, then encode)."""
    size = images.shape[1]
    weak = np.stack([weak_augment(im, size) for im in images])
    return encode_images(weak, enc)


def encode_strong_views(
    images: np.ndarray, enc: ToyEncoderSpec, n_views: int, seed: int
) -> list[np.ndarray]:
    """K independent strong-view embedding matrices of the same samples."""
    size = images.shape[1]
    out = []
    for k in range(n_views):
        augmented = np.stack(
            [
                strong_augment(im, size, make_rng(seed, _STREAM_VIEWS, k, i))
                for i, im in enumerate(images)
            ]
        )
        out.append(encode_images(augmented, enc))
    return out


def encode_corrupted(
    images: np.ndarray,
    enc: ToyEncoderSpec,
    kind: str,
    severity: int,
    seed: int,
) -> np.ndarray:
    """Corrupt, weak-transform and encode a batch of images."""
    size = images.shape[1]
    corrupted = np.stack(
        [
            weak_augment(
                corrupt(im, kind, severity, make_rng(seed, _STREAM_CORRUPT, i)), size
            )
            for i, im in enumerate(images)
        ]
    )
    return encode_images(corrupted, enc)


__all__ = [
    "ToyDatasetSpec",
    "ToyEncoderSpec",
    "build_class_prompt_bank",
    "class_pattern",
    "encode_corrupted",
    "encode_images",
    "encode_strong_views",
    "encode_weak",
    "gen_dataset",
    "projection_matrix",
    "toy_encode",
]
