"""Image-space transforms: the deterministic weak (teacher) transform, the
stochastic strong (student) stack, and severity-graded corruptions.

Images are H x W x 3 float arrays in [0, 1]. Everything here is pure given
an explicit generator; per-image streams should be derived with
``make_rng(seed, image_index)`` so work can be sharded without changing
results. Resampling is bilinear; geometric ops fill uncovered pixels with
zeros.

The strong stack, in order: short-side resize + center crop to out_size,
random crop from a 4-pixel zero-padded frame, horizontal flip (p = 0.5),
two ops drawn from an 8-op table at fixed magnitude 9/30 with random sign,
and a single zeroed square patch of side out_size // 8 centered uniformly
over the image.
"""

from __future__ import annotations

import numpy as np

AugmentRng = np.random.Generator

RANDAUGMENT_MAGNITUDE = 9 / 30
RANDAUGMENT_OPS = (
    "identity",
    "brightness",
    "contrast",
    "rotate",
    "shear_x",
    "shear_y",
    "translate_x",
    "translate_y",
)

# severity 1..5 parameter tables (desk-scale analogs for 32-64 px images)
CORRUPTIONS: dict[str, list[float]] = {
    "gaussian_noise": [0.04, 0.06, 0.08, 0.09, 0.10],
    "shot_noise": [500, 250, 100, 75, 50],
    "impulse_noise": [0.01, 0.02, 0.03, 0.05, 0.07],
    "gaussian_blur": [0.5, 0.75, 1.0, 1.25, 1.5],
    "brightness": [0.05, 0.10, 0.15, 0.20, 0.30],
    "contrast": [0.75, 0.6, 0.45, 0.3, 0.2],
    "pixelate": [2, 3, 4, 5, 6],
}
NOISE_KINDS = ("gaussian_noise", "shot_noise", "impulse_noise")


def make_rng(seed: int, *tags: int) -> AugmentRng:
    """Deterministic counter-based stream for (seed, tags)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *tags])))


def _check_image(img: np.ndarray) -> np.ndarray:
    x = np.asarray(img, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ValueError(f"image must be H x W x 3, got shape {x.shape}")
    if x.shape[0] < 8 or x.shape[1] < 8:
        raise ValueError("image sides must be >= 8")
    return x


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-center bilinear resize with edge clamping."""
    h, w = img.shape[:2]
    if (out_h, out_w) == (h, w):
        return img.copy()

    def grid(out_n: int, in_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        src = (np.arange(out_n) + 0.5) * (in_n / out_n) - 0.5
        src = np.clip(src, 0, in_n - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, in_n - 1)
        return lo, hi, src - lo

    y0, y1, fy = grid(out_h, h)
    x0, x1, fx = grid(out_w, w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def center_crop(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[:2]
    if h < size or w < size:
        raise ValueError(f"cannot crop {size} from {h}x{w}")
    y0 = (h - size) // 2
    x0 = (w - size) // 2
    return img[y0 : y0 + size, x0 : x0 + size]


def _resize_short_side(img: np.ndarray, out_size: int) -> np.ndarray:
    h, w = img.shape[:2]
    if h <= w:
        return resize_bilinear(img, out_size, max(out_size, round(w * out_size / h)))
    return resize_bilinear(img, max(out_size, round(h * out_size / w)), out_size)


def weak_augment(img: np.ndarray, out_size: int) -> np.ndarray:
    """Deterministic teacher transform: short-side resize then center crop."""
    x = _check_image(img)
    if out_size < 8:
        raise ValueError("out_size must be >= 8")
    return center_crop(_resize_short_side(x, out_size), out_size)


def warp_affine(img: np.ndarray, inv: np.ndarray) -> np.ndarray:
    """Bilinear warp; ``inv`` maps output (x, y, 1) to input (x, y).

    Coordinates are measured from the image center. Samples falling outside
    the input are zero.
    """
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    src_x = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2] + cx
    src_y = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2] + cy

    x0 = np.floor(src_x).astype(int)
    y0 = np.floor(src_y).astype(int)
    fx = (src_x - x0)[..., None]
    fy = (src_y - y0)[..., None]

    def sample(yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return vals * inside[..., None]

    out = (
        sample(y0, x0) * (1 - fx) * (1 - fy)
        + sample(y0, x0 + 1) * fx * (1 - fy)
        + sample(y0 + 1, x0) * (1 - fx) * fy
        + sample(y0 + 1, x0 + 1) * fx * fy
    )
    return out


def _rand_sign(rng: AugmentRng) -> float:
    return 1.0 if rng.random() < 0.5 else -1.0


def _apply_randaugment_op(img: np.ndarray, op: str, rng: AugmentRng) -> np.ndarray:
    m = RANDAUGMENT_MAGNITUDE
    size = img.shape[0]
    if op == "identity":
        return img
    if op == "brightness":
        return np.clip(img * (1.0 + _rand_sign(rng) * 0.9 * m), 0.0, 1.0)
    if op == "contrast":
        mean = img.mean()
        return np.clip((img - mean) * (1.0 + _rand_sign(rng) * 0.9 * m) + mean, 0.0, 1.0)
    if op == "rotate":
        theta = np.deg2rad(_rand_sign(rng) * 30.0 * m)
        c, s = np.cos(theta), np.sin(theta)
        inv = np.array([[c, s, 0.0], [-s, c, 0.0]])
        return warp_affine(img, inv)
    if op == "shear_x":
        inv = np.array([[1.0, -_rand_sign(rng) * 0.3 * m, 0.0], [0.0, 1.0, 0.0]])
        return warp_affine(img, inv)
    if op == "shear_y":
        inv = np.array([[1.0, 0.0, 0.0], [-_rand_sign(rng) * 0.3 * m, 1.0, 0.0]])
        return warp_affine(img, inv)
    if op == "translate_x":
        inv = np.array([[1.0, 0.0, -_rand_sign(rng) * 0.33 * m * size], [0.0, 1.0, 0.0]])
        return warp_affine(img, inv)
    if op == "translate_y":
        inv = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -_rand_sign(rng) * 0.33 * m * size]])
        return warp_affine(img, inv)
    raise ValueError(f"unknown op {op!r}")


def cutout(img: np.ndarray, side: int, cy: int, cx: int) -> np.ndarray:
    """Zero one square patch of the given side centered at (cy, cx), clipped
    at the borders."""
    out = img.copy()
    y0 = max(0, cy - side // 2)
    x0 = max(0, cx - side // 2)
    out[y0 : min(img.shape[0], y0 + side), x0 : min(img.shape[1], x0 + side)] = 0.0
    return out


def strong_augment(img: np.ndarray, out_size: int, rng: AugmentRng) -> np.ndarray:
    """Student transform; draw order is fixed (crop, flip, 2 ops, cutout) so a
    seed fully determines the output."""
    x = weak_augment(img, out_size)

    pad = 4
    padded = np.zeros((out_size + 2 * pad, out_size + 2 * pad, 3), dtype=x.dtype)
    padded[pad : pad + out_size, pad : pad + out_size] = x
    dy, dx = rng.integers(0, 2 * pad + 1, size=2)
    x = padded[dy : dy + out_size, dx : dx + out_size]

    if rng.random() < 0.5:
        x = x[:, ::-1]

    for _ in range(2):
        op = RANDAUGMENT_OPS[rng.integers(0, len(RANDAUGMENT_OPS))]
        x = _apply_randaugment_op(x, op, rng)

    cy, cx = rng.integers(0, out_size, size=2)
    x = cutout(x, out_size // 8, int(cy), int(cx))
    return np.clip(x, 0.0, 1.0)


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    radius = max(1, int(np.ceil(3 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(t * t) / (2 * sigma * sigma))
    kernel /= kernel.sum()

    padded = np.pad(img, ((radius, radius), (0, 0), (0, 0)), mode="reflect")
    out = np.zeros_like(img)
    for i, kv in enumerate(kernel):
        out += kv * padded[i : i + img.shape[0]]
    padded = np.pad(out, ((0, 0), (radius, radius), (0, 0)), mode="reflect")
    out = np.zeros_like(img)
    for i, kv in enumerate(kernel):
        out += kv * padded[:, i : i + img.shape[1]]
    return out


def _pixelate(img: np.ndarray, block: int) -> np.ndarray:
    h, w = img.shape[:2]
    out = img.copy()
    for y0 in range(0, h, block):
        for x0 in range(0, w, block):
            patch = img[y0 : y0 + block, x0 : x0 + block]
            out[y0 : y0 + block, x0 : x0 + block] = patch.mean(axis=(0, 1))
    return out


def corrupt(img: np.ndarray, kind: str, severity: int, rng: AugmentRng) -> np.ndarray:
    """Apply one corruption at severity 1..5; output clamped to [0, 1]."""
    x = _check_image(img)
    if kind not in CORRUPTIONS:
        raise ValueError(f"unknown corruption kind {kind!r}")
    if not 1 <= severity <= 5:
        raise ValueError(f"severity must be 1..5, got {severity}")
    p = CORRUPTIONS[kind][severity - 1]

    if kind == "gaussian_noise":
        x = x + rng.normal(0.0, p, size=x.shape)
    elif kind == "shot_noise":
        x = rng.poisson(x * p) / p
    elif kind == "impulse_noise":
        hit = rng.random(x.shape[:2]) < p
        salt = rng.random(x.shape[:2]) < 0.5
        x = x.copy()
        x[hit & salt] = 1.0
        x[hit & ~salt] = 0.0
    elif kind == "gaussian_blur":
        x = _gaussian_blur(x, p)
    elif kind == "brightness":
        x = x + p
    elif kind == "contrast":
        x = (x - x.mean()) * p + x.mean()
    elif kind == "pixelate":
        x = _pixelate(x, int(p))
    return np.clip(x, 0.0, 1.0)


def parse_corruption(spec_str: str) -> tuple[str, int]:
    """Parse a "kind:severity" selector."""
    kind, _, sev = spec_str.partition(":")
    if kind not in CORRUPTIONS:
        raise ValueError(f"unknown corruption kind {kind!r}")
    if not sev.isdigit() or not 1 <= int(sev) <= 5:
        raise ValueError(f"severity must be 1..5 in {spec_str!r}")
    return kind, int(sev)


__all__ = [
    "CORRUPTIONS",
    "NOISE_KINDS",
    "RANDAUGMENT_MAGNITUDE",
    "RANDAUGMENT_OPS",
    "AugmentRng",
    "center_crop",
    "corrupt",
    "cutout",
    "make_rng",
    "parse_corruption",
    "resize_bilinear",
    "strong_augment",
    "warp_affine",
    "weak_augment",
]
