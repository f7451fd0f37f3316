"""Evaluation quantities: accuracy, calibration (ECE, reliability bins,
confidence histograms), OOD separation (AUROC, AUPR, FPR95) and a PCA
projection of the latent space.

Conventions fixed here so every number is oracle-checkable:

* ECE bins are equal-width on [0, 1], right-inclusive: bin m covers
  ((m-1)/B, m/B], with 0.0 counted into the first bin. Default 15 bins.
* For OOD metrics the in-distribution samples are the positive class and
  the score is the model's confidence (max softmax probability). AUROC is
  the Mann-Whitney statistic with ties at half weight. AUPR sweeps the
  distinct scores descending and holds precision between recall points.
  FPR95 uses the largest threshold that still admits >= 95% of the ID
  scores, with no interpolation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_NUM_BINS = 15


@dataclass
class CalibrationBin:
    lower: float
    upper: float
    mean_confidence: float
    accuracy: float
    count: int


@dataclass
class CalibrationReport:
    bins: list[CalibrationBin]
    ece: float
    hist_correct: list[int]
    hist_incorrect: list[int]
    hist_ood: list[int]
    n_samples: int

    def to_json(self) -> str:
        doc = {
            "ece": self.ece,
            "n_samples": self.n_samples,
            "bins": [vars(b) for b in self.bins],
            "hist_correct": self.hist_correct,
            "hist_incorrect": self.hist_incorrect,
            "hist_ood": self.hist_ood,
        }
        return json.dumps(doc, indent=2) + "\n"

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin_lower", "bin_upper", "mean_conf", "accuracy", "count"])
            for b in self.bins:
                w.writerow(
                    [repr(b.lower), repr(b.upper), repr(b.mean_confidence),
                     repr(b.accuracy), b.count]
                )


@dataclass
class OodReport:
    auroc: float
    aupr: float
    fpr95: float
    roc_points: list[tuple[float, float]] = field(default_factory=list)
    pr_points: list[tuple[float, float]] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "auroc": self.auroc,
            "aupr": self.aupr,
            "fpr95": self.fpr95,
            "roc_points": self.roc_points,
            "pr_points": self.pr_points,
        }
        return json.dumps(doc, indent=2) + "\n"


def accuracy(pred: np.ndarray, labels: np.ndarray) -> float:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.shape != labels.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {labels.shape}")
    if len(pred) == 0:
        raise ValueError("empty prediction array")
    return float(np.mean(pred == labels))


def bin_index(confidence: np.ndarray, num_bins: int) -> np.ndarray:
    """Right-inclusive equal-width bin index: ceil(c*B) - 1, with 0 -> bin 0."""
    idx = np.ceil(np.asarray(confidence, dtype=np.float64) * num_bins).astype(int) - 1
    return np.clip(idx, 0, num_bins - 1)


def calibration_report(
    confidence: np.ndarray,
    correct: np.ndarray,
    ood_confidence: np.ndarray | None = None,
    num_bins: int = DEFAULT_NUM_BINS,
) -> CalibrationReport:
    """Bin confidences, compute ECE and the per-population histograms.

    ECE = sum over non-empty bins of (count/N) * |bin accuracy - bin mean
    confidence|. The ood histogram is empty unless OOD confidences are given.
    """
    conf = np.asarray(confidence, dtype=np.float64)
    corr = np.asarray(correct, dtype=bool)
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    if conf.shape != corr.shape:
        raise ValueError("confidence and correctness lengths differ")
    if np.any((conf < 0) | (conf > 1)):
        raise ValueError("confidence out of range [0, 1]")
    n = len(conf)

    idx = bin_index(conf, num_bins)
    bins: list[CalibrationBin] = []
    hist_correct = [0] * num_bins
    hist_incorrect = [0] * num_bins
    ece = 0.0
    for b in range(num_bins):
        mask = idx == b
        count = int(mask.sum())
        lower, upper = b / num_bins, (b + 1) / num_bins
        if count:
            mean_conf = float(conf[mask].mean())
            acc = float(corr[mask].mean())
            ece += (count / n) * abs(acc - mean_conf)
            hist_correct[b] = int((mask & corr).sum())
            hist_incorrect[b] = int((mask & ~corr).sum())
        else:
            mean_conf, acc = 0.0, 0.0
        bins.append(CalibrationBin(lower, upper, mean_conf, acc, count))

    hist_ood = [0] * num_bins
    if ood_confidence is not None and len(ood_confidence) > 0:
        oconf = np.asarray(ood_confidence, dtype=np.float64)
        if np.any((oconf < 0) | (oconf > 1)):
            raise ValueError("ood confidence out of range [0, 1]")
        oidx = bin_index(oconf, num_bins)
        for b in range(num_bins):
            hist_ood[b] = int((oidx == b).sum())

    return CalibrationReport(
        bins=bins,
        ece=float(ece),
        hist_correct=hist_correct,
        hist_incorrect=hist_incorrect,
        hist_ood=hist_ood,
        n_samples=n,
    )


def _check_scores(id_scores: np.ndarray, ood_scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(id_scores, dtype=np.float64).ravel()
    b = np.asarray(ood_scores, dtype=np.float64).ravel()
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty score array")
    return a, b


def auroc(id_scores: np.ndarray, ood_scores: np.ndarray) -> float:
    """P(random ID score > random OOD score) with ties counted 1/2.

    Computed via average ranks of the pooled scores (exact, no curve
    integration).
    """
    a, b = _check_scores(id_scores, ood_scores)
    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled), dtype=np.float64)
    ranks[order] = np.arange(1, len(pooled) + 1)
    # average ranks over tie groups
    sorted_vals = pooled[order]
    i = 0
    while i < len(sorted_vals):
        j = i
        while j + 1 < len(sorted_vals) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    u = ranks[: len(a)].sum() - len(a) * (len(a) + 1) / 2
    return float(u / (len(a) * len(b)))


def roc_points(id_scores: np.ndarray, ood_scores: np.ndarray) -> list[tuple[float, float]]:
    """(FPR, TPR) at every distinct threshold, descending, from (0,0) to (1,1)."""
    a, b = _check_scores(id_scores, ood_scores)
    thresholds = np.unique(np.concatenate([a, b]))[::-1]
    pts = [(0.0, 0.0)]
    for t in thresholds:
        tpr = float(np.mean(a >= t))
        fpr = float(np.mean(b >= t))
        pts.append((fpr, tpr))
    if pts[-1] != (1.0, 1.0):
        pts.append((1.0, 1.0))
    return pts


def pr_points(id_scores: np.ndarray, ood_scores: np.ndarray) -> list[tuple[float, float]]:
    """(recall, precision) at every distinct threshold, descending."""
    a, b = _check_scores(id_scores, ood_scores)
    thresholds = np.unique(np.concatenate([a, b]))[::-1]
    pts = []
    for t in thresholds:
        tp = int(np.sum(a >= t))
        fp = int(np.sum(b >= t))
        recall = tp / len(a)
        precision = tp / (tp + fp) if tp + fp > 0 else 1.0
        pts.append((recall, precision))
    return pts


def aupr(id_scores: np.ndarray, ood_scores: np.ndarray) -> float:
    """Area under precision-recall with ID positive: sum of dRecall * precision
    at each threshold of the descending distinct-score sweep."""
    pts = pr_points(id_scores, ood_scores)
    area = 0.0
    prev_recall = 0.0
    for recall, precision in pts:
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return float(area)


def fpr_at_95_tpr(id_scores: np.ndarray, ood_scores: np.ndarray) -> float:
    """OOD acceptance rate at the largest threshold keeping >= 95% of ID."""
    a, b = _check_scores(id_scores, ood_scores)
    k = int(np.ceil(0.95 * len(a)))
    threshold = np.sort(a)[::-1][k - 1]
    return float(np.mean(b >= threshold))


def ood_report(id_scores: np.ndarray, ood_scores: np.ndarray) -> OodReport:
    return OodReport(
        auroc=auroc(id_scores, ood_scores),
        aupr=aupr(id_scores, ood_scores),
        fpr95=fpr_at_95_tpr(id_scores, ood_scores),
        roc_points=roc_points(id_scores, ood_scores),
        pr_points=pr_points(id_scores, ood_scores),
    )


def pca_project(embeddings: np.ndarray, k: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Project onto the top-k principal components.

    Returns (N x k coordinates, explained-variance ratios). Components are
    sign-fixed so their first nonzero coordinate is positive. Computed by
    SVD of the centered data; callers wanting an independent cross-check can
    eigendecompose the covariance.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("embeddings must be N x D")
    if k not in (2, 3):
        raise ValueError("k must be 2 or 3")
    n = len(x)
    if n <= k:
        raise ValueError(f"need more than {k} points, got {n}")
    centered = x - x.mean(axis=0)
    if not np.any(np.abs(centered) > 1e-12):
        raise ValueError("zero variance (all points identical)")

    _u, s, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:k]
    for i in range(k):
        nz = np.nonzero(np.abs(components[i]) > 1e-12)[0]
        if len(nz) and components[i, nz[0]] < 0:
            components[i] = -components[i]
    coords = centered @ components.T
    total_var = float(np.sum(s * s))
    ratios = (s[:k] * s[:k]) / total_var
    return coords, ratios


__all__ = [
    "DEFAULT_NUM_BINS",
    "CalibrationBin",
    "CalibrationReport",
    "OodReport",
    "accuracy",
    "aupr",
    "auroc",
    "bin_index",
    "calibration_report",
    "fpr_at_95_tpr",
    "ood_report",
    "pca_project",
    "pr_points",
    "roc_points",
]
