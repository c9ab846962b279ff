"""Saliency evaluation: PR curves, mean absolute error, maximum F-measure.

Aggregation is macro: precision and recall are computed per image at each
threshold, then averaged across the dataset.  That convention is stamped
into every written report because the alternative (pooling pixels across
images) yields different numbers on unbalanced datasets.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_THRESHOLDS = 256
DEFAULT_BETA_SQ = 0.3
AGGREGATION_NOTE = "per-image precision/recall averaged across images (macro)"


@dataclass
class MetricsReport:
    """PR curve samples plus scalar summaries for one prediction set."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    mae: float
    max_f: float


def _validate_pairs(predictions, truths):
    if len(predictions) != len(truths):
        raise ValueError(f"{len(predictions)} predictions vs "
                         f"{len(truths)} truths")
    if not predictions:
        raise ValueError("no prediction/truth pairs given")
    pairs = []
    for idx, (pred, truth) in enumerate(zip(predictions, truths)):
        p = np.asarray(pred, dtype=np.float64)
        y = np.asarray(truth)
        if p.shape != y.shape:
            raise ValueError(
                f"pair {idx}: prediction {p.shape} vs truth {y.shape}")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError(f"pair {idx}: prediction outside [0,1]")
        uniq = np.unique(y)
        if not np.all(np.isin(uniq, (0, 1))):
            raise ValueError(f"pair {idx}: truth mask is not binary")
        pairs.append((p, y.astype(bool)))
    return pairs


def pr_curve(predictions, truths,
             n_thresholds: int = DEFAULT_THRESHOLDS):
    """Precision and recall swept over evenly spaced thresholds in [0,1].

    At each threshold a prediction pixel counts as positive when its value
    is >= the threshold.  Images whose truth mask has no positive pixel are
    excluded with a warning (recall is undefined there); an image with no
    predicted positives scores precision 1 by convention.
    """
    pairs = _validate_pairs(predictions, truths)
    thresholds = np.linspace(0.0, 1.0, n_thresholds)
    kept_p, kept_r = [], []
    for idx, (pred, truth) in enumerate(pairs):
        n_pos = int(truth.sum())
        if n_pos == 0:
            warnings.warn(f"truth mask {idx} has no positive pixels; "
                          "excluded from the PR curve")
            continue
        flat = pred.ravel()
        mask = truth.ravel()
        predicted = flat[None, :] >= thresholds[:, None]     # [n, H*W]
        tp = (predicted & mask[None, :]).sum(axis=1).astype(np.float64)
        pp = predicted.sum(axis=1).astype(np.float64)
        precision = np.where(pp > 0, tp / np.maximum(pp, 1.0), 1.0)
        recall = tp / n_pos
        kept_p.append(precision)
        kept_r.append(recall)
    if not kept_p:
        raise ValueError("every truth mask was empty; nothing to evaluate")
    return np.mean(kept_p, axis=0), np.mean(kept_r, axis=0)


def mae(predictions, truths) -> float:
    """Mean over images of the per-pixel mean absolute error."""
    pairs = _validate_pairs(predictions, truths)
    return float(np.mean([np.abs(p - y).mean() for p, y in pairs]))


def max_f_measure(precision: np.ndarray, recall: np.ndarray,
                  beta_sq: float = DEFAULT_BETA_SQ) -> float:
    """Largest F-measure along a PR curve, with 0/0 defined as 0."""
    p = np.asarray(precision, dtype=np.float64)
    r = np.asarray(recall, dtype=np.float64)
    if p.shape != r.shape:
        raise ValueError("precision and recall must have the same length")
    denom = beta_sq * p + r
    f = np.where(denom > 0, (1.0 + beta_sq) * p * r / np.maximum(denom, 1e-300), 0.0)
    return float(f.max())


def compute_report(predictions, truths,
                   n_thresholds: int = DEFAULT_THRESHOLDS,
                   beta_sq: float = DEFAULT_BETA_SQ) -> MetricsReport:
    """Full evaluation of a prediction set against binary truths."""
    precision, recall = pr_curve(predictions, truths, n_thresholds)
    return MetricsReport(
        thresholds=np.linspace(0.0, 1.0, n_thresholds),
        precision=precision,
        recall=recall,
        mae=mae(predictions, truths),
        max_f=max_f_measure(precision, recall, beta_sq),
    )


def _svg_pr_plot(precision: np.ndarray, recall: np.ndarray) -> str:
    size, margin = 320, 40
    span = size - 2 * margin

    def sx(r):
        return margin + r * span

    def sy(p):
        return size - margin - p * span

    points = " ".join(f"{sx(r):.1f},{sy(p):.1f}"
                      for p, r in zip(precision, recall))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
        f'height="{size}" viewBox="0 0 {size} {size}">'
        f'<rect width="{size}" height="{size}" fill="white"/>'
        f'<line x1="{margin}" y1="{size - margin}" x2="{size - margin}" '
        f'y2="{size - margin}" stroke="black"/>'
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{size - margin}" stroke="black"/>'
        f'<text x="{size // 2}" y="{size - 8}" font-size="12" '
        f'text-anchor="middle">recall</text>'
        f'<text x="12" y="{size // 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 12 {size // 2})">precision</text>'
        f'<polyline points="{points}" fill="none" stroke="#1f6fb2" '
        f'stroke-width="1.5"/>'
        f'</svg>'
    )


def save_report(report: MetricsReport, path_prefix: str,
                svg: bool = False) -> None:
    """Write `<prefix>_pr.csv` and `<prefix>_summary.json`; optionally an
    SVG plot of the PR curve."""
    with open(f"{path_prefix}_pr.csv", "w") as fh:
        fh.write(f"# aggregation: {AGGREGATION_NOTE}\n")
        fh.write("threshold,precision,recall\n")
        for t, p, r in zip(report.thresholds, report.precision, report.recall):
            fh.write(f"{t:.8f},{p:.8f},{r:.8f}\n")
    with open(f"{path_prefix}_summary.json", "w") as fh:
        json.dump({"mae": report.mae, "max_f": report.max_f,
                   "aggregation": AGGREGATION_NOTE}, fh, indent=2)
    if svg:
        with open(f"{path_prefix}_pr.svg", "w") as fh:
            fh.write(_svg_pr_plot(report.precision, report.recall))
