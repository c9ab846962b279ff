"""Training objectives coupling the three networks.

Two supervised localization losses tie each attention map to its task head:
classification images pay a per-class Bernoulli likelihood, captioned images a
teacher-forced word likelihood, and both add a map-suppression regularizer
-beta * sum log(1 - s) that pushes regions toward background unless the task
needs them. The attention transfer loss lets whichever network owns the label
teach the other's map through thresholded index sets; the attention coherence
loss ties both maps to superpixel-ranking targets on unlabelled images. SNet
trains against fused pseudo labels with a bootstrapped cross-entropy.

Conventions: likelihood, regularizer and coherence terms are sums within an
image, averaged over the batch; the transfer term is a mean over the region
grid, averaged over the batch; the bootstrapping loss is a mean over pixels.
The coherence region sum matters: it is what lets the unlabelled-image pull
on each region outweigh the suppression push, so maps can hold a confident
foreground instead of collapsing toward zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .networks import CNetOutput, PNetOutput, PAD_ID
from .tensor import Tensor


@dataclass
class LossWeights:
    """beta: map regularizer; lam: transfer/coherence weight; delta: bootstrap mix."""
    beta: float = 0.005
    lam: float = 0.01
    delta: float = 0.05

    def __post_init__(self):
        for name in ("beta", "lam", "delta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def _suppression(s_map: Tensor) -> Tensor:
    """-sum log(1 - s) per image: [N, h, w] -> [N]."""
    sm = T.clamp_unit(s_map)
    return T.mul(T.log(T.one_minus(sm)), -1.0).sum(axis=(1, 2))


def category_localization_loss(labels: np.ndarray, out: CNetOutput,
                               weights: LossWeights = LossWeights()) -> Tensor:
    """Per-class Bernoulli log-likelihood plus the map regularizer.

    labels: [N, C] binary multi-hot array.
    """
    labels = np.asarray(labels)
    if labels.shape != out.class_logits.shape:
        raise ValueError(f"labels {labels.shape} do not match logits "
                         f"{out.class_logits.shape}")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be binary")
    y = labels.astype(out.class_logits.dtype)
    p = T.sigmoid(out.class_logits)
    ll = T.add(T.mul(T.log(p), Tensor(y)),
               T.mul(T.log(T.one_minus(p)), Tensor(1.0 - y))).sum(axis=1)
    per_image = T.add(T.mul(ll, -1.0), T.mul(_suppression(out.s), weights.beta))
    return per_image.mean()


def caption_localization_loss(tokens: np.ndarray, out: PNetOutput,
                              weights: LossWeights = LossWeights()) -> Tensor:
    """Teacher-forced caption log-likelihood plus the map regularizer.

    tokens: [N, T] id array starting with BOS; PAD targets are unscored.
    """
    tokens = np.asarray(tokens)
    n, t_len = tokens.shape
    if out.word_logits.shape[:2] != (n, t_len - 1):
        raise ValueError(f"tokens of length {t_len} need {t_len - 1} logit steps, "
                         f"got {out.word_logits.shape}")
    targets = tokens[:, 1:]
    mask = (targets != PAD_ID).astype(out.word_logits.dtype)
    m = out.word_logits.shape[-1]
    one_hot = np.zeros((n, t_len - 1, m), dtype=out.word_logits.dtype)
    np.put_along_axis(one_hot, targets[:, :, None], 1.0, axis=2)
    logp = T.log_softmax(out.word_logits, axis=-1)
    step_ll = T.mul(T.mul(logp, Tensor(one_hot)).sum(axis=2), Tensor(mask))
    ll = step_ll.sum(axis=1)
    per_image = T.add(T.mul(ll, -1.0), T.mul(_suppression(out.s), weights.beta))
    return per_image.mean()


def attention_transfer_loss(s_c: Tensor, s_p: Tensor, source_tag: str) -> Tensor:
    """Cross-network map supervision through thresholded teacher regions.

    For category-labelled images S_c is the teacher and S_p the student; for
    caption-labelled images the roles swap. The teacher's index sets
    (saliency >= 0.5) are detached, so gradient reaches only the student.
    Value: mean over regions of the student's cross-entropy against the
    teacher's binary partition, averaged over the batch.
    """
    if s_c.shape != s_p.shape:
        raise ValueError(f"map shapes differ: {s_c.shape} vs {s_p.shape}")
    if source_tag == "category":
        teacher, student = s_c, s_p
    elif source_tag == "caption":
        teacher, student = s_p, s_c
    else:
        raise ValueError(f"source_tag must be 'category' or 'caption', got {source_tag!r}")
    pos = (teacher.data >= 0.5).astype(student.dtype)
    st = T.clamp_unit(student)
    ce = T.add(T.mul(T.log(st), Tensor(pos)),
               T.mul(T.log(T.one_minus(st)), Tensor(1.0 - pos)))
    return T.mul(ce.mean(axis=(1, 2)), -1.0).mean()


def pixel_to_region_targets(pixel_pos: np.ndarray, grid_hw: tuple) -> tuple:
    """Area-majority downsampling of a pixel mask onto the region grid.

    A region is positive when more than half of its pixels are positive.
    Returns (pos, neg) boolean arrays of shape [N, h, w]; together they
    partition the grid.
    """
    pixel_pos = np.asarray(pixel_pos)
    if pixel_pos.ndim == 2:
        pixel_pos = pixel_pos[None]
    n, hp, wp = pixel_pos.shape
    h, w = grid_hw
    if hp % h or wp % w:
        raise ValueError(f"pixel extents {hp}x{wp} not divisible by grid {h}x{w}")
    fy, fx = hp // h, wp // w
    frac = pixel_pos.astype(np.float64).reshape(n, h, fy, w, fx).mean(axis=(2, 4))
    pos = frac > 0.5
    return pos, ~pos


def attention_coherence_loss(s_c: Tensor, s_p: Tensor,
                             pos_regions: np.ndarray,
                             neg_regions: np.ndarray) -> Tensor:
    """Pull both maps toward unlabelled-image ranking targets.

    pos_regions / neg_regions: boolean [N, h, w] region partitions from
    `pixel_to_region_targets`. An image whose positive set is empty
    contributes zero (no reliable seed, no supervision). Gradients flow into
    both maps. Value: per image the cross-entropies are summed over regions
    (both maps), then averaged over the batch. The region sum makes each
    region's pull strong enough to win against the area suppression term;
    a per-region mean would dilute it by the region count and let the
    suppression term flatten both maps.
    """
    if s_c.shape != s_p.shape:
        raise ValueError(f"map shapes differ: {s_c.shape} vs {s_p.shape}")
    pos = np.asarray(pos_regions, dtype=bool)
    neg = np.asarray(neg_regions, dtype=bool)
    if pos.shape != s_c.shape or neg.shape != s_c.shape:
        raise ValueError("region sets must match the map shape")
    if np.any(pos & neg):
        raise ValueError("positive and negative region sets overlap")
    valid = pos.any(axis=(1, 2))
    posf = (pos & valid[:, None, None]).astype(s_c.dtype)
    negf = (neg & valid[:, None, None]).astype(s_c.dtype)
    total = None
    for m in (s_c, s_p):
        mc = T.clamp_unit(m)
        ce = T.add(T.mul(T.log(mc), Tensor(posf)),
                   T.mul(T.log(T.one_minus(mc)), Tensor(negf)))
        total = ce if total is None else T.add(total, ce)
    return T.mul(total.sum(axis=(1, 2)), -1.0).mean()


def combined_loss(l_c: Tensor | None, l_p: Tensor | None,
                  l_at: Tensor | None, l_ac: Tensor | None,
                  weights: LossWeights = LossWeights()) -> Tensor:
    """L = L_c + L_p + lam * L_at + lam * L_ac; missing components drop out."""
    parts = []
    for term, scale in ((l_c, 1.0), (l_p, 1.0), (l_at, weights.lam), (l_ac, weights.lam)):
        if term is None:
            continue
        parts.append(T.mul(term, scale) if scale != 1.0 else term)
    if not parts:
        raise ValueError("combined_loss needs at least one component")
    total = parts[0]
    for p in parts[1:]:
        total = T.add(total, p)
    return total


def bootstrapping_loss(s: Tensor, pseudo: np.ndarray,
                       weights: LossWeights = LossWeights()) -> Tensor:
    """Bootstrapped cross-entropy against a binary pseudo label.

    Targets mix the pseudo label y with the prediction's own hard threshold
    b = [s >= 0.5]: positive weight delta*y + (1-delta)*b, negative weight
    its complement. Mean over all pixels.
    """
    pseudo = np.asarray(pseudo)
    if pseudo.shape != s.shape:
        raise ValueError(f"pseudo label {pseudo.shape} does not match map {s.shape}")
    if not np.all((pseudo == 0) | (pseudo == 1)):
        raise ValueError("pseudo labels must be binary")
    d = weights.delta
    y = pseudo.astype(s.dtype)
    b = (s.data >= 0.5).astype(s.dtype)
    pos_w = d * y + (1.0 - d) * b
    neg_w = d * (1.0 - y) + (1.0 - d) * (1.0 - b)
    sc = T.clamp_unit(s)
    ce = T.add(T.mul(T.log(sc), Tensor(pos_w)),
               T.mul(T.log(T.one_minus(sc)), Tensor(neg_w)))
    return T.mul(ce.mean(), -1.0)
