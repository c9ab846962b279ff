"""Pseudo ground-truth for the saliency network.

After the two coarse networks are trained, their maps are fused, optionally
smoothed with a color-aware mean-field pass, and binarized into per-image
pseudo labels.  The smoothing step is a windowed bilateral stand-in for a
fully-connected CRF: same role (align label boundaries with color edges),
but truncated to a local window so it runs comfortably on a CPU.  Inference
never touches this module; it exists only to manufacture training targets.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .tensor import Tensor, bilinear_resize, no_grad

_CLIP = 1e-7


@dataclass
class RefineParams:
    """Windowed bilateral mean-field settings.

    `weight` scales the pairwise term; zero disables smoothing entirely and
    the input map is returned untouched.
    """

    radius: int = 8
    spatial_std: float = 8.0
    color_std: float = 0.1
    iterations: int = 5
    weight: float = 1.0


@dataclass
class PseudoLabel:
    """Binary training target plus a record of how it was produced."""

    label: np.ndarray          # [H,W] uint8 with values in {0,1}
    provenance: dict


def fuse_maps(s_c: np.ndarray, s_p: np.ndarray,
              out_h: int, out_w: int) -> np.ndarray:
    """Average two saliency maps on a shared grid and resize bilinearly."""
    a = np.asarray(s_c, dtype=np.float64)
    b = np.asarray(s_p, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"map shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError(f"expected [H,W] maps, got {a.shape}")
    fused = (a + b) / 2.0
    with no_grad():
        resized = bilinear_resize(Tensor(fused[None, None]), out_h, out_w)
    return resized.data[0, 0]


def crf_refine(image: np.ndarray, saliency: np.ndarray,
               params: Optional[RefineParams] = None) -> np.ndarray:
    """Sharpen a soft map against the image's color structure.

    Runs mean-field iterations of a two-label model: unary terms are the
    negative log of the map and its complement, and each pixel exchanges
    messages with its window neighbors weighted by a bilateral kernel
    (Gaussian in position and in RGB difference).  Returns the posterior
    foreground probability.
    """
    if params is None:
        params = RefineParams()
    img = np.asarray(image, dtype=np.float64)
    sal = np.asarray(saliency, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected image [3,H,W], got {img.shape}")
    if sal.shape != img.shape[1:]:
        raise ValueError(f"map shape {sal.shape} != image grid {img.shape[1:]}")
    if sal.min() < 0.0 or sal.max() > 1.0:
        raise ValueError("saliency map must lie in [0,1]")
    if params.iterations == 0 or params.weight == 0.0:
        return sal.copy()

    h, w = sal.shape
    p = np.clip(sal, _CLIP, 1.0 - _CLIP)
    u_fg = -np.log(p)
    u_bg = -np.log(1.0 - p)

    # pair kernels are fixed across iterations; enumerate half the window and
    # scatter messages both ways to honor k(i,j) = k(j,i)
    rgb = np.moveaxis(img, 0, -1)
    pairs = []
    for dy in range(0, params.radius + 1):
        for dx in range(-params.radius, params.radius + 1):
            if dy == 0 and dx <= 0:
                continue
            if dy >= h or abs(dx) >= w:
                continue
            spatial = np.exp(-(dy * dy + dx * dx)
                             / (2.0 * params.spatial_std ** 2))
            wlo, whi = max(0, -dx), w - max(0, dx)
            a = (slice(0, h - dy), slice(wlo, whi))
            b = (slice(dy, h), slice(wlo + dx, whi + dx))
            diff = ((rgb[a] - rgb[b]) ** 2).sum(axis=-1)
            kernel = (params.weight * spatial
                      * np.exp(-diff / (2.0 * params.color_std ** 2)))
            pairs.append((a, b, kernel))

    q_fg = p.copy()
    q_bg = 1.0 - p
    for _ in range(params.iterations):
        m_fg = np.zeros_like(q_fg)
        m_bg = np.zeros_like(q_bg)
        for a, b, kernel in pairs:
            m_fg[a] += kernel * q_fg[b]
            m_fg[b] += kernel * q_fg[a]
            m_bg[a] += kernel * q_bg[b]
            m_bg[b] += kernel * q_bg[a]
        # Potts compatibility: a label is penalized by the other label's mass
        e_fg = u_fg + m_bg
        e_bg = u_bg + m_fg
        base = np.minimum(e_fg, e_bg)
        ef = np.exp(-(e_fg - base))
        eb = np.exp(-(e_bg - base))
        q_fg = ef / (ef + eb)
        q_bg = 1.0 - q_fg
    return q_fg


def binarize(saliency: np.ndarray, threshold: float = 0.5,
             provenance: Optional[dict] = None) -> PseudoLabel:
    """Threshold a [0,1] map into a {0,1} label; ties go to foreground."""
    m = np.asarray(saliency, dtype=np.float64)
    if m.min() < 0.0 or m.max() > 1.0:
        raise ValueError("saliency map must lie in [0,1]")
    record = dict(provenance or {})
    record["threshold"] = float(threshold)
    return PseudoLabel(label=(m >= threshold).astype(np.uint8),
                       provenance=record)


def generate_pseudo_label(image: np.ndarray, s_c: np.ndarray, s_p: np.ndarray,
                          refine: Optional[RefineParams] = None,
                          threshold: float = 0.5,
                          image_id: Optional[str] = None) -> PseudoLabel:
    """Fuse, optionally refine, and binarize one image's coarse maps.

    `refine=None` skips smoothing entirely (the "off" switch).
    """
    h, w = int(image.shape[1]), int(image.shape[2])
    fused = np.clip(fuse_maps(s_c, s_p, h, w), 0.0, 1.0)
    if refine is not None:
        fused = crf_refine(image, fused, refine)
    provenance = {
        "image_id": image_id,
        "fusion": "mean",
        "refiner": asdict(refine) if refine is not None else "off",
    }
    return binarize(fused, threshold=threshold, provenance=provenance)


def save_pseudo_labels(labels: dict, directory: str) -> None:
    """Write labels as 0/255 grayscale PNGs plus a JSON manifest by image id."""
    from PIL import Image

    os.makedirs(directory, exist_ok=True)
    manifest = {}
    for image_id, pseudo in sorted(labels.items()):
        filename = f"{image_id}.png"
        Image.fromarray(pseudo.label * np.uint8(255)).save(
            os.path.join(directory, filename))
        manifest[image_id] = {"file": filename,
                              "provenance": pseudo.provenance}
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_pseudo_labels(directory: str) -> dict:
    """Inverse of save_pseudo_labels."""
    from PIL import Image

    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    labels = {}
    for image_id, entry in manifest.items():
        raw = np.array(Image.open(os.path.join(directory, entry["file"])))
        labels[image_id] = PseudoLabel(
            label=(raw > 127).astype(np.uint8),
            provenance=entry["provenance"])
    return labels
