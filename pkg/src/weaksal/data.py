"""Dataset plumbing: manifests, synthetic data, image IO, augmentation.

Real training corpora for this kind of weak supervision are large external
datasets; this package substitutes a generated one so the whole pipeline can
run on a desk machine.  Each synthetic image is one brightly colored object
on a muted background, annotated three ways at once: a category one-hot, a
templated caption, and the exact object mask kept as evaluation ground truth.

The category is the dominant object's shape. Each shape class keeps to its
own color family (a circle is always a red, a square a green, and so on), so
the label is linearly readable from color once the object is found: color
needs no feature learning, which keeps the task inside a small step budget.
Every image also contains smaller distractor blobs drawn from OTHER color
families, so globally pooled statistics are ambiguous and a reliable readout
must attend to the main object region.
"""

from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .networks import RESERVED_TOKENS, VocabIndex

log = logging.getLogger(__name__)

SOURCES = ("category", "caption", "unlabelled")

# each shape class draws its color from one family of three shades; the
# caption names the exact shade, the one-hot label the shape
FAMILY_SHADES = {
    "red": {"red": (0.85, 0.10, 0.10), "crimson": (0.70, 0.05, 0.20),
            "salmon": (0.95, 0.45, 0.35)},
    "green": {"green": (0.10, 0.65, 0.15), "lime": (0.55, 0.90, 0.10),
              "forest": (0.05, 0.40, 0.10)},
    "blue": {"blue": (0.15, 0.25, 0.85), "navy": (0.08, 0.10, 0.50),
             "sky": (0.30, 0.60, 0.95)},
    "yellow": {"yellow": (0.90, 0.85, 0.10), "gold": (0.85, 0.65, 0.05),
               "amber": (0.95, 0.75, 0.20)},
}
FAMILIES = tuple(FAMILY_SHADES)
COLORS = {shade: rgb for shades in FAMILY_SHADES.values()
          for shade, rgb in shades.items()}
SHADE_FAMILY = {shade: family for family, shades in FAMILY_SHADES.items()
                for shade in shades}
SILHOUETTES = ("circle", "square", "triangle", "star")
SILHOUETTE_FAMILY = dict(zip(SILHOUETTES, FAMILIES))
POSITIONS = ("left", "right", "top", "bottom")
FILLER_WORDS = ("a", "on", "the")
AREA_BOUNDS = (0.05, 0.40)
MAIN_AREA = (0.12, 0.32)             # dominant object, inside AREA_BOUNDS
DISTRACTOR_COUNT = (2, 3)            # inclusive range per image
DISTRACTOR_AREA = (0.015, 0.045)     # image fraction per blob, each well
                                     # under MAIN_AREA[0] so "dominant" is
                                     # unambiguous


def build_vocab() -> VocabIndex:
    """Fixed word list shared by the generator and every training run."""
    words = list(FILLER_WORDS) + list(COLORS) + list(SILHOUETTES) + list(POSITIONS)
    return VocabIndex(list(RESERVED_TOKENS) + words)


@dataclass
class SampleRecord:
    """One manifest line: an image plus whichever annotation it carries."""

    image: str
    source: str
    labels: Optional[list] = None    # one-hot, present iff source=category
    tokens: Optional[list] = None    # id list, present iff source=caption
    gt_mask: Optional[str] = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if (self.labels is not None) != (self.source == "category"):
            raise ValueError("labels present iff source=category")
        if (self.tokens is not None) != (self.source == "caption"):
            raise ValueError("tokens present iff source=caption")


def load_manifest(path: str) -> list:
    """Read a JSON-lines manifest; paths resolve relative to the file."""
    base = os.path.dirname(os.path.abspath(path))
    records = []
    counts = dict.fromkeys(SOURCES, 0)
    allowed = {"image", "source", "labels", "tokens", "gt_mask"}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path} line {lineno}: invalid JSON ({exc})")
            if not isinstance(raw, dict):
                raise ValueError(f"{path} line {lineno}: expected an object")
            unknown = set(raw) - allowed
            if unknown:
                raise ValueError(
                    f"{path} line {lineno}: unknown fields {sorted(unknown)}")
            try:
                record = SampleRecord(**raw)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path} line {lineno}: {exc}")
            record.image = os.path.join(base, record.image)
            if record.gt_mask is not None:
                record.gt_mask = os.path.join(base, record.gt_mask)
            counts[record.source] += 1
            records.append(record)
    if not records:
        warnings.warn(f"manifest {path} is empty")
    log.info("loaded %d records from %s (%s)", len(records), path,
             ", ".join(f"{k}={v}" for k, v in counts.items()))
    return records


def load_image(path: str) -> np.ndarray:
    """PNG/JPEG file to float32 RGB [3,H,W] in [0,1]."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_image(path: str, image: np.ndarray) -> None:
    """Float [3,H,W] image in [0,1] to an 8-bit RGB PNG."""
    from PIL import Image

    arr = np.clip(np.asarray(image), 0.0, 1.0)
    quantized = np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(quantized).save(path)


def load_mask(path: str) -> np.ndarray:
    """Grayscale PNG to a bool [H,W] mask (anything above mid-gray is on)."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 127


def save_mask(path: str, mask: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(mask.astype(np.uint8) * np.uint8(255)).save(path)


def save_saliency(path: str, saliency: np.ndarray) -> None:
    """[0,1] map to 8-bit grayscale PNG, values round(255*s)."""
    from PIL import Image

    arr = np.clip(np.asarray(saliency), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(path)


def load_saliency(path: str) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def _shape_mask(shape: str, h: int, w: int, cy: float, cx: float,
                size: float) -> np.ndarray:
    py, px = np.indices((h, w), dtype=np.float64)
    dy, dx = py - cy, px - cx
    if shape == "circle":
        return dy * dy + dx * dx <= size * size
    if shape == "square":
        return (np.abs(dy) <= size) & (np.abs(dx) <= size)
    if shape == "triangle":
        # apex up: width grows linearly from the apex to the base
        frac = (dy + size) / (2.0 * size)
        return (np.abs(dy) <= size) & (np.abs(dx) <= size * np.clip(frac, 0, 1))
    if shape == "star":
        theta = np.arctan2(dy, dx)
        spoke = (theta * 5.0 / (2.0 * np.pi)) % 1.0
        pointiness = np.abs(spoke - 0.5) * 2.0     # 1 at a spike, 0 between
        boundary = size * (0.45 + 0.55 * pointiness)
        return np.sqrt(dy * dy + dx * dx) <= boundary
    raise ValueError(f"unknown shape {shape!r}")


def _position_band(position: str, h: int, w: int):
    lo, hi, mid_lo, mid_hi = 0.18, 0.32, 0.35, 0.65
    if position == "left":
        return (mid_lo * h, mid_hi * h), (lo * w, hi * w)
    if position == "right":
        return (mid_lo * h, mid_hi * h), ((1 - hi) * w, (1 - lo) * w)
    if position == "top":
        return (lo * h, hi * h), (mid_lo * w, mid_hi * w)
    if position == "bottom":
        return ((1 - hi) * h, (1 - lo) * h), (mid_lo * w, mid_hi * w)
    raise ValueError(f"unknown position {position!r}")


def _shape_size(shape: str, area_px: float) -> float:
    """Size parameter whose _shape_mask covers roughly `area_px` pixels."""
    if shape == "circle":
        return np.sqrt(area_px / np.pi)
    if shape == "square":
        return np.sqrt(area_px) / 2.0
    if shape == "triangle":
        return np.sqrt(area_px / 2.0)
    return np.sqrt(area_px / np.pi) / 0.75


def _render_image(rng: np.random.Generator, image_size: int):
    """One sample: returns (image, mask, shade, silhouette, position).

    The mask covers only the dominant object; distractor blobs from other
    color families count as background.
    """
    h = w = image_size
    silhouette = str(rng.choice(SILHOUETTES))
    family = SILHOUETTE_FAMILY[silhouette]
    shade = str(rng.choice(sorted(FAMILY_SHADES[family])))
    position = str(rng.choice(POSITIONS))

    # muted textured background: desaturated base + gradient + noise
    base = rng.uniform(0.25, 0.55, size=3)
    base = 0.4 * base + 0.6 * base.mean()
    grad_dir = rng.uniform(-1.0, 1.0, size=2)
    py, px = np.indices((h, w), dtype=np.float64)
    gradient = 0.06 * (grad_dir[0] * (py / h - 0.5) + grad_dir[1] * (px / w - 0.5))
    noise = rng.normal(0.0, 0.02, size=(h, w))
    image = base[:, None, None] + gradient + noise

    (ylo, yhi), (xlo, xhi) = _position_band(position, h, w)
    cy = rng.uniform(ylo, yhi)
    cx = rng.uniform(xlo, xhi)
    margin = 2.0
    fit = min(cy, cx, h - 1 - cy, w - 1 - cx) - margin
    area = rng.uniform(0.12, 0.32)
    size = min(_shape_size(silhouette, area * h * w), fit)

    mask = _shape_mask(silhouette, h, w, cy, cx, size)
    for _ in range(10):
        frac = mask.mean()
        if MAIN_AREA[0] <= frac <= MAIN_AREA[1]:
            break
        # growth may exceed `fit`: the grid clips the shape at the border,
        # and in-image area stays monotone in size, so this still converges
        size = size * np.sqrt(0.2 / max(frac, 1e-6))
        if frac > MAIN_AREA[1]:
            size = min(size, fit)
        mask = _shape_mask(silhouette, h, w, cy, cx, size)

    # distractors first (the dominant object occludes them), each from a
    # different non-label family so pooled color statistics stay ambiguous
    others = [f for f in FAMILIES if f != family]
    n_distract = int(rng.integers(DISTRACTOR_COUNT[0], DISTRACTOR_COUNT[1] + 1))
    for other in rng.permutation(others)[:n_distract]:
        d_shade = str(rng.choice(sorted(FAMILY_SHADES[other])))
        d_tint = np.asarray(FAMILY_SHADES[other][d_shade])
        d_area = rng.uniform(*DISTRACTOR_AREA) * h * w
        d_shape = str(rng.choice(("circle", "square")))
        for _ in range(20):
            dy = rng.uniform(0.1 * h, 0.9 * h)
            dx = rng.uniform(0.1 * w, 0.9 * w)
            if not mask[int(dy), int(dx)]:
                break
        d_mask = _shape_mask(d_shape, h, w, dy, dx, _shape_size(d_shape, d_area))
        image = np.where(d_mask[None],
                         d_tint[:, None, None] + rng.normal(0.0, 0.02, (h, w)),
                         image)

    tint = np.asarray(COLORS[shade])
    image = np.where(mask[None], tint[:, None, None] + rng.normal(0.0, 0.02, (h, w)),
                     image)
    return np.clip(image, 0.0, 1.0), mask, shade, silhouette, position


def synth_dataset(out_dir: str, n_per_source: int, seed: int,
                  image_size: int = 96) -> list:
    """Generate the three-source dataset and write a manifest plus vocab.

    Deterministic: a fixed seed regenerates the directory byte for byte.
    Returns the records (with paths resolved under `out_dir`).
    """
    if n_per_source < 1:
        raise ValueError("n_per_source must be positive")
    rng = np.random.default_rng(seed)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    vocab = build_vocab()
    vocab.save(os.path.join(out_dir, "vocab.json"))

    prefixes = {"category": "cat", "caption": "cap", "unlabelled": "unl"}
    lines = []
    records = []
    for source in SOURCES:
        for i in range(n_per_source):
            image_id = f"{prefixes[source]}_{i:04d}"
            image, mask, shade, silhouette, position = _render_image(
                rng, image_size)
            image_rel = f"images/{image_id}.png"
            mask_rel = f"masks/{image_id}.png"
            save_image(os.path.join(out_dir, image_rel), image)
            save_mask(os.path.join(out_dir, mask_rel), mask)

            labels = tokens = None
            if source == "category":
                labels = [1 if s == silhouette else 0 for s in SILHOUETTES]
            elif source == "caption":
                words = ["a", shade, silhouette, "on", "the", position]
                tokens = vocab.encode(words)
            lines.append(json.dumps(
                {k: v for k, v in [("image", image_rel), ("source", source),
                                   ("labels", labels), ("tokens", tokens),
                                   ("gt_mask", mask_rel)] if v is not None},
                sort_keys=True))
            records.append(SampleRecord(
                image=os.path.join(out_dir, image_rel), source=source,
                labels=labels, tokens=tokens,
                gt_mask=os.path.join(out_dir, mask_rel)))
    with open(os.path.join(out_dir, "manifest.jsonl"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return records


def augment_sample(rng: np.random.Generator, image: np.ndarray,
                   mask: Optional[np.ndarray] = None,
                   tokens: Optional[list] = None,
                   swap_pair: Optional[tuple] = None,
                   pad: int = 8, flip: bool = True):
    """Reflection-pad then randomly re-crop to size, with optional mirror.

    A horizontal flip mirrors the mask alongside the image and swaps the two
    token ids in `swap_pair` (the left/right words) so captions stay true.
    The rng is consumed in a fixed order regardless of which optional pieces
    are present.
    """
    c, h, w = image.shape
    dy = int(rng.integers(0, 2 * pad + 1))
    dx = int(rng.integers(0, 2 * pad + 1))
    do_flip = flip and bool(rng.uniform() < 0.5)

    padded = np.pad(image, ((0, 0), (pad, pad), (pad, pad)), mode="reflect")
    out = padded[:, dy:dy + h, dx:dx + w].copy()
    out_mask = None
    if mask is not None:
        pm = np.pad(mask, ((pad, pad), (pad, pad)), mode="reflect")
        out_mask = pm[dy:dy + h, dx:dx + w].copy()
    out_tokens = None if tokens is None else list(tokens)

    if do_flip:
        out = out[:, :, ::-1].copy()
        if out_mask is not None:
            out_mask = out_mask[:, ::-1].copy()
        if out_tokens is not None and swap_pair is not None:
            a, b = swap_pair
            out_tokens = [b if t == a else a if t == b else t
                          for t in out_tokens]
    return out, out_mask, out_tokens
