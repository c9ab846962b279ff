"""Attention pooling over a spatial feature map.

A feature map [D, H, W] is read as K = H*W region vectors v_i. Each region
gets a saliency score s_i = sigmoid(w_s . v_i + b_s), an attended feature
f_i = s_i * (w_f . v_i + b_f), and an attention logit a_i = w_a . f_i + b_a;
the softmax-normalised weights alpha pool the attended features into a single
global vector g = sum_i alpha_i f_i. Everything is differentiable end to end.

All four ops accept an unbatched [D, H, W] map or a batched [N, D, H, W]
stack and mirror that rank on their outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class AttentionParams:
    """Learned parameters of the three attention projections.

    w_s: [D], b_s: scalar   -- region saliency scoring
    w_f: [D, D'], b_f: [D'] -- attended-feature projection
    w_a: [D'], b_a: scalar  -- attention logits
    """
    w_s: Tensor
    b_s: Tensor
    w_f: Tensor
    b_f: Tensor
    w_a: Tensor
    b_a: Tensor

    def named(self) -> dict[str, Tensor]:
        return {"w_s": self.w_s, "b_s": self.b_s, "w_f": self.w_f,
                "b_f": self.b_f, "w_a": self.w_a, "b_a": self.b_a}


@dataclass
class AttentionOutput:
    """S: saliency map, f: attended features, alpha: weights, g: pooled vector."""
    s: Tensor      # [H, W] or [N, H, W], values strictly in (0, 1)
    f: Tensor      # [D', H, W] or [N, D', H, W]
    alpha: Tensor  # [K] or [N, K], sums to 1 over K
    g: Tensor      # [D'] or [N, D']


def init_attention_params(rng: np.random.Generator, d: int, d_prime: int,
                          dtype=np.float32) -> AttentionParams:
    """Zero scoring params (saliency starts flat at 0.5), small random projections."""
    def t(a):
        return Tensor(np.asarray(a, dtype=dtype), requires_grad=True)
    return AttentionParams(
        w_s=t(np.zeros(d)),
        b_s=t(0.0),
        w_f=t(rng.standard_normal((d, d_prime)) / np.sqrt(d)),
        b_f=t(np.zeros(d_prime)),
        w_a=t(rng.standard_normal(d_prime) / np.sqrt(d_prime)),
        b_a=t(0.0))


def _as_batch(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 4:
        return x, True
    if x.ndim == 3:
        return T.reshape(x, (1,) + x.shape), False
    raise ValueError(f"expected [D,H,W] or [N,D,H,W] features, got {x.shape}")


def region_saliency(features: Tensor, params: AttentionParams) -> Tensor:
    """Per-region sigmoid score: a 1x1 conv with weight w_s followed by sigmoid."""
    x, batched = _as_batch(features)
    d = x.shape[1]
    w = T.reshape(params.w_s, (1, d, 1, 1))
    b = T.reshape(params.b_s, (1,))
    s = T.sigmoid(T.conv2d(x, w, b))
    n, _, h, wid = s.shape
    return T.reshape(s, (n, h, wid) if batched else (h, wid))


def attended_features(features: Tensor, s_map: Tensor,
                      params: AttentionParams) -> Tensor:
    """f_i = s_i * (w_f . v_i + b_f): 1x1 conv projection gated by the map."""
    x, batched = _as_batch(features)
    n, d, h, w = x.shape
    d_prime = params.w_f.shape[1]
    if s_map.shape[-2:] != (h, w):
        raise ValueError(f"saliency map {s_map.shape} does not match feature grid {(h, w)}")
    wk = T.reshape(T.transpose(params.w_f), (d_prime, d, 1, 1))
    proj = T.conv2d(x, wk, params.b_f)
    s4 = T.reshape(s_map, (n, 1, h, w))
    f = T.mul(proj, T.broadcast_channels(s4, d_prime))
    return f if batched else T.reshape(f, (d_prime, h, w))


def attention_weights(f: Tensor, params: AttentionParams) -> Tensor:
    """Softmax over the K = H*W attention logits a_i = w_a . f_i + b_a."""
    x, batched = _as_batch(f)
    n, d_prime, h, w = x.shape
    wk = T.reshape(params.w_a, (1, d_prime, 1, 1))
    b = T.reshape(params.b_a, (1,))
    a = T.reshape(T.conv2d(x, wk, b), (n, h * w))
    alpha = T.softmax(a, axis=-1)
    return alpha if batched else T.reshape(alpha, (h * w,))


def global_feature(f: Tensor, alpha: Tensor) -> Tensor:
    """Convex combination g = sum_i alpha_i f_i over the region axis."""
    x, batched = _as_batch(f)
    n, d_prime, h, w = x.shape
    k = h * w
    fr = T.reshape(x, (n, d_prime, k))
    ar = T.reshape(alpha, (n, 1, k))
    g = T.mul(fr, T.broadcast_channels(ar, d_prime)).sum(axis=2)
    return g if batched else T.reshape(g, (d_prime,))


def attention_forward(features: Tensor, params: AttentionParams) -> AttentionOutput:
    """Compose scoring, gating, weighting, and pooling in one differentiable pass."""
    s = region_saliency(features, params)
    f = attended_features(features, s, params)
    alpha = attention_weights(f, params)
    g = global_feature(f, alpha)
    return AttentionOutput(s=s, f=f, alpha=alpha, g=g)
