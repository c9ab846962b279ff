"""The three networks: CNet (classification), PNet (captioning), SNet (saliency).

CNet and PNet share an architecture pattern: a small convolutional backbone at
output stride 16, attention pooling over its feature grid, and a task head fed
by the pooled global feature. Their coarse saliency maps fall out of the
attention scoring. SNet runs a stride-8 variant of the same backbone and
predicts a full-resolution saliency map through four parallel dilated
convolution branches.

The backbone is four blocks of 2x(3x3 conv + relu) with widths 16/32/64/128 by
default; each block entry halves resolution. The stride-8 variant keeps the
last block at full resolution and dilates its convolutions by 2 instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import attention as A
from . import tensor as T
from .tensor import Tensor

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>")


@dataclass
class BackboneConfig:
    widths: tuple = (16, 32, 64, 128)
    out_stride: int = 16
    activation: str = "relu"

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) != 4 or any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be 4 positive ints, got {self.widths}")
        if self.out_stride not in (8, 16):
            raise ValueError(f"out_stride must be 8 or 16, got {self.out_stride}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")


@dataclass
class NetworkConfig:
    """Hyperparameters shared by the model constructors."""
    widths: tuple = (16, 32, 64, 128)
    d_attn: int = 64      # attended-feature dimension D'
    n_classes: int = 4
    vocab_size: int = 26
    d_embed: int = 64
    d_hidden: int = 128

    def to_dict(self) -> dict:
        return {"widths": list(self.widths), "d_attn": self.d_attn,
                "n_classes": self.n_classes, "vocab_size": self.vocab_size,
                "d_embed": self.d_embed, "d_hidden": self.d_hidden}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        cfg = cls(**{k: d[k] for k in ("widths", "d_attn", "n_classes",
                                       "vocab_size", "d_embed", "d_hidden") if k in d})
        cfg.widths = tuple(cfg.widths)
        return cfg


@dataclass
class VocabIndex:
    """Token <-> id bijection with ids 0/1/2 reserved for PAD/BOS/EOS."""
    tokens: list
    _ids: dict = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.tokens) < 3 or tuple(self.tokens[:3]) != RESERVED_TOKENS:
            raise ValueError(f"vocabulary must start with {RESERVED_TOKENS}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        self._ids = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        if token not in self._ids:
            raise KeyError(f"token {token!r} not in vocabulary")
        return self._ids[token]

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]

    def encode(self, words) -> list:
        """Wrap a word sequence as [BOS, w..., EOS] ids."""
        return [BOS_ID] + [self.id_of(w) for w in words] + [EOS_ID]

    def decode(self, ids) -> list:
        return [self.tokens[i] for i in ids
                if i not in (PAD_ID, BOS_ID, EOS_ID)]

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(list(self.tokens), fh, indent=0)

    @classmethod
    def load(cls, path: str) -> "VocabIndex":
        with open(path) as fh:
            return cls(json.load(fh))


def _he_conv(rng, c_out, c_in, k, dtype):
    std = np.sqrt(2.0 / (c_in * k * k))
    w = Tensor((rng.standard_normal((c_out, c_in, k, k)) * std).astype(dtype),
               requires_grad=True)
    b = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)
    return w, b


def _glorot(rng, d_in, d_out, dtype):
    std = np.sqrt(2.0 / (d_in + d_out))
    w = Tensor((rng.standard_normal((d_in, d_out)) * std).astype(dtype),
               requires_grad=True)
    b = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True)
    return w, b


# fixed input standardization applied inside the backbone: [0,1] RGB in,
# roughly zero-mean unit-variance activations out. He init assumes unit-scale
# inputs; feeding raw [0,1] images instead starves the whole feature stack
# (and everything pooled from it) by about an order of magnitude.
INPUT_MEAN = 0.45
INPUT_STD = 0.225


class Backbone:
    """Four conv blocks; output channels = widths[-1], grid = input/out_stride."""

    def __init__(self, config: BackboneConfig, rng: np.random.Generator,
                 in_channels: int = 3, dtype=np.float32):
        self.config = config
        w = config.widths
        dil8 = config.out_stride == 8
        # (name, c_in, c_out, stride, dilation)
        plan = [
            ("b1c1", in_channels, w[0], 2, 1),
            ("b1c2", w[0], w[0], 1, 1),
            ("b2c1", w[0], w[1], 2, 1),
            ("b2c2", w[1], w[1], 1, 1),
            ("b3c1", w[1], w[2], 2, 1),
            ("b3c2", w[2], w[2], 1, 1),
            ("b4c1", w[2], w[3], 1 if dil8 else 2, 2 if dil8 else 1),
            ("b4c2", w[3], w[3], 1, 2 if dil8 else 1),
        ]
        self.layers = []
        for name, ci, co, stride, dil in plan:
            wt, bt = _he_conv(rng, co, ci, 3, dtype)
            self.layers.append({"name": name, "w": wt, "b": bt,
                                "stride": stride, "dilation": dil})

    @property
    def out_channels(self) -> int:
        return self.config.widths[-1]

    def named_params(self) -> dict[str, Tensor]:
        out = {}
        for lay in self.layers:
            out[f"backbone.{lay['name']}.w"] = lay["w"]
            out[f"backbone.{lay['name']}.b"] = lay["b"]
        return out

    def forward(self, images: Tensor) -> Tensor:
        if images.ndim != 4:
            raise ValueError(f"expected [N,3,H,W] images, got {images.shape}")
        stride = self.config.out_stride
        h, w = images.shape[2], images.shape[3]
        if h % stride or w % stride:
            raise ValueError(f"image extents {h}x{w} are not divisible by the "
                             f"output stride {stride}")
        x = T.mul(T.sub(images, INPUT_MEAN), 1.0 / INPUT_STD)
        for lay in self.layers:
            x = T.relu(T.conv2d(x, lay["w"], lay["b"], stride=lay["stride"],
                                padding=lay["dilation"], dilation=lay["dilation"]))
        return x


@dataclass
class CNetOutput:
    class_logits: Tensor  # [N, C]
    s: Tensor             # [N, H/16, W/16], values in (0, 1)
    attn: A.AttentionOutput | None = None


@dataclass
class PNetOutput:
    word_logits: Tensor   # [N, T-1, M]; row t-1 scores token t given tokens < t
    s: Tensor             # [N, H/16, W/16]
    attn: A.AttentionOutput | None = None


class CNet:
    """Image classifier whose attention scoring doubles as a saliency map."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator,
                 dtype=np.float32):
        self.config = config
        self.backbone = Backbone(BackboneConfig(widths=config.widths, out_stride=16),
                                 rng, dtype=dtype)
        self.attn = A.init_attention_params(rng, self.backbone.out_channels,
                                            config.d_attn, dtype=dtype)
        self.cls_w, self.cls_b = _glorot(rng, config.d_attn, config.n_classes, dtype)

    def named_params(self) -> dict[str, Tensor]:
        out = dict(self.backbone.named_params())
        for k, v in self.attn.named().items():
            out[f"attn.{k}"] = v
        out["cls.w"] = self.cls_w
        out["cls.b"] = self.cls_b
        return out

    def params(self) -> list[Tensor]:
        named = self.named_params()
        return [named[k] for k in sorted(named)]

    def forward(self, images: Tensor) -> CNetOutput:
        feats = self.backbone.forward(images)
        att = A.attention_forward(feats, self.attn)
        logits = T.affine(att.g, self.cls_w, self.cls_b)
        return CNetOutput(class_logits=logits, s=att.s, attn=att)

    def saliency(self, images: Tensor) -> Tensor:
        """Just the attention saliency map; skips pooling and the class head."""
        feats = self.backbone.forward(images)
        return A.region_saliency(feats, self.attn)


class PNet:
    """Caption decoder whose attention scoring doubles as a saliency map.

    Teacher forcing: the LSTM is warmed up on a projection of the global
    attended feature, then consumes embeddings of tokens[0..T-2]; the logits
    after consuming tokens[t-1] score tokens[t]. A (BOS, EOS) caption thus
    yields exactly one prediction step.
    """

    def __init__(self, config: NetworkConfig, rng: np.random.Generator,
                 dtype=np.float32):
        self.config = config
        self.backbone = Backbone(BackboneConfig(widths=config.widths, out_stride=16),
                                 rng, dtype=dtype)
        self.attn = A.init_attention_params(rng, self.backbone.out_channels,
                                            config.d_attn, dtype=dtype)
        self.proj_w, self.proj_b = _glorot(rng, config.d_attn, config.d_embed, dtype)
        self.embed = Tensor((rng.standard_normal((config.vocab_size, config.d_embed))
                             * 0.1).astype(dtype), requires_grad=True)
        dh, de = config.d_hidden, config.d_embed

        def lin(d_in, d_out):
            std = np.sqrt(1.0 / d_in)
            return Tensor((rng.standard_normal((d_in, d_out)) * std).astype(dtype),
                          requires_grad=True)

        def bias(fill=0.0):
            return Tensor(np.full(dh, fill, dtype=dtype), requires_grad=True)

        self.lstm = T.LSTMParams(
            w_xi=lin(de, dh), w_hi=lin(dh, dh), b_i=bias(),
            w_xf=lin(de, dh), w_hf=lin(dh, dh), b_f=bias(1.0),  # open forget gate
            w_xo=lin(de, dh), w_ho=lin(dh, dh), b_o=bias(),
            w_xg=lin(de, dh), w_hg=lin(dh, dh), b_g=bias())
        self.out_w, self.out_b = _glorot(rng, dh, config.vocab_size, dtype)
        self._dtype = dtype

    def named_params(self) -> dict[str, Tensor]:
        out = dict(self.backbone.named_params())
        for k, v in self.attn.named().items():
            out[f"attn.{k}"] = v
        out["proj.w"] = self.proj_w
        out["proj.b"] = self.proj_b
        out["embed.table"] = self.embed
        for k, v in self.lstm.tensors().items():
            out[f"lstm.{k}"] = v
        out["out.w"] = self.out_w
        out["out.b"] = self.out_b
        return out

    def params(self) -> list[Tensor]:
        named = self.named_params()
        return [named[k] for k in sorted(named)]

    def forward(self, images: Tensor, tokens: np.ndarray) -> PNetOutput:
        tokens = np.asarray(tokens)
        if tokens.ndim == 1:
            tokens = tokens[None, :]
        n, t_len = tokens.shape
        if t_len < 2:
            raise ValueError("captions need at least (BOS, EOS)")
        if np.any(tokens[:, 0] != BOS_ID):
            raise ValueError("caption tokens must begin with BOS")
        if tokens.max() >= self.config.vocab_size:
            raise IndexError(f"token id {int(tokens.max())} out of range "
                             f"[0, {self.config.vocab_size})")
        feats = self.backbone.forward(images)
        att = A.attention_forward(feats, self.attn)
        x0 = T.affine(att.g, self.proj_w, self.proj_b)
        dh = self.config.d_hidden
        h = Tensor(np.zeros((n, dh), dtype=self._dtype))
        c = Tensor(np.zeros((n, dh), dtype=self._dtype))
        h, c = T.lstm_step(x0, h, c, self.lstm)
        step_logits = []
        for t_idx in range(1, t_len):
            x_t = T.embedding(self.embed, tokens[:, t_idx - 1])
            h, c = T.lstm_step(x_t, h, c, self.lstm)
            step_logits.append(T.affine(h, self.out_w, self.out_b))
        word_logits = T.stack(step_logits, axis=1)
        return PNetOutput(word_logits=word_logits, s=att.s, attn=att)

    def saliency(self, images: Tensor) -> Tensor:
        feats = self.backbone.forward(images)
        return A.region_saliency(feats, self.attn)


SNET_DILATIONS = (6, 12, 18, 24)


class SNet:
    """Saliency predictor: stride-8 backbone, four dilated 3x3 branches summed
    pre-sigmoid, upsampled to input size through a 3x3 refinement conv."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator,
                 dtype=np.float32):
        self.config = config
        self.backbone = Backbone(BackboneConfig(widths=config.widths, out_stride=8),
                                 rng, dtype=dtype)
        d = self.backbone.out_channels
        self.branches = [_he_conv(rng, 1, d, 3, dtype) for _ in SNET_DILATIONS]
        self.refine_w, self.refine_b = _he_conv(rng, 1, 1, 3, dtype)

    def named_params(self) -> dict[str, Tensor]:
        out = dict(self.backbone.named_params())
        for rate, (w, b) in zip(SNET_DILATIONS, self.branches):
            out[f"branch{rate}.w"] = w
            out[f"branch{rate}.b"] = b
        out["refine.w"] = self.refine_w
        out["refine.b"] = self.refine_b
        return out

    def params(self) -> list[Tensor]:
        named = self.named_params()
        return [named[k] for k in sorted(named)]

    def forward(self, images: Tensor) -> Tensor:
        feats = self.backbone.forward(images)
        total = None
        for rate, (w, b) in zip(SNET_DILATIONS, self.branches):
            branch = T.conv2d(feats, w, b, padding=rate, dilation=rate)
            total = branch if total is None else T.add(total, branch)
        h, w = images.shape[2], images.shape[3]
        up = T.bilinear_resize(total, h, w)
        logits = T.conv2d(up, self.refine_w, self.refine_b, padding=1)
        n = images.shape[0]
        return T.reshape(T.sigmoid(logits), (n, h, w))


def backbone_forward(image: Tensor, backbone: Backbone) -> Tensor:
    return backbone.forward(image)


def cnet_forward(image: Tensor, net: CNet) -> CNetOutput:
    return net.forward(image)


def pnet_forward(image: Tensor, caption_tokens: np.ndarray, net: PNet) -> PNetOutput:
    return net.forward(image, caption_tokens)


def snet_forward(image: Tensor, net: SNet) -> Tensor:
    return net.forward(image)
