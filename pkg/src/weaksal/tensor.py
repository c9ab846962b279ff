"""Reverse-mode automatic differentiation on dense numpy arrays.

Every operation that can carry gradient records a backward closure onto a
global tape. `Tensor.backward()` replays the tape in reverse, accumulating
gradients additively at fan-out points, and then consumes the tape. Building
two graphs and calling backward on the first therefore discards the second;
one loss per recording is the supported pattern.

Values are float32 by default. The same graph can be built at float64 (pass
float64 arrays in) which is how the finite-difference checks in
`weaksal.gradcheck` run. Probabilities produced by `sigmoid` are clamped to
[EPS, 1 - EPS] so downstream logs stay finite; `log` itself rejects
non-positive input rather than guessing.

Broadcasting is deliberately narrow: identical shapes, size-1 scalars, or one
shape being a trailing suffix of the other. Anything else needs an explicit
`reshape` / `broadcast_channels`.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

EPS = 1e-7

_FLOAT_DTYPES = (np.float32, np.float64)


class Tape:
    """Ordered record of executed ops, replayed in reverse by backward()."""

    def __init__(self) -> None:
        self.ops: list[tuple["Tensor", object]] = []

    def __len__(self) -> int:
        return len(self.ops)

    def clear(self) -> None:
        self.ops.clear()


_TAPE = Tape()
_GRAD_ON = True


def tape() -> Tape:
    return _TAPE


@contextmanager
def no_grad():
    """Disable recording; forwards run but nothing lands on the tape."""
    global _GRAD_ON
    prev = _GRAD_ON
    _GRAD_ON = False
    try:
        yield
    finally:
        _GRAD_ON = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        # shares the underlying array; gradient flow stops here
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-replay the tape from a scalar loss, then consume it."""
        if self.size != 1:
            raise ValueError(f"backward requires a scalar, got shape {self.shape}")
        self.grad = np.ones_like(self.data)
        for out, bwd in reversed(_TAPE.ops):
            if out.grad is not None:
                bwd(out.grad)
        _TAPE.clear()

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"


def _wrap(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype))


def _make(data: np.ndarray, inputs: tuple, bwd) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    rg = _GRAD_ON and any(t.requires_grad for t in inputs)
    out.requires_grad = rg
    if rg:
        _TAPE.ops.append((out, bwd))
    return out


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _check_dtypes(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.dtype != b.data.dtype:
        raise TypeError(f"{op}: dtype mismatch {a.data.dtype} vs {b.data.dtype}")


def _broadcast_mode(sa: tuple, sb: tuple, a_size: int, b_size: int, op: str) -> None:
    """Permit equal shapes, scalars, or a trailing-suffix match; reject the rest."""
    if sa == sb or a_size == 1 or b_size == 1:
        return
    if len(sb) < len(sa) and sa[len(sa) - len(sb):] == sb:
        return
    if len(sa) < len(sb) and sb[len(sb) - len(sa):] == sa:
        return
    raise ValueError(f"{op}: shapes {sa} and {sb} are not scalar/suffix broadcastable")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    # remaining mismatch only possible for size-1 operands like () vs (1,)
    if g.shape != shape:
        g = g.sum().reshape(shape) if int(np.prod(shape, dtype=int)) == 1 else g.reshape(shape)
    return g


def _binary(a, b, op: str, fwd, da, db) -> Tensor:
    if not isinstance(a, Tensor):
        a = _wrap(a, b)
    b = _wrap(b, a)
    _check_dtypes(a, b, op)
    _broadcast_mode(a.shape, b.shape, a.size, b.size, op)
    data = fwd(a.data, b.data)

    def bwd(g):
        _acc(a, _reduce_to(da(g, a.data, b.data), a.shape))
        _acc(b, _reduce_to(db(g, a.data, b.data), b.shape))

    return _make(data, (a, b), bwd)


def add(a, b) -> Tensor:
    return _binary(a, b, "add", lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary(a, b, "sub", lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _binary(a, b, "mul", lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def one_minus(x: Tensor) -> Tensor:
    data = np.asarray(1.0 - x.data, dtype=x.data.dtype)

    def bwd(g):
        _acc(x, -g)

    return _make(data, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function with outputs clamped to [EPS, 1-EPS].

    The clamp keeps every probability strictly inside (0, 1) so that logs of
    either side stay finite without per-call-site guards.
    """
    y = expit(x.data)
    y = np.clip(y, EPS, 1.0 - EPS).astype(x.data.dtype, copy=False)

    def bwd(g):
        _acc(x, g * (y * (1.0 - y)))

    return _make(y, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0)

    def bwd(g):
        _acc(x, g * (x.data > 0))

    return _make(y, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bwd(g):
        _acc(x, g * (1.0 - y * y))

    return _make(y, (x,), bwd)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise ValueError("log requires strictly positive input; clamp upstream")
    y = np.log(x.data)

    def bwd(g):
        _acc(x, g / x.data)

    return _make(y, (x,), bwd)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip values to [lo, hi]; gradient passes only where input was in range."""
    y = np.clip(x.data, lo, hi)
    mask = (x.data >= lo) & (x.data <= hi)

    def bwd(g):
        _acc(x, g * mask)

    return _make(y, (x,), bwd)


def clamp_unit(x: Tensor) -> Tensor:
    """Clip into [EPS, 1-EPS] before taking logs of x or 1-x."""
    return clamp(x, EPS, 1.0 - EPS)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _acc(x, y * (g - dot))

    return _make(y, (x,), bwd)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse

    def bwd(g):
        _acc(x, g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    return _make(y, (x,), bwd)


def reshape(x: Tensor, *shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    data = x.data.reshape(shape)
    in_shape = x.shape

    def bwd(g):
        _acc(x, g.reshape(in_shape))

    return _make(data, (x,), bwd)


def transpose(x: Tensor, axes=None) -> Tensor:
    """Axis permutation; default reverses all axes."""
    data = np.transpose(x.data, axes)
    if axes is None:
        inv = None
    else:
        inv = np.argsort(axes)

    def bwd(g):
        _acc(x, np.transpose(g, inv))

    return _make(data, (x,), bwd)


def broadcast_channels(x: Tensor, n: int, axis: int = 1) -> Tensor:
    """Repeat a size-1 axis n times; the one sanctioned middle-axis broadcast."""
    if x.shape[axis] != 1:
        raise ValueError(f"broadcast_channels: axis {axis} has size {x.shape[axis]}, expected 1")
    data = np.repeat(x.data, n, axis=axis)

    def bwd(g):
        _acc(x, g.sum(axis=axis, keepdims=True))

    return _make(data, (x,), bwd)


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)
    in_shape = x.shape

    def bwd(g):
        if axis is None:
            _acc(x, np.broadcast_to(g.reshape((1,) * len(in_shape)), in_shape).copy()
                 if in_shape else g.reshape(()))
            return
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % len(in_shape) for a in axes)
        ge = g
        if not keepdims:
            for a in sorted(axes):
                ge = np.expand_dims(ge, a)
        _acc(x, np.broadcast_to(ge, in_shape).copy())

    return _make(np.asarray(data, dtype=x.data.dtype), (x,), bwd)


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a % x.ndim] for a in axes]))
    s = reduce_sum(x, axis=axis, keepdims=keepdims)
    return mul(s, 1.0 / count)


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ValueError("stack of zero tensors")
    shape0, dt0 = tensors[0].shape, tensors[0].data.dtype
    for t in tensors[1:]:
        if t.shape != shape0 or t.data.dtype != dt0:
            raise ValueError("stack requires matching shapes and dtypes")
    data = np.stack([t.data for t in tensors], axis=axis)

    def bwd(g):
        gm = np.moveaxis(g, axis, 0)
        for i, t in enumerate(tensors):
            _acc(t, gm[i])

    return _make(data, tuple(tensors), bwd)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise TypeError("embedding ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range [0, {table.shape[0]})")
    data = table.data[ids]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.ravel(), g.reshape(-1, table.shape[1]))
        _acc(table, gt)

    return _make(data, (table,), bwd)


def affine(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight + bias over the last axis; leading axes are preserved."""
    if weight.ndim != 2:
        raise ValueError(f"affine weight must be 2D, got {weight.shape}")
    d_in, d_out = weight.shape
    if x.shape[-1] != d_in:
        raise ValueError(f"affine: input last dim {x.shape[-1]} != weight rows {d_in}")
    _check_dtypes(x, weight, "affine")
    xm = x.data.reshape(-1, d_in)
    out = xm @ weight.data
    if bias is not None:
        if bias.shape != (d_out,):
            raise ValueError(f"affine bias must have shape ({d_out},), got {bias.shape}")
        out = out + bias.data
    out_shape = x.shape[:-1] + (d_out,)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        gm = g.reshape(-1, d_out)
        if bias is not None:
            _acc(bias, gm.sum(axis=0))
        _acc(weight, xm.T @ gm)
        _acc(x, (gm @ weight.data.T).reshape(x.shape))

    return _make(out.reshape(out_shape), inputs, bwd)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0, dilation: int = 1) -> Tensor:
    """2D cross-correlation on NCHW input with OIHW weights.

    Forward lowers each window to a column (zero-copy strided view, one
    reshape copy) and runs a single GEMM per batch; backward scatters column
    gradients back with kh*kw strided slice additions.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4D input/weight, got {x.shape} / {weight.shape}")
    n, c, h, w = x.shape
    f, ck, kh, kw = weight.shape
    if c != ck:
        raise ValueError(f"conv2d: input has {c} channels but weight expects {ck}")
    if stride < 1 or dilation < 1 or padding < 0:
        raise ValueError("conv2d: stride/dilation must be >= 1 and padding >= 0")
    _check_dtypes(x, weight, "conv2d")
    eff_h = dilation * (kh - 1) + 1
    eff_w = dilation * (kw - 1) + 1
    h_out = (h + 2 * padding - eff_h) // stride + 1
    w_out = (w + 2 * padding - eff_w) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ValueError(f"conv2d: kernel {kh}x{kw} dilation {dilation} does not fit "
                         f"{h}x{w} input with padding {padding}")
    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    span = h_out * w_out
    pointwise = kh == 1 and kw == 1 and stride == 1 and padding == 0
    if pointwise:
        cols = xp.reshape(n, c, span)
    else:
        sn, sc, sh, sw = xp.strides
        view = np.lib.stride_tricks.as_strided(
            xp, (n, c, kh, kw, h_out, w_out),
            (sn, sc, dilation * sh, dilation * sw, stride * sh, stride * sw))
        cols = view.reshape(n, c * kh * kw, span)
    wmat = weight.data.reshape(f, c * kh * kw)
    out = np.matmul(wmat, cols)
    if bias is not None:
        if bias.shape != (f,):
            raise ValueError(f"conv2d bias must have shape ({f},), got {bias.shape}")
        out += bias.data.reshape(1, f, 1)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        gm = g.reshape(n, f, span)
        if bias is not None:
            _acc(bias, gm.sum(axis=(0, 2)))
        if weight.requires_grad:
            gw = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0)
            _acc(weight, gw.reshape(weight.shape))
        if x.requires_grad:
            gcols = np.matmul(wmat.T, gm)
            if pointwise:
                _acc(x, gcols.reshape(n, c, h, w))
                return
            gp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=x.data.dtype)
            gc = gcols.reshape(n, c, kh, kw, h_out, w_out)
            for i in range(kh):
                hi = i * dilation
                for j in range(kw):
                    wj = j * dilation
                    gp[:, :, hi:hi + stride * h_out:stride,
                       wj:wj + stride * w_out:stride] += gc[:, :, i, j]
            if padding:
                gp = gp[:, :, padding:padding + h, padding:padding + w]
            _acc(x, gp)

    return _make(out.reshape(n, f, h_out, w_out), inputs, bwd)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear interpolation on NCHW maps, half-pixel-centre convention.

    Source coordinates are (i + 0.5) * in/out - 0.5, clamped to the valid
    range; resizing to the identical size is an exact pass-through.
    """
    if x.ndim != 4:
        raise ValueError(f"bilinear_resize expects 4D input, got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError("bilinear_resize: output extents must be positive")
    n, c, h, w = x.shape
    if (out_h, out_w) == (h, w):
        def bwd_id(g):
            _acc(x, g)
        return _make(x.data.copy(), (x,), bwd_id)

    def grid(out_n, in_n):
        pos = (np.arange(out_n, dtype=np.float64) + 0.5) * (in_n / out_n) - 0.5
        pos = np.clip(pos, 0.0, in_n - 1.0)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, in_n - 1)
        frac = pos - lo
        return lo, hi, frac

    y0, y1, fy = grid(out_h, h)
    x0, x1, fx = grid(out_w, w)
    wy0, wy1 = (1.0 - fy)[:, None], fy[:, None]
    wx0, wx1 = (1.0 - fx)[None, :], fx[None, :]
    corners = ((y0, x0, wy0 * wx0), (y0, x1, wy0 * wx1),
               (y1, x0, wy1 * wx0), (y1, x1, wy1 * wx1))
    out = np.zeros((n, c, out_h, out_w), dtype=np.float64)
    for ys, xs, wgt in corners:
        out += wgt * x.data[:, :, ys[:, None], xs[None, :]]
    out = out.astype(x.data.dtype)

    def bwd(g):
        gi = np.zeros((n * c, h * w), dtype=x.data.dtype)
        rows = np.arange(n * c)[:, None]
        for ys, xs, wgt in corners:
            idx = (ys[:, None] * w + xs[None, :]).reshape(1, -1)
            contrib = (wgt * g).reshape(n * c, -1).astype(x.data.dtype)
            np.add.at(gi, (rows, idx), contrib)
        _acc(x, gi.reshape(n, c, h, w))

    return _make(out, (x,), bwd)


@dataclass
class LSTMParams:
    """Gate parameters for a single-layer LSTM cell.

    w_x* map the input, w_h* the previous hidden state; i/f/o/g are the
    input, forget, output, and candidate gates.
    """
    w_xi: Tensor; w_hi: Tensor; b_i: Tensor
    w_xf: Tensor; w_hf: Tensor; b_f: Tensor
    w_xo: Tensor; w_ho: Tensor; b_o: Tensor
    w_xg: Tensor; w_hg: Tensor; b_g: Tensor

    def tensors(self) -> dict[str, Tensor]:
        return {k: getattr(self, k) for k in
                ("w_xi", "w_hi", "b_i", "w_xf", "w_hf", "b_f",
                 "w_xo", "w_ho", "b_o", "w_xg", "w_hg", "b_g")}


def lstm_step(x: Tensor, h: Tensor, c: Tensor, p: LSTMParams) -> tuple[Tensor, Tensor]:
    """One LSTM cell update: returns (h_next, c_next). Batched over axis 0."""
    i = sigmoid(add(affine(x, p.w_xi, p.b_i), affine(h, p.w_hi)))
    f = sigmoid(add(affine(x, p.w_xf, p.b_f), affine(h, p.w_hf)))
    o = sigmoid(add(affine(x, p.w_xo, p.b_o), affine(h, p.w_ho)))
    g = tanh(add(affine(x, p.w_xg, p.b_g), affine(h, p.w_hg)))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


@dataclass
class AdamState:
    """First/second moment estimates plus step counter for Adam."""
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[Tensor], lr: float = 1e-4,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        st = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, t=0)
        st.m = [np.zeros_like(p.data) for p in params]
        st.v = [np.zeros_like(p.data) for p in params]
        return st


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, in place on params and state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("adam_step: params/grads/state length mismatch")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ValueError(f"adam_step: grad shape {g.shape} != param shape {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


class Adam:
    """Convenience wrapper binding an AdamState to a fixed parameter list."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState.for_params(self.params, lr, beta1, beta2, eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else None for p in self.params]
        adam_step(self.params, grads, self.state)


_CKPT_FORMAT = "flat-f32-v1"


def save_checkpoint(path: str, tensors: dict[str, np.ndarray],
                    hyperparameters: dict | None = None) -> None:
    """Write named arrays as concatenated little-endian float32 records.

    The binary at `path` holds the raw tensor payloads in sidecar order; the
    JSON sidecar at `path + '.json'` lists names, shapes, byte offsets, and
    free-form hyperparameters.
    """
    entries = []
    offset = 0
    with open(path, "wb") as fh:
        for name, arr in tensors.items():
            src = np.asarray(arr)
            # ascontiguousarray promotes 0-d to 1-d; keep the true shape
            a = np.ascontiguousarray(src, dtype="<f4")
            fh.write(a.tobytes())
            entries.append({"name": name, "shape": list(src.shape), "offset_bytes": offset})
            offset += a.nbytes
    sidecar = {
        "format": _CKPT_FORMAT,
        "byte_order": "little",
        "tensors": entries,
        "hyperparameters": hyperparameters or {},
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Inverse of save_checkpoint: returns (tensors, hyperparameters)."""
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    if sidecar.get("format") != _CKPT_FORMAT:
        raise ValueError(f"unrecognised checkpoint format {sidecar.get('format')!r}")
    raw = np.fromfile(path, dtype="<f4")
    tensors = {}
    for ent in sidecar["tensors"]:
        shape = tuple(ent["shape"])
        count = int(np.prod(shape, dtype=int)) if shape else 1
        start = ent["offset_bytes"] // 4
        chunk = raw[start:start + count]
        if chunk.size != count:
            raise ValueError(f"checkpoint truncated at tensor {ent['name']!r}")
        tensors[ent["name"]] = chunk.reshape(shape).astype(np.float32)
    return tensors, sidecar.get("hyperparameters", {})
