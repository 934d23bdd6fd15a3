"""Dense rank-4 tensors with reverse-mode differentiation.

Every value is a (batch, channels, height, width) float64 array; scalars
ride along as (1, 1, 1, 1). Ops record their inputs on the output node, and
``backward`` replays the recorded graph in reverse topological order. There
is no broadcasting beyond what each op defines: shapes must line up exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, UsageError


class Tensor:
    """A rank-4 array node in the differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn", "_op")

    def __init__(self, data, requires_grad=False, _parents=(), _grad_fn=None, _op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 4:
            raise UsageError(
                f"tensors are rank-4 (batch, channels, height, width); got shape {arr.shape}"
            )
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._grad_fn = _grad_fn
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise UsageError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def check_finite(self, context="tensor"):
        """Raise DataError if any stored value is NaN or infinite."""
        if not np.isfinite(self.data).all():
            bad = np.argwhere(~np.isfinite(self.data))[0]
            raise DataError(f"{context}: non-finite value at index {tuple(bad)}")
        return self

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"


def scalar(value, requires_grad=False):
    """Wrap a python number as a (1, 1, 1, 1) tensor."""
    return Tensor(np.full((1, 1, 1, 1), float(value)), requires_grad=requires_grad)


def _node(data, parents, grad_fn, op):
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _grad_fn=grad_fn, _op=op)
    return Tensor(data, _op=op)


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise UsageError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


class Tape:
    """Topologically ordered record of the nodes reachable from a root.

    Construction walks the graph iteratively (training graphs get deep);
    ``nodes`` lists every input before any op that consumes it.
    """

    def __init__(self, root):
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, ready = stack.pop()
            if ready:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.nodes = order
        self.root = root

    def operations(self):
        return [n for n in self.nodes if n._grad_fn is not None]

    def backward(self):
        """Single reverse sweep; adds this pass's gradient into each node's grad."""
        flow = {id(self.root): np.ones_like(self.root.data)}
        for node in reversed(self.nodes):
            g = flow.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._grad_fn is None:
                continue
            for parent, pg in zip(node._parents, node._grad_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = flow.get(id(parent))
                flow[id(parent)] = pg if acc is None else acc + pg


def backward(loss):
    """Propagate gradients from a scalar loss to every reachable tensor.

    Repeated calls without ``zero_grad`` accumulate into ``grad``.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward root must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("backward root does not require grad; nothing recorded")
    Tape(loss).backward()


# ---------------------------------------------------------------------------
# convolution / pooling / resampling


@dataclass(frozen=True)
class ConvSpec:
    """Hyperparameters of one convolution: kernel size, dilation, padding, stride."""

    in_channels: int
    out_channels: int
    kernel_size: int
    dilation: int = 1
    padding: int = 0
    stride: int = 1

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel_size", "dilation", "stride"):
            if getattr(self, name) < 1:
                raise ConfigError(f"ConvSpec.{name} must be >= 1, got {getattr(self, name)}")
        if self.padding < 0:
            raise ConfigError(f"ConvSpec.padding must be >= 0, got {self.padding}")

    def out_size(self, h, w):
        oh = kernels.conv_out_size(h, self.kernel_size, self.dilation, self.padding, self.stride)
        ow = kernels.conv_out_size(w, self.kernel_size, self.dilation, self.padding, self.stride)
        if oh < 1 or ow < 1:
            raise ConfigError(f"convolution of {h}x{w} input with {self} yields empty output")
        return oh, ow


def conv2d(x, weights, bias, spec):
    """2-D convolution with dilation; weights (out, in, k, k), bias (1, out, 1, 1)."""
    if x.shape[1] != spec.in_channels:
        raise ConfigError(f"conv2d: input has {x.shape[1]} channels, spec wants {spec.in_channels}")
    wshape = (spec.out_channels, spec.in_channels, spec.kernel_size, spec.kernel_size)
    if weights.shape != wshape:
        raise ConfigError(f"conv2d: weights shape {weights.shape} != {wshape}")
    if bias.shape != (1, spec.out_channels, 1, 1):
        raise ConfigError(f"conv2d: bias shape {bias.shape} != (1, {spec.out_channels}, 1, 1)")
    in_h, in_w = x.shape[2], x.shape[3]
    spec.out_size(in_h, in_w)
    d, p, s = spec.dilation, spec.padding, spec.stride
    y = kernels.conv2d_forward(x.data, weights.data, bias.data.reshape(-1), d, p, s)

    def grad_fn(g):
        g = np.ascontiguousarray(g)
        gx = kernels.conv2d_grad_input(weights.data, g, in_h, in_w, d, p, s) if x.requires_grad else None
        gw = kernels.conv2d_grad_weights(x.data, g, spec.kernel_size, d, p, s) if weights.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1) if bias.requires_grad else None
        return gx, gw, gb

    return _node(y, (x, weights, bias), grad_fn, "conv2d")


def avg_pool2d(x, k, padding=0, stride=1):
    """Average pooling; divisor is k*k, so padded zeros count toward the mean."""
    if k < 1:
        raise ConfigError(f"avg_pool2d: window must be >= 1, got {k}")
    if padding < 0 or stride < 1:
        raise ConfigError(f"avg_pool2d: bad padding/stride ({padding}, {stride})")
    in_h, in_w = x.shape[2], x.shape[3]
    oh = kernels.conv_out_size(in_h, k, 1, padding, stride)
    ow = kernels.conv_out_size(in_w, k, 1, padding, stride)
    if oh < 1 or ow < 1:
        raise ConfigError(f"avg_pool2d: window {k} does not fit {in_h}x{in_w} input with padding {padding}")
    y = kernels.avg_pool_forward(x.data, k, padding, stride)

    def grad_fn(g):
        return (kernels.avg_pool_grad_input(np.ascontiguousarray(g), in_h, in_w, k, padding, stride),)

    return _node(y, (x,), grad_fn, "avg_pool2d")


def adaptive_avg_pool(x, bins):
    """Pool to an exact (bh, bw) grid; bin edges are floor/ceil of proportional positions."""
    bh, bw = bins
    _, _, h, w = x.shape
    if bh < 1 or bw < 1 or bh > h or bw > w:
        raise ConfigError(f"adaptive_avg_pool: bins {bins} invalid for {h}x{w} input")
    row_edges = [(math.floor(i * h / bh), math.ceil((i + 1) * h / bh)) for i in range(bh)]
    col_edges = [(math.floor(j * w / bw), math.ceil((j + 1) * w / bw)) for j in range(bw)]
    y = np.empty(x.shape[:2] + (bh, bw))
    for i, (r0, r1) in enumerate(row_edges):
        for j, (c0, c1) in enumerate(col_edges):
            y[:, :, i, j] = x.data[:, :, r0:r1, c0:c1].mean(axis=(2, 3))

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        for i, (r0, r1) in enumerate(row_edges):
            for j, (c0, c1) in enumerate(col_edges):
                area = (r1 - r0) * (c1 - c0)
                gx[:, :, r0:r1, c0:c1] += g[:, :, i:i + 1, j:j + 1] / area
        return (gx,)

    return _node(y, (x,), grad_fn, "adaptive_avg_pool")


def bilinear_upsample(x, out_size):
    """Bilinear enlargement with align-corners-true; downsampling is rejected."""
    out_h, out_w = out_size
    in_h, in_w = x.shape[2], x.shape[3]
    if out_h < in_h or out_w < in_w:
        raise ConfigError(
            f"bilinear_upsample: target {out_size} smaller than input {(in_h, in_w)}"
        )
    y = kernels.bilinear_forward(x.data, out_h, out_w)

    def grad_fn(g):
        return (kernels.bilinear_grad_input(np.ascontiguousarray(g), in_h, in_w),)

    return _node(y, (x,), grad_fn, "bilinear_upsample")


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a, b):
    _same_shape(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b):
    _same_shape(a, b, "sub")
    return _node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b):
    _same_shape(a, b, "mul")
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def scale(x, c):
    c = float(c)
    return _node(x.data * c, (x,), lambda g: (g * c,), "scale")


def sum_all(x):
    """Full reduction to a (1, 1, 1, 1) scalar."""
    y = np.array(x.data.sum()).reshape(1, 1, 1, 1)

    def grad_fn(g):
        return (np.full_like(x.data, g.reshape(-1)[0]),)

    return _node(y, (x,), grad_fn, "sum_all")


def fuse(a, b, mode):
    """Elementwise fusion of two same-shape maps: mean of both, or their product."""
    _same_shape(a, b, "fuse")
    if mode == "average":
        return _node((a.data + b.data) * 0.5, (a, b), lambda g: (g * 0.5, g * 0.5), "fuse_avg")
    if mode == "multiply":
        return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "fuse_mul")
    raise ConfigError(f"fuse: mode must be 'average' or 'multiply', got {mode!r}")


def concat_channels(parts):
    """Stack tensors along the channel axis; batch and spatial extents must agree."""
    if not parts:
        raise UsageError("concat_channels: empty part list")
    first = parts[0]
    for p in parts[1:]:
        if p.shape[0] != first.shape[0] or p.shape[2:] != first.shape[2:]:
            raise ConfigError(
                f"concat_channels: batch/spatial mismatch {p.shape} vs {first.shape}"
            )
    y = np.concatenate([p.data for p in parts], axis=1)
    splits = np.cumsum([p.shape[1] for p in parts])[:-1]

    def grad_fn(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=1))

    return _node(y, tuple(parts), grad_fn, "concat_channels")


def relu(x):
    mask = x.data > 0
    return _node(np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def clamp01(x):
    """Hard clamp to [0, 1]; gradient passes only through the interior."""
    mask = (x.data > 0.0) & (x.data < 1.0)
    return _node(np.clip(x.data, 0.0, 1.0), (x,), lambda g: (g * mask,), "clamp01")


def sigmoid(x):
    pos = x.data >= 0
    z = np.empty_like(x.data)
    z[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ez = np.exp(x.data[~pos])
    z[~pos] = ez / (1.0 + ez)
    return _node(z, (x,), lambda g: (g * z * (1.0 - z),), "sigmoid")


def softmax_channels(x):
    """Channelwise softmax: positive values summing to 1 at every pixel."""
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - dot),)

    return _node(y, (x,), grad_fn, "softmax_channels")


def log_softmax_channels(x):
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = shifted - lse
    sm = np.exp(y)

    def grad_fn(g):
        return (g - sm * g.sum(axis=1, keepdims=True),)

    return _node(y, (x,), grad_fn, "log_softmax_channels")


def safe_log(x, eps=1e-12):
    """log(x + eps); keeps zero-probability pixels finite."""
    return _node(np.log(x.data + eps), (x,), lambda g: (g / (x.data + eps),), "safe_log")


def scale_channels(x, weights):
    """Multiply channel i by the constant weights[i] (no gradient w.r.t. weights)."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != x.shape[1]:
        raise UsageError(f"scale_channels: need {x.shape[1]} weights, got shape {w.shape}")
    col = w.reshape(1, -1, 1, 1)
    return _node(x.data * col, (x,), lambda g: (g * col,), "scale_channels")


def renorm_channels(x, eps=1e-12):
    """Divide each pixel's channel vector by its sum (floored at eps)."""
    s = x.data.sum(axis=1, keepdims=True)
    se = np.maximum(s, eps)
    y = x.data / se

    def grad_fn(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return ((g - dot) / se,)

    return _node(y, (x,), grad_fn, "renorm_channels")
