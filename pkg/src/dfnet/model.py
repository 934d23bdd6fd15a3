"""Desk-scale segmentation network.

Backbone: a conv stem, then four densely connected blocks named layer1
through layer4, with a 2x average-pool transition after each of the first
three blocks (total stride 8). Decoder: pyramid pooling over the backbone
features (per-bin adaptive pool, 1x1 conv, bilinear back to backbone
resolution, channel concat), a small conv head down to class channels, and
a bilinear enlargement to input size. A residual fusion block can refine
the softmax output, and an auxiliary 1x1-conv head can be tapped after
layer2 or layer3 to add a secondary loss term during training.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ConvSpec,
    Tensor,
    adaptive_avg_pool,
    add,
    avg_pool2d,
    bilinear_upsample,
    concat_channels,
    conv2d,
    relu,
    scale,
    softmax_channels,
)
from .errors import ConfigError, DataError, UsageError
from .rfb import RFBSpec, apply_rfb, build_rfb
from .weights import (
    one_hot,
    weighted_ce_from_probs,
    weighted_ce_loss,
    weighted_sq_loss,
)

STRIDE = 8
AUX_TAPS = ("after_layer2", "after_layer3", "none")
LOSS_KINDS = ("weighted_ce", "weighted_sq")

CHECKPOINT_MAGIC = b"DFNK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    class_count: int = 6
    growth_rate: int = 8
    layers_per_block: tuple = (2, 2, 2, 2)
    pyramid_bins: tuple = (1, 2, 3, 6)
    rfb: RFBSpec | None = None
    aux_tap: str = "none"
    aux_weight: float = 0.4
    input_size: tuple = (96, 96)

    def __post_init__(self):
        if self.class_count < 2:
            raise ConfigError(f"class_count must be >= 2, got {self.class_count}")
        if self.growth_rate < 1:
            raise ConfigError(f"growth_rate must be >= 1, got {self.growth_rate}")
        if len(self.layers_per_block) != 4 or any(n < 1 for n in self.layers_per_block):
            raise ConfigError(f"layers_per_block needs four positive entries, got {self.layers_per_block}")
        if self.aux_tap not in AUX_TAPS:
            raise ConfigError(f"aux_tap must be one of {AUX_TAPS}, got {self.aux_tap!r}")
        if not 0.0 <= self.aux_weight <= 1.0:
            raise ConfigError(f"aux_weight must be in [0, 1], got {self.aux_weight}")
        h, w = self.input_size
        if h % STRIDE or w % STRIDE:
            raise ConfigError(f"input size {self.input_size} must be divisible by {STRIDE}")
        bh, bw = h // STRIDE, w // STRIDE
        if not self.pyramid_bins:
            raise ConfigError("pyramid_bins must not be empty")
        for n in self.pyramid_bins:
            if n < 1 or n > bh or n > bw:
                raise ConfigError(
                    f"pyramid bin {n} does not fit the {bh}x{bw} backbone output"
                )

    @property
    def backbone_channels(self):
        return 2 * self.growth_rate + self.growth_rate * sum(self.layers_per_block)

    @property
    def backbone_size(self):
        return (self.input_size[0] // STRIDE, self.input_size[1] // STRIDE)


@dataclass
class ModelOutput:
    main_logits: Tensor
    aux_logits: Tensor | None
    probs: Tensor


class DFNet:
    """Parameter container; all computation lives in ``forward``."""

    def __init__(self, cfg, stem, blocks, pyramid, head, aux, rfb):
        self.cfg = cfg
        self.stem = stem
        self.blocks = blocks
        self.pyramid = pyramid
        self.head = head
        self.aux = aux
        self.rfb = rfb

    def parameters(self):
        """Named parameters in a fixed order; the order defines the checkpoint layout."""
        params = {}

        def put(name, conv):
            params[f"{name}.weight"], params[f"{name}.bias"] = conv[0], conv[1]

        put("stem", self.stem)
        for i, block in enumerate(self.blocks):
            for j, conv in enumerate(block):
                put(f"layer{i + 1}.conv{j}", conv)
        for k, conv in enumerate(self.pyramid):
            put(f"pyramid.{k}", conv)
        for k, conv in enumerate(self.head):
            put(f"head.{k}", conv)
        if self.aux is not None:
            put("aux", self.aux)
        if self.rfb is not None:
            params.update(self.rfb.parameters())
        return params


def _init_conv(rng, spec):
    fan_in = spec.in_channels * spec.kernel_size * spec.kernel_size
    bound = 1.0 / np.sqrt(fan_in)
    shape = (spec.out_channels, spec.in_channels, spec.kernel_size, spec.kernel_size)
    w = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)
    b = Tensor(np.zeros((1, spec.out_channels, 1, 1)), requires_grad=True)
    return (w, b, spec)


def build_model(cfg, seed):
    """Seeded uniform(+-1/sqrt(fan_in)) weights, zero biases, fixed draw order."""
    rng = np.random.default_rng(seed)
    g = cfg.growth_rate

    stem = _init_conv(rng, ConvSpec(3, 2 * g, 3, padding=1))
    blocks = []
    ch = 2 * g
    for depth in cfg.layers_per_block:
        block = []
        for _ in range(depth):
            block.append(_init_conv(rng, ConvSpec(ch, g, 3, padding=1)))
            ch += g
        blocks.append(tuple(block))

    pyr_ch = max(1, ch // 4)
    pyramid = tuple(_init_conv(rng, ConvSpec(ch, pyr_ch, 1)) for _ in cfg.pyramid_bins)
    concat_ch = ch + pyr_ch * len(cfg.pyramid_bins)
    head = (
        _init_conv(rng, ConvSpec(concat_ch, 4 * g, 3, padding=1)),
        _init_conv(rng, ConvSpec(4 * g, cfg.class_count, 1)),
    )

    aux = None
    if cfg.aux_tap != "none":
        tap_block = 2 if cfg.aux_tap == "after_layer2" else 3
        tap_ch = 2 * g + g * sum(cfg.layers_per_block[:tap_block])
        aux = _init_conv(rng, ConvSpec(tap_ch, cfg.class_count, 1))

    rfb = None
    if cfg.rfb is not None:
        rfb = build_rfb(cfg.rfb, cfg.class_count, int(rng.integers(2**32)))

    return DFNet(cfg, stem, tuple(blocks), pyramid, head, aux, rfb)


def parameter_count(model):
    return int(sum(p.data.size for p in model.parameters().values()))


def _conv_relu(x, conv):
    w, b, spec = conv
    return relu(conv2d(x, w, b, spec))


def forward(model, images):
    """Images (batch, 3, H, W) in [0, 1] at the configured size -> ModelOutput."""
    cfg = model.cfg
    h, w = cfg.input_size
    if images.shape[1] != 3 or images.shape[2:] != (h, w):
        raise UsageError(
            f"forward expects (batch, 3, {h}, {w}) images, got {images.shape}"
        )
    lo, hi = float(images.data.min()), float(images.data.max())
    if lo < 0.0 or hi > 1.0:
        raise UsageError(f"image values must lie in [0, 1], got range [{lo}, {hi}]")

    x = _conv_relu(images, model.stem)
    taps = []
    for i, block in enumerate(model.blocks):
        for conv in block:
            x = concat_channels([x, _conv_relu(x, conv)])
        taps.append(x)
        if i < 3:
            x = avg_pool2d(x, 2, padding=0, stride=2)
    backbone = x

    bh, bw = backbone.shape[2], backbone.shape[3]
    parts = [backbone]
    for n, (pw, pb, pspec) in zip(cfg.pyramid_bins, model.pyramid):
        pooled = adaptive_avg_pool(backbone, (n, n))
        parts.append(bilinear_upsample(conv2d(pooled, pw, pb, pspec), (bh, bw)))
    x = concat_channels(parts)

    x = _conv_relu(x, model.head[0])
    hw, hb, hspec = model.head[1]
    x = conv2d(x, hw, hb, hspec)
    main_logits = bilinear_upsample(x, (h, w))
    probs = softmax_channels(main_logits)
    if model.rfb is not None:
        probs = apply_rfb(model.rfb, probs)

    aux_logits = None
    if model.aux is not None:
        tap = taps[1] if cfg.aux_tap == "after_layer2" else taps[2]
        aw, ab, aspec = model.aux
        aux_logits = bilinear_upsample(conv2d(tap, aw, ab, aspec), (h, w))

    return ModelOutput(main_logits, aux_logits, probs)


def training_loss(output, labels, w, cfg, loss_kind="weighted_ce"):
    """main + aux_weight * aux, both terms under the same weight vector.

    With a fusion block configured the main term reads the refined
    probabilities (log of the renormalized output), so the block trains
    jointly; without one it reads the decoder logits directly.
    """
    if loss_kind not in LOSS_KINDS:
        raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}, got {loss_kind!r}")

    def prob_loss(probs):
        return weighted_sq_loss(probs, one_hot(labels, cfg.class_count), w)

    if loss_kind == "weighted_sq":
        main = prob_loss(output.probs)
    elif cfg.rfb is not None:
        main = weighted_ce_from_probs(output.probs, labels, w)
    else:
        main = weighted_ce_loss(output.main_logits, labels, w)

    if output.aux_logits is None:
        return main
    if loss_kind == "weighted_sq":
        aux = prob_loss(softmax_channels(output.aux_logits))
    else:
        aux = weighted_ce_loss(output.aux_logits, labels, w)
    return add(main, scale(aux, cfg.aux_weight))


class SGD:
    """Classical momentum: v <- mu*v + g, p <- p - lr*v."""

    def __init__(self, params, lr, momentum=0.0):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        self.params = dict(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self):
        for name, p in self.params.items():
            if p.grad is None:
                continue
            v = self.velocity[name]
            v *= self.momentum
            v += p.grad
            p.data -= self.lr * v

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


# ---------------------------------------------------------------------------
# checkpoint io


def save_checkpoint(path, model):
    """Binary dump of the named parameters; round-trips bit-exactly."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<H", CHECKPOINT_VERSION))
        for name, p in model.parameters().items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<4I", *p.data.shape))
            f.write(p.data.astype("<f8", copy=False).tobytes())


def read_checkpoint(path):
    """Checkpoint file -> dict of name -> rank-4 array."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from None
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic {blob[:4]!r})")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    params = {}
    offset = 6

    def take(count):
        nonlocal offset
        if offset + count > len(blob):
            raise DataError(f"{path}: truncated checkpoint record")
        piece = blob[offset:offset + count]
        offset += count
        return piece

    while offset < len(blob):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        shape = struct.unpack("<4I", take(16))
        data = np.frombuffer(take(int(np.prod(shape)) * 8), dtype="<f8")
        params[name] = data.reshape(shape).copy()
    return params


def load_checkpoint(path, model):
    """Restore parameters in place; names and shapes must match the model."""
    saved = read_checkpoint(path)
    current = model.parameters()
    missing = sorted(set(current) - set(saved))
    extra = sorted(set(saved) - set(current))
    if missing or extra:
        raise DataError(
            f"{path}: parameter names do not match the model "
            f"(missing {missing or 'none'}, unexpected {extra or 'none'})"
        )
    for name, p in current.items():
        if saved[name].shape != p.data.shape:
            raise DataError(
                f"{path}: shape mismatch for {name}: "
                f"file has {saved[name].shape}, model has {p.data.shape}"
            )
        p.data = saved[name]
