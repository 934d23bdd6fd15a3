"""Residual fusion blocks: a processed path fused elementwise with identity.

Six structures are enumerated. The processed path is one to two 3x3
convolutions (the second dilated) optionally followed by a 3x3 average
pool, everything stride 1 and padded to preserve shape. The path ends with
a clamp to [0, 1] (or a sigmoid) so that fusing two probability-like maps
stays in [0, 1]; a final channelwise renormalization puts the result back
on the simplex.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ConvSpec, Tensor, avg_pool2d, clamp01, conv2d, fuse, renorm_channels, sigmoid
from .errors import ConfigError

STRUCTURES = ("a", "b", "c", "d", "e", "f")

_CONV_1 = ("conv", 1)   # k3, d1, p1, s1
_CONV_2 = ("conv", 2)   # k3, d2, p2, s1
_POOL = ("pool",)       # k3, p1, s1

_LAYERS = {
    "a": (_CONV_1,),
    "b": (_CONV_1,),
    "c": (_CONV_1, _CONV_2),
    "d": (_CONV_1, _CONV_2),
    "e": (_CONV_1, _CONV_2, _POOL),
    "f": (_CONV_1, _CONV_2, _POOL),
}

_FUSION = {
    "a": "average",
    "b": "multiply",
    "c": "average",
    "d": "multiply",
    "e": "average",
    "f": "multiply",
}


@dataclass(frozen=True)
class RFBSpec:
    """One of the six enumerated structures plus the path activation choice."""

    structure: str
    path_activation: str = "clamp"

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ConfigError(f"unknown structure {self.structure!r}; pick one of {STRUCTURES}")
        if self.path_activation not in ("clamp", "sigmoid"):
            raise ConfigError(f"path_activation must be 'clamp' or 'sigmoid', got {self.path_activation!r}")

    @property
    def fusion(self):
        return _FUSION[self.structure]

    @property
    def layers(self):
        return _LAYERS[self.structure]

    @property
    def token(self):
        return self.structure


class RFB:
    """A built block: seeded conv parameters for one structure."""

    def __init__(self, spec, channels, convs):
        self.spec = spec
        self.channels = channels
        self.convs = convs  # list of (weights Tensor, bias Tensor, ConvSpec)

    def parameters(self):
        params = {}
        for i, (w, b, _) in enumerate(self.convs):
            params[f"rfb.conv{i}.weight"] = w
            params[f"rfb.conv{i}.bias"] = b
        return params


def build_rfb(spec, channels, seed):
    """Instantiate one structure at the given channel width, seeded."""
    if channels < 1:
        raise ConfigError(f"rfb channels must be >= 1, got {channels}")
    rng = np.random.default_rng(seed)
    convs = []
    for layer in spec.layers:
        if layer[0] != "conv":
            continue
        d = layer[1]
        cspec = ConvSpec(channels, channels, 3, dilation=d, padding=d, stride=1)
        bound = 1.0 / np.sqrt(channels * 9)
        w = Tensor(rng.uniform(-bound, bound, size=(channels, channels, 3, 3)), requires_grad=True)
        b = Tensor(np.zeros((1, channels, 1, 1)), requires_grad=True)
        convs.append((w, b, cspec))
    return RFB(spec, channels, convs)


def apply_rfb(rfb, x, renormalize=True):
    """fuse(x, processed_path(x)); same shape as x, differentiable end to end."""
    if x.shape[1] != rfb.channels:
        raise ConfigError(f"rfb built for {rfb.channels} channels, input has {x.shape[1]}")
    path = x
    conv_idx = 0
    for layer in rfb.spec.layers:
        if layer[0] == "conv":
            w, b, cspec = rfb.convs[conv_idx]
            path = conv2d(path, w, b, cspec)
            conv_idx += 1
        else:
            path = avg_pool2d(path, 3, padding=1, stride=1)
    path = clamp01(path) if rfb.spec.path_activation == "clamp" else sigmoid(path)
    fused = fuse(x, path, rfb.spec.fusion)
    return renorm_channels(fused) if renormalize else fused


# ---------------------------------------------------------------------------
# boundary analysis


def boundary_distance_map(labels):
    """Distance 1 at pixels touching a different region, growing outward (L1).

    Pixels in an image with a single region get distance 0 (no boundary).
    """
    labels = np.asarray(labels)
    h, w = labels.shape
    dist = np.zeros((h, w), dtype=np.int64)
    queue = deque()
    diff = np.zeros((h, w), dtype=bool)
    diff[:-1, :] |= labels[:-1, :] != labels[1:, :]
    diff[1:, :] |= labels[1:, :] != labels[:-1, :]
    diff[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    diff[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    for y, x in np.argwhere(diff):
        dist[y, x] = 1
        queue.append((int(y), int(x)))
    while queue:
        y, x = queue.popleft()
        d = dist[y, x] + 1
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < h and 0 <= nx < w and dist[ny, nx] == 0:
                dist[ny, nx] = d
                queue.append((ny, nx))
    return dist


@dataclass
class BoundaryReport:
    """Mean absolute change stratified by distance to the nearest region boundary."""

    distances: np.ndarray
    mean_change: np.ndarray
    counts: np.ndarray = field(repr=False)

    def at(self, distance):
        idx = np.nonzero(self.distances == distance)[0]
        if idx.size == 0:
            raise KeyError(f"no pixels at boundary distance {distance}")
        return float(self.mean_change[idx[0]])


def boundary_effect(rfb, x, labels, exclude_border=0):
    """How much the block changes pixels, as a function of boundary distance.

    ``exclude_border`` drops a frame of pixels around the image edge so
    zero-padding artifacts do not leak into far-distance strata.
    """
    labels = np.asarray(labels)
    out = apply_rfb(rfb, x)
    change = np.abs(out.data - x.data).mean(axis=1)  # (B, H, W)
    sums = {}
    counts = {}
    m = exclude_border
    for b in range(labels.shape[0]):
        dist = boundary_distance_map(labels[b])
        interior = np.ones_like(dist, dtype=bool)
        if m > 0:
            interior[:] = False
            interior[m:-m, m:-m] = True
        valid = (dist > 0) & interior
        for d in np.unique(dist[valid]):
            sel = valid & (dist == d)
            sums[int(d)] = sums.get(int(d), 0.0) + float(change[b][sel].sum())
            counts[int(d)] = counts.get(int(d), 0) + int(sel.sum())
    distances = np.array(sorted(sums), dtype=np.int64)
    totals = np.array([sums[int(d)] for d in distances])
    n = np.array([counts[int(d)] for d in distances], dtype=np.int64)
    return BoundaryReport(distances, totals / np.maximum(n, 1), n)
