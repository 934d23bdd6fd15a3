"""Deterministic generator of imbalanced parking-scene style images.

Six classes: background, parking-slot markings, then white/yellow x
solid/dashed lane lines. Lines are stamped with an integer Bresenham brush
(no anti-aliasing) so the label raster is pixel-exact, and images are
quantized to the 1/255 grid so a PPM dump reloads bit-identically.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

from . import pnm
from .errors import ConfigError, DataError

CLASS_COUNT = 6
CLASS_NAMES = (
    "background",
    "parking",
    "white_solid",
    "white_dashed",
    "yellow_solid",
    "yellow_dashed",
)

# u8 palette; images are these values / 255 plus optional noise
PALETTE_U8 = np.array(
    [
        (51, 51, 51),     # background gray
        (230, 230, 230),  # parking-slot gray
        (255, 255, 255),  # white solid
        (255, 255, 255),  # white dashed
        (255, 217, 26),   # yellow solid
        (255, 217, 26),   # yellow dashed
    ],
    dtype=np.uint8,
)

DASHED_CLASSES = (3, 5)


@dataclass(frozen=True)
class SceneSpec:
    size: tuple = (96, 96)
    line_width: int = 2
    dash_period: int = 8
    dash_duty: float = 0.5
    lines_per_class: tuple = (1, 2)
    noise_std: float = 0.02
    seed: int = 0
    absent_classes: tuple = ()

    def __post_init__(self):
        h, w = self.size
        if h < 16 or w < 16:
            raise ConfigError(f"scene size {self.size} too small")
        if self.line_width < 1 or self.dash_period < 2:
            raise ConfigError("line_width must be >= 1 and dash_period >= 2")
        if not (0.0 < self.dash_duty < 1.0):
            raise ConfigError(f"dash_duty must be in (0, 1), got {self.dash_duty}")
        lo, hi = self.lines_per_class
        if not (0 <= lo <= hi):
            raise ConfigError(f"bad lines_per_class range {self.lines_per_class}")
        for cls in self.absent_classes:
            if not (1 <= cls < CLASS_COUNT):
                raise ConfigError(f"absent class {cls} outside [1, {CLASS_COUNT})")


def line_points(y0, x0, y1, x1):
    """Integer Bresenham walk from (y0, x0) to (y1, x1), inclusive."""
    points = []
    dy = abs(y1 - y0)
    dx = abs(x1 - x0)
    sy = 1 if y1 >= y0 else -1
    sx = 1 if x1 >= x0 else -1
    err = dx - dy
    y, x = y0, x0
    while True:
        points.append((y, x))
        if y == y1 and x == x1:
            break
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy
    return points


def dash_on(index, period, duty):
    """Whether point ``index`` along a dashed stroke is filled."""
    return (index % period) < duty * period


def _stamp(labels, points, width, cls, keep=None):
    h, w = labels.shape
    half = width // 2
    for t, (y, x) in enumerate(points):
        if keep is not None and not keep(t):
            continue
        r0 = max(0, y - half)
        c0 = max(0, x - half)
        labels[r0:min(h, y - half + width), c0:min(w, x - half + width)] = cls


def _draw_scene(spec, rng):
    h, w = spec.size
    labels = np.zeros((h, w), dtype=np.int64)
    lo, hi = spec.lines_per_class
    for cls in range(1, CLASS_COUNT):
        if cls in spec.absent_classes:
            continue
        count = int(rng.integers(lo, hi + 1))
        for _ in range(count):
            if cls == 1:
                # parking-slot marking: rectangle outline
                rw = int(rng.integers(w // 6, w // 3 + 1))
                rh = int(rng.integers(h // 6, h // 3 + 1))
                x0 = int(rng.integers(0, w - rw))
                y0 = int(rng.integers(0, h - rh))
                edges = (
                    line_points(y0, x0, y0, x0 + rw - 1),
                    line_points(y0 + rh - 1, x0, y0 + rh - 1, x0 + rw - 1),
                    line_points(y0, x0, y0 + rh - 1, x0),
                    line_points(y0, x0 + rw - 1, y0 + rh - 1, x0 + rw - 1),
                )
                for edge in edges:
                    _stamp(labels, edge, spec.line_width, cls)
            else:
                y0, y1 = (int(v) for v in rng.integers(0, h, size=2))
                x0, x1 = (int(v) for v in rng.integers(0, w, size=2))
                points = line_points(y0, x0, y1, x1)
                keep = None
                if cls in DASHED_CLASSES:
                    keep = lambda t: dash_on(t, spec.dash_period, spec.dash_duty)
                _stamp(labels, points, spec.line_width, cls, keep)
    return labels


def _render(spec, labels, rng):
    palette = PALETTE_U8.astype(np.float64) / 255.0
    image = palette[labels].transpose(2, 0, 1)
    if spec.noise_std > 0:
        image = image + rng.normal(0.0, spec.noise_std, size=image.shape)
    image = np.clip(image, 0.0, 1.0)
    return np.rint(image * 255.0) / 255.0


def generate(spec, n):
    """Produce n (image, labels) pairs; a pure function of (spec, n)."""
    scenes = []
    for idx in range(n):
        rng = np.random.default_rng((spec.seed, idx))
        labels = _draw_scene(spec, rng)
        scenes.append((_render(spec, labels, rng), labels))
    return scenes


def split(dataset, fractions):
    """Deterministic positional split into three disjoint covering parts."""
    if len(fractions) != 3:
        raise ConfigError(f"need exactly three fractions, got {len(fractions)}")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must be non-negative and sum to 1, got {fractions}")
    n = len(dataset)
    sizes = [int(f * n) for f in fractions]
    for i in range(n - sum(sizes)):
        sizes[i % 3] += 1
    a = sizes[0]
    b = a + sizes[1]
    return dataset[:a], dataset[a:b], dataset[b:]


def background_fraction(dataset):
    pixels = sum(labels.size for _, labels in dataset)
    bg = sum(int((labels == 0).sum()) for _, labels in dataset)
    return bg / pixels


def dump_dataset(directory, dataset):
    """Write scene_%05d.ppm / .pgm pairs."""
    os.makedirs(directory, exist_ok=True)
    for i, (image, labels) in enumerate(dataset):
        pnm.write_ppm(os.path.join(directory, f"scene_{i:05d}.ppm"), image)
        pnm.write_pgm(os.path.join(directory, f"scene_{i:05d}.pgm"), labels)


def load_dataset(directory, class_count=CLASS_COUNT):
    """Reload scene_%05d.ppm / .pgm pairs written by dump_dataset."""
    names = sorted(f for f in os.listdir(directory) if re.fullmatch(r"scene_\d{5}\.ppm", f))
    if not names:
        raise DataError(f"no scene_*.ppm files in {directory}")
    dataset = []
    for name in names:
        image = pnm.read_ppm(os.path.join(directory, name))
        labels = pnm.read_pgm(os.path.join(directory, name[:-4] + ".pgm"))
        if labels.max() >= class_count:
            raise DataError(f"{name}: label {int(labels.max())} outside [0, {class_count})")
        dataset.append((image, labels))
    return dataset
