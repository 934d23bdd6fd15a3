"""Binary PPM (P6) / PGM (P5) reading and writing.

Images travel as (3, H, W) float64 arrays on the 1/255 grid; label rasters
as (H, W) int64 with the class index stored as the gray value. Maxval is
always 255.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def _read_header(data, magic):
    if not data.startswith(magic):
        raise DataError(f"expected {magic.decode()} file, got {data[:2]!r}")
    pos = len(magic)
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise DataError(f"only maxval 255 is supported, got {maxval}")
    return width, height, pos


def write_ppm(path, image):
    """Write a (3, H, W) float image in [0, 1] as binary P6."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise DataError(f"write_ppm: need (3, H, W) image, got {image.shape}")
    raw = np.rint(image * 255.0).clip(0, 255).astype(np.uint8)
    h, w = image.shape[1], image.shape[2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(raw.transpose(1, 2, 0).tobytes())


def read_ppm(path):
    with open(path, "rb") as f:
        data = f.read()
    w, h, pos = _read_header(data, b"P6")
    raw = np.frombuffer(data, dtype=np.uint8, count=3 * w * h, offset=pos)
    return raw.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float64) / 255.0


def write_pgm(path, labels):
    """Write an (H, W) integer raster as binary P5 with the value as gray level."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise DataError(f"write_pgm: need (H, W) raster, got {labels.shape}")
    if labels.min() < 0 or labels.max() > 255:
        raise DataError("write_pgm: values must fit in a byte")
    h, w = labels.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(labels.astype(np.uint8).tobytes())


def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    w, h, pos = _read_header(data, b"P5")
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return raw.reshape(h, w).astype(np.int64)
