"""Per-batch dynamic class weights and the weighted training losses.

Weights come from the pixel frequency of each class in the current batch:
a class holding exactly the average share of pixels gets weight 1/2, rarer
classes get more, and the result is clamped to [beta, alpha]. A class that
is absent from the batch gets weight 1 regardless of the clamp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    log_softmax_channels,
    mul,
    safe_log,
    scale,
    scale_channels,
    sub,
    sum_all,
)
from .errors import ConfigError, DataError, UsageError


@dataclass(frozen=True)
class ClassHistogram:
    """Pixel counts per class for one batch."""

    counts: np.ndarray
    total: int
    class_count: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        if counts.ndim != 1 or counts.shape[0] != self.class_count:
            raise DataError(f"histogram needs {self.class_count} counts, got shape {counts.shape}")
        if (counts < 0).any():
            raise DataError("histogram counts must be non-negative")
        if int(counts.sum()) != self.total:
            raise DataError(f"histogram counts sum to {int(counts.sum())}, expected {self.total}")
        if self.total <= 0:
            raise DataError("histogram total must be positive")


@dataclass(frozen=True)
class WeightConfig:
    """Lower and upper clamp thresholds for the per-class weights."""

    beta: float
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.beta < self.alpha):
            raise ConfigError(f"need 0 < beta < alpha, got beta={self.beta}, alpha={self.alpha}")


@dataclass(frozen=True)
class WeightVector:
    """Per-class loss multipliers."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    def __len__(self):
        return self.values.shape[0]

    def csv_row(self, iteration):
        return ",".join([str(iteration)] + [repr(float(v)) for v in self.values])


def uniform_weights(class_count):
    return WeightVector(np.ones(class_count))


def _check_labels(labels, class_count, op):
    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        raise DataError(f"{op}: labels must be integer, got dtype {labels.dtype}")
    bad = (labels < 0) | (labels >= class_count)
    if bad.any():
        pos = tuple(int(v) for v in np.argwhere(bad)[0])
        raise DataError(
            f"{op}: label {int(labels[pos])} at position {pos} outside [0, {class_count})"
        )
    return labels


def histogram(labels, class_count):
    """Count pixels per class over a whole label batch."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("histogram: empty label batch")
    labels = _check_labels(labels, class_count, "histogram")
    counts = np.bincount(labels.reshape(-1), minlength=class_count)
    return ClassHistogram(counts.astype(np.int64), int(labels.size), class_count)


def dynamic_weights(hist, cfg):
    """Weights total/(2*c*n_i) clamped to [beta, alpha]; absent classes get 1."""
    w = np.ones(hist.class_count)
    present = hist.counts > 0
    raw = hist.total / (2.0 * hist.class_count * hist.counts[present])
    w[present] = np.clip(raw, cfg.beta, cfg.alpha)
    return WeightVector(w)


def one_hot(labels, class_count):
    """Encode an integer label raster (B, H, W) as a constant (B, c, H, W) tensor."""
    labels = _check_labels(labels, class_count, "one_hot")
    data = np.eye(class_count)[labels].transpose(0, 3, 1, 2)
    return Tensor(np.ascontiguousarray(data))


def weighted_sq_loss(pred, target, w):
    """Per-channel weighted squared error, averaged over batch*H*W pixels."""
    if pred.shape != target.shape:
        raise UsageError(f"weighted_sq_loss: shape mismatch {pred.shape} vs {target.shape}")
    if len(w) != pred.shape[1]:
        raise UsageError(f"weighted_sq_loss: {pred.shape[1]} channels but {len(w)} weights")
    b, _, h, wd = pred.shape
    diff = sub(pred, target)
    per_channel = scale_channels(mul(diff, diff), w.values)
    return scale(sum_all(per_channel), 1.0 / (b * h * wd))


def nll_from_log_probs(log_probs, labels, w):
    """Mean over pixels of -w[label] * log_prob[label]."""
    class_count = log_probs.shape[1]
    b, _, h, wd = log_probs.shape
    picked = mul(one_hot(labels, class_count), log_probs)
    weighted = scale_channels(picked, w.values)
    return scale(sum_all(weighted), -1.0 / (b * h * wd))


def weighted_ce_loss(logits, labels, w):
    """Weighted cross-entropy from raw logits."""
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],) + logits.shape[2:]:
        raise UsageError(
            f"weighted_ce_loss: labels shape {labels.shape} does not match logits {logits.shape}"
        )
    if len(w) != logits.shape[1]:
        raise UsageError(f"weighted_ce_loss: {logits.shape[1]} channels but {len(w)} weights")
    return nll_from_log_probs(log_softmax_channels(logits), labels, w)


def weighted_ce_from_probs(probs, labels, w, eps=1e-12):
    """Weighted cross-entropy on probability maps (post-refinement path)."""
    return nll_from_log_probs(safe_log(probs, eps), labels, w)
