"""Segmentation evaluation: confusion matrix, pixel accuracy, per-class IoU.

Classes absent from both truth and prediction are excluded from the mpacc
and mIoU means (their per-class entries are NaN), so sweeps on scenes that
miss a class stay comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UsageError


class ConfusionMatrix:
    """c x c pixel counts; rows are ground truth, columns are prediction."""

    def __init__(self, class_count, counts=None):
        self.class_count = class_count
        if counts is None:
            self.counts = np.zeros((class_count, class_count), dtype=np.int64)
        else:
            counts = np.asarray(counts, dtype=np.int64)
            if counts.shape != (class_count, class_count):
                raise UsageError(f"counts shape {counts.shape} != ({class_count}, {class_count})")
            self.counts = counts

    @property
    def total(self):
        return int(self.counts.sum())

    def accumulate(self, pred, truth):
        """Add one (pred, truth) raster pair; shapes and label ranges must be valid."""
        pred = np.asarray(pred)
        truth = np.asarray(truth)
        if pred.shape != truth.shape:
            raise DataError(f"accumulate: shape mismatch {pred.shape} vs {truth.shape}")
        for name, arr in (("pred", pred), ("truth", truth)):
            bad = (arr < 0) | (arr >= self.class_count)
            if bad.any():
                pos = tuple(int(v) for v in np.argwhere(bad)[0])
                raise DataError(
                    f"accumulate: {name} label {int(arr[pos])} at {pos} outside [0, {self.class_count})"
                )
        flat = self.class_count * truth.reshape(-1) + pred.reshape(-1)
        self.counts += np.bincount(flat, minlength=self.class_count ** 2).reshape(
            self.class_count, self.class_count
        )
        return self

    def merge(self, other):
        """Elementwise sum with another matrix over the same classes."""
        if other.class_count != self.class_count:
            raise UsageError("merge: class counts differ")
        return ConfusionMatrix(self.class_count, self.counts + other.counts)


@dataclass
class MetricsReport:
    pixel_acc: float
    mean_class_acc: float
    mean_iou: float
    per_class_acc: np.ndarray = field(repr=False)
    per_class_iou: np.ndarray = field(repr=False)

    @staticmethod
    def csv_header(class_count):
        return "run,pacc,mpacc,miou," + ",".join(f"iou_{i}" for i in range(class_count))

    def csv_row(self, run_id):
        cells = [str(run_id), repr(self.pixel_acc), repr(self.mean_class_acc), repr(self.mean_iou)]
        cells += [repr(float(v)) for v in self.per_class_iou]
        return ",".join(cells)


def report(cm):
    """Reduce a confusion matrix to pacc / mpacc / per-class IoU / mIoU."""
    total = cm.total
    if total == 0:
        raise UsageError("report: empty confusion matrix")
    diag = np.diag(cm.counts).astype(np.float64)
    row = cm.counts.sum(axis=1).astype(np.float64)
    col = cm.counts.sum(axis=0).astype(np.float64)

    per_class_acc = np.full(cm.class_count, np.nan)
    seen = row > 0
    per_class_acc[seen] = diag[seen] / row[seen]

    union = row + col - diag
    per_class_iou = np.full(cm.class_count, np.nan)
    present = union > 0
    per_class_iou[present] = diag[present] / union[present]

    return MetricsReport(
        pixel_acc=float(diag.sum() / total),
        mean_class_acc=float(per_class_acc[seen].mean()) if seen.any() else float("nan"),
        mean_iou=float(per_class_iou[present].mean()) if present.any() else float("nan"),
        per_class_acc=per_class_acc,
        per_class_iou=per_class_iou,
    )
