"""Confusion-matrix evaluation of label maps."""
import numpy as np

from .pseudolabel import IGNORE
from .tensor import DimensionError

NA = "n/a"


class ConfusionMatrix:
    """C x C pixel counts, rows = ground truth, columns = prediction.

    ``missed[c]`` counts ground-truth pixels of class c that the prediction
    left unlabeled (IGNORE); it only grows when accumulating with
    ``unlabeled="miss"`` and then enters recall and IoU as false negatives.
    """

    def __init__(self, n_classes, counts=None, missed=None):
        self.n_classes = n_classes
        if counts is None:
            counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        if missed is None:
            missed = np.zeros(n_classes, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.missed = np.asarray(missed, dtype=np.int64)

    def accumulate(self, pred, gt, unlabeled="exclude"):
        if unlabeled not in ("exclude", "miss"):
            raise ValueError(f"unlabeled must be 'exclude' or 'miss', got {unlabeled!r}")
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise DimensionError(f"prediction {pred.shape} vs ground truth {gt.shape}")
        keep = (gt != IGNORE) & (pred != IGNORE)
        g = gt[keep].astype(np.int64)
        p = pred[keep].astype(np.int64)
        if g.size and max(g.max(), p.max()) >= self.n_classes:
            raise ValueError("label exceeds class count")
        self.counts += np.bincount(g * self.n_classes + p,
                                   minlength=self.n_classes ** 2).reshape(self.counts.shape)
        if unlabeled == "miss":
            lost = gt[(gt != IGNORE) & (pred == IGNORE)].astype(np.int64)
            if lost.size and lost.max() >= self.n_classes:
                raise ValueError("label exceeds class count")
            self.missed += np.bincount(lost, minlength=self.n_classes)
        return self

    def __add__(self, other):
        return ConfusionMatrix(self.n_classes, self.counts + other.counts,
                               self.missed + other.missed)

    @property
    def total(self):
        return int(self.counts.sum() + self.missed.sum())


def accumulate(cm, pred, gt, unlabeled="exclude"):
    return cm.accumulate(pred, gt, unlabeled)


def _ratio(num, den):
    out = np.full(num.shape, np.nan)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def per_class_iou(cm):
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    return _ratio(tp, c.sum(axis=0) + c.sum(axis=1) + cm.missed - tp)


def _mean(values):
    values = values[~np.isnan(values)]
    return float(values.mean()) if values.size else float("nan")


def miou(cm):
    """Mean IoU over classes with a non-zero denominator; NaN when none."""
    return _mean(per_class_iou(cm))


def precision_recall(cm):
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    return _mean(_ratio(tp, c.sum(axis=0))), _mean(_ratio(tp, c.sum(axis=1) + cm.missed))


def format_metric(x):
    return NA if x is None or np.isnan(x) else f"{x:.4f}"
