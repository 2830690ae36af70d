"""Task losses with analytic gradients, prediction refinement, and gradient checking."""
from dataclasses import dataclass

import numpy as np

from .pseudolabel import IGNORE
from .tensor import DimensionError

EPS = 1e-7


@dataclass
class LossValue:
    value: float
    gradient: np.ndarray


@dataclass
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be non-negative")


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def multilabel_soft_margin(logits, targets):
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"logits {x.shape} vs targets {y.shape}")
    per_class = -(y * _log_sigmoid(x) + (1.0 - y) * _log_sigmoid(-x))
    grad = (np.exp(_log_sigmoid(x)) - y) / x.size
    return LossValue(float(per_class.mean()), grad)


def bce_pixelwise(pred, target):
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise DimensionError(f"prediction {p.shape} vs target {t.shape}")
    pc = np.clip(p, EPS, 1.0 - EPS)
    loss = -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))
    grad = (pc - t) / (pc * (1.0 - pc) * p.size)
    grad[(p < EPS) | (p > 1.0 - EPS)] = 0.0
    return LossValue(float(loss.mean()), grad)


def ce_pixelwise(pred_probs, target):
    """Mean -log p[label] over labeled pixels; IGNORE pixels add nothing."""
    p = np.asarray(pred_probs, dtype=np.float64)
    t = np.asarray(target)
    if p.shape[1:] != t.shape:
        raise DimensionError(f"prediction {p.shape} vs target {t.shape}")
    grad = np.zeros_like(p)
    valid = t != IGNORE
    n = int(valid.sum())
    if n == 0:
        return LossValue(0.0, grad)
    if t[valid].max() >= p.shape[0]:
        raise ValueError("target label exceeds class count")
    yy, xx = np.nonzero(valid)
    cls = t[valid].astype(int)
    picked = p[cls, yy, xx]
    pc = np.clip(picked, EPS, None)
    grad[cls, yy, xx] = np.where(picked < EPS, 0.0, -1.0 / (pc * n))
    return LossValue(float(-np.log(pc).sum() / n), grad)


LOSS_TERMS = ("cls", "sal", "sal_ref_u", "sal_ref_p", "seg", "seg_ref_u", "seg_ref_p")


def term_weight(name, w):
    if name == "cls":
        return w.lambda1
    return w.lambda2 if name.startswith("sal") else w.lambda3


def total_loss(components, w=None):
    """Weighted sum of the seven task terms.

    Returns a LossValue whose gradient is a dict of the per-term gradients
    scaled by their weights.
    """
    w = w or LossWeights()
    missing = [k for k in LOSS_TERMS if k not in components]
    if missing:
        raise ValueError(f"missing loss terms: {missing}")
    value = 0.0
    grads = {}
    for name in LOSS_TERMS:
        term = components[name]
        lam = term_weight(name, w)
        if isinstance(term, LossValue):
            value += lam * term.value
            grads[name] = lam * term.gradient
        else:
            value += lam * float(term)
    return LossValue(value, grads)


def refine_prediction_unary(p, u, renormalize=True):
    """Residual unary refinement: p(i) + sum_j u(j) p(j).

    With ``renormalize`` a multi-channel prediction is divided by its per-pixel
    channel sum; a single-channel (saliency) prediction is treated as the
    foreground half of a two-way distribution and halved.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape[1:] != tuple(u.spatial):
        raise DimensionError(f"prediction {p.shape} does not match affinity {u.spatial}")
    context = p.reshape(p.shape[0], -1) @ u.map
    out = p + context[:, None, None]
    if not renormalize:
        return out
    if p.shape[0] == 1:
        return out / 2.0
    return out / out.sum(axis=0, keepdims=True)


def refine_prediction_pairwise(p, a):
    p = np.asarray(p, dtype=np.float64)
    if p.shape[1:] != tuple(a.spatial):
        raise DimensionError(f"prediction {p.shape} does not match affinity {a.spatial}")
    return (p.reshape(p.shape[0], -1) @ a.matrix.T).reshape(p.shape)


def numerical_gradient(fn, point, h=1e-3, coords=None):
    """Central differences of scalar `fn` at `point` (optionally a subset of flat coords)."""
    x = np.array(point, dtype=np.float64, order="C")
    flat = x.reshape(-1)
    idx = range(flat.size) if coords is None else coords
    grad = np.zeros_like(flat)
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        f_plus = fn(x)
        flat[i] = orig - h
        f_minus = fn(x)
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(x.shape)


def relative_error(analytic, numeric, floor=1e-6):
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def finite_diff_check(fn, point, h=1e-3, coords=None):
    """Max relative error between `fn`'s analytic gradient and central differences.

    `fn(x)` returns ``(value, gradient)``; when ``coords`` is given only those
    flat coordinates are compared.
    """
    point = np.asarray(point, dtype=np.float64)
    _, analytic = fn(point)
    numeric = numerical_gradient(lambda x: fn(x)[0], point, h, coords)
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
    numeric = numeric.reshape(-1)
    if coords is not None:
        coords = list(coords)
        analytic, numeric = analytic[coords], numeric[coords]
    return relative_error(analytic, numeric)
