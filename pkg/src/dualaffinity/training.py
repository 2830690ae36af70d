"""Stage-wise SGD training of the toy network."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .losses import LossWeights
from .model import BACKBONE_PARAMS, CLS_PARAMS, backward, cls_loss, multitask_loss
from .pseudolabel import labelmap_from_saliency
from .tensor import DimensionError

log = logging.getLogger(__name__)


@dataclass
class StageConfig:
    max_epochs: int = 15
    patience: int = 5
    lr0: float = 0.001
    poly_power: float = 0.9
    momentum: float = 0.0
    batch_size: int = 4
    num_stages: int = 3
    seed: int = 0
    sal_target_thresh: float = 0.5
    clip_norm: float = 0.0
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        for name in ("max_epochs", "patience", "batch_size", "num_stages"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.lr0 <= 0 or self.poly_power <= 0:
            raise ValueError("lr0 and poly_power must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class TrainState:
    stage: int = 0
    epoch: int = 0
    best_loss: float = float("inf")
    epochs_since_best: int = 0
    step: int = 0
    history: list = field(default_factory=list)


def poly_lr(step, total_steps, cfg):
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return cfg.lr0 * (1.0 - step / total_steps) ** cfg.poly_power


def sgd_poly_step(params, grads, step, total_steps, cfg, velocity=None):
    """In-place SGD update with polynomial decay; returns the rate used.

    With ``cfg.momentum > 0`` a ``velocity`` dict carries the heavy-ball buffers;
    ``cfg.clip_norm > 0`` rescales the gradients to at most that global L2 norm.
    """
    lr = poly_lr(step, total_steps, cfg)
    if cfg.clip_norm > 0:
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
        if norm > cfg.clip_norm:
            grads = {k: g * (cfg.clip_norm / norm) for k, g in grads.items()}
    for name, g in grads.items():
        if cfg.momentum and velocity is not None:
            buf = velocity.setdefault(name, np.zeros_like(g))
            buf *= cfg.momentum
            buf += g
            g = buf
        params[name] -= lr * g
    return lr


def _batches(n, cfg, rng):
    order = rng.permutation(n)
    return [order[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]


def _run_epochs(model, n, loss_fn, names, cfg, state):
    """Shared epoch loop with early stopping on the mean training loss."""
    rng = np.random.default_rng([cfg.seed, state.stage])
    batches_per_epoch = -(-n // cfg.batch_size)
    total_steps = cfg.max_epochs * batches_per_epoch
    velocity = {}
    state.step = 0
    state.best_loss = float("inf")
    state.epochs_since_best = 0
    for epoch in range(cfg.max_epochs):
        state.epoch = epoch
        losses = []
        for batch in _batches(n, cfg, rng):
            acc = {k: np.zeros_like(model.params[k]) for k in names}
            for i in batch:
                total, nodes = loss_fn(int(i))
                grads = backward(total, nodes)
                for k in names:
                    acc[k] += grads[k]
                losses.append(float(total.value))
            acc = {k: g / len(batch) for k, g in acc.items()}
            sgd_poly_step(model.params, acc, state.step, total_steps, cfg, velocity)
            state.step += 1
        mean_loss = float(np.mean(losses))
        state.history.append(mean_loss)
        log.info("stage %d epoch %d loss %.5f", state.stage, epoch, mean_loss)
        if mean_loss < state.best_loss:
            state.best_loss = mean_loss
            state.epochs_since_best = 0
        else:
            state.epochs_since_best += 1
            if state.epochs_since_best >= cfg.patience:
                break
    return state


def train_classification(model, images, labels, cfg=None, state=None):
    """Optimize backbone + classifier with the multi-label soft-margin loss."""
    cfg = cfg or StageConfig()
    if len(images) == 0:
        raise ValueError("empty dataset")
    if len(images) != len(labels):
        raise DimensionError("images and labels differ in length")
    state = state or TrainState(stage=0)

    def loss_fn(i):
        return cls_loss(model, images[i], labels[i])

    _run_epochs(model, len(images), loss_fn, BACKBONE_PARAMS + CLS_PARAMS, cfg, state)
    return model


def train_stage(model, images, labels, pgt_seg, pgt_sal, cfg=None, state=None):
    """Optimize every parameter on the seven-term objective for one stage."""
    cfg = cfg or StageConfig()
    n = len(images)
    if n == 0:
        raise ValueError("empty dataset")
    if not n == len(labels) == len(pgt_seg) == len(pgt_sal):
        raise DimensionError("images, labels and pseudo labels must align")
    for img, seg, sal in zip(images, pgt_seg, pgt_sal):
        if np.shape(seg) != img.shape[1:] or np.shape(sal) != img.shape[1:]:
            raise DimensionError("pseudo label extent does not match its image")
    state = state or TrainState(stage=1)
    targets = [{"labels": labels[i], "seg": pgt_seg[i],
                "sal": labelmap_from_saliency(pgt_sal[i], cfg.sal_target_thresh)}
               for i in range(n)]

    def loss_fn(i):
        total, _, nodes = multitask_loss(model, images[i], targets[i], cfg.weights)
        return total, nodes

    _run_epochs(model, n, loss_fn, tuple(model.params), cfg, state)
    return model
