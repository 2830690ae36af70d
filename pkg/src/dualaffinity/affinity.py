"""Task-specific pairwise/unary affinities and their cross-task fusion.

Pairwise affinities are row-stochastic (HW, HW) matrices, one row per query
position. Unary affinities are a single spatial distribution shared by all
queries. Both are fused across the saliency and segmentation branches by a
small per-entry attention stack whose two output weights sum to one.
"""
from dataclasses import dataclass

import numpy as np

from .tensor import DimensionError, channel_mix, softmax


@dataclass
class ProjectionParams:
    """Query/key/value (D -> D) and unary (D -> 1) 1x1 projections."""
    w_q: np.ndarray
    b_q: np.ndarray
    w_k: np.ndarray
    b_k: np.ndarray
    w_v: np.ndarray
    b_v: np.ndarray
    w_u: np.ndarray
    b_u: np.ndarray

    @property
    def channels(self):
        return self.w_q.shape[1]

    def check(self, d):
        if self.w_q.shape != (d, d) or self.w_k.shape != (d, d) or self.w_v.shape != (d, d):
            raise DimensionError(f"projection weights do not match {d} channels")
        if self.w_u.shape != (1, d):
            raise DimensionError(f"unary projection must be (1, {d}), got {self.w_u.shape}")

    @classmethod
    def zeros(cls, d):
        return cls(np.zeros((d, d)), np.zeros(d), np.zeros((d, d)), np.zeros(d),
                   np.zeros((d, d)), np.zeros(d), np.zeros((1, d)), np.zeros(1))


@dataclass
class FusionParams:
    """Two-layer channel-mix stacks (2 -> hidden -> 2) for pairwise and unary fusion."""
    p_w1: np.ndarray
    p_b1: np.ndarray
    p_w2: np.ndarray
    p_b2: np.ndarray
    u_w1: np.ndarray
    u_b1: np.ndarray
    u_w2: np.ndarray
    u_b2: np.ndarray

    @classmethod
    def zeros(cls, hidden=4):
        z = lambda *s: np.zeros(s)  # noqa: E731
        return cls(z(hidden, 2), z(hidden), z(2, hidden), z(2),
                   z(hidden, 2), z(hidden), z(2, hidden), z(2))


@dataclass
class PairwiseAffinity:
    matrix: np.ndarray
    spatial: tuple

    def __post_init__(self):
        n = self.spatial[0] * self.spatial[1]
        if self.matrix.shape != (n, n):
            raise DimensionError(f"pairwise matrix {self.matrix.shape} does not match {self.spatial}")

    @classmethod
    def identity(cls, h, w):
        return cls(np.eye(h * w), (h, w))

    @classmethod
    def uniform(cls, h, w):
        return cls(np.full((h * w, h * w), 1.0 / (h * w)), (h, w))


@dataclass
class UnaryAffinity:
    map: np.ndarray
    spatial: tuple

    def __post_init__(self):
        if self.map.shape != (self.spatial[0] * self.spatial[1],):
            raise DimensionError(f"unary map {self.map.shape} does not match {self.spatial}")

    @classmethod
    def uniform(cls, h, w):
        return cls(np.full(h * w, 1.0 / (h * w)), (h, w))

    @classmethod
    def one_hot(cls, h, w, index):
        m = np.zeros(h * w)
        m[index] = 1.0
        return cls(m, (h, w))


@dataclass
class DualAffinityOutput:
    f_sal_out: np.ndarray
    f_seg_out: np.ndarray
    a_ct_pairwise: PairwiseAffinity
    a_ct_unary: UnaryAffinity


def _flatten(x):
    return x.reshape(x.shape[0], -1)


def pairwise_affinity(features, proj):
    features = np.asarray(features, dtype=np.float64)
    d, h, w = features.shape
    proj.check(d)
    q = _flatten(channel_mix(features, proj.w_q, proj.b_q)).T
    k = _flatten(channel_mix(features, proj.w_k, proj.b_k)).T
    return PairwiseAffinity(softmax(q @ k.T, axis=1), (h, w))


def value_projection(features, proj):
    return channel_mix(features, proj.w_v, proj.b_v)


def aggregate_pairwise(a, values):
    values = np.asarray(values, dtype=np.float64)
    if values.shape[1:] != tuple(a.spatial):
        raise DimensionError(f"values {values.shape} do not match affinity {a.spatial}")
    return (_flatten(values) @ a.matrix.T).reshape(values.shape)


def unary_affinity(features, proj):
    features = np.asarray(features, dtype=np.float64)
    d, h, w = features.shape
    proj.check(d)
    logits = channel_mix(features, proj.w_u, proj.b_u).reshape(-1)
    return UnaryAffinity(softmax(logits), (h, w))


def aggregate_unary(u, values):
    values = np.asarray(values, dtype=np.float64)
    if values.shape[1:] != tuple(u.spatial):
        raise DimensionError(f"values {values.shape} do not match affinity {u.spatial}")
    context = _flatten(values) @ u.map
    return np.broadcast_to(context[:, None, None], values.shape).copy()


def fusion_weights(x1, x2, w1, b1, w2, b2):
    """Per-entry weights (W1, W2) for two same-shape affinity arrays; W1 + W2 = 1."""
    stack = np.stack([x1, x2])
    hidden = np.maximum(channel_mix(stack, w1, b1), 0.0)
    logits = channel_mix(hidden, w2, b2)
    if logits.shape[0] != 2:
        raise DimensionError("fusion stack must emit exactly two channels")
    weights = softmax(logits, axis=0)
    return weights[0], weights[1]


def fuse_pairwise(a_sal, a_seg, fp):
    if tuple(a_sal.spatial) != tuple(a_seg.spatial):
        raise DimensionError("pairwise affinities differ in spatial extent")
    w1, w2 = fusion_weights(a_sal.matrix, a_seg.matrix, fp.p_w1, fp.p_b1, fp.p_w2, fp.p_b2)
    mixed = w1 * a_sal.matrix + w2 * a_seg.matrix
    return PairwiseAffinity(mixed / mixed.sum(axis=1, keepdims=True), a_sal.spatial)


def fuse_unary(u_sal, u_seg, fp):
    if tuple(u_sal.spatial) != tuple(u_seg.spatial):
        raise DimensionError("unary affinities differ in spatial extent")
    w1, w2 = fusion_weights(u_sal.map, u_seg.map, fp.u_w1, fp.u_b1, fp.u_w2, fp.u_b2)
    mixed = w1 * u_sal.map + w2 * u_seg.map
    return UnaryAffinity(mixed / mixed.sum(), u_sal.spatial)


def dual_affinity_forward(f_sal_in, f_seg_in, proj_sal, proj_seg, fp):
    f_sal_in = np.asarray(f_sal_in, dtype=np.float64)
    f_seg_in = np.asarray(f_seg_in, dtype=np.float64)
    if f_sal_in.shape != f_seg_in.shape:
        raise DimensionError(f"feature extents differ: {f_sal_in.shape} vs {f_seg_in.shape}")

    def enhance(f, proj):
        ap = pairwise_affinity(f, proj)
        au = unary_affinity(f, proj)
        v = value_projection(f, proj)
        return aggregate_pairwise(ap, v) + aggregate_unary(au, v) + f, ap, au

    sal_out, ap_sal, au_sal = enhance(f_sal_in, proj_sal)
    seg_out, ap_seg, au_seg = enhance(f_seg_in, proj_seg)
    return DualAffinityOutput(sal_out, seg_out,
                              fuse_pairwise(ap_sal, ap_seg, fp),
                              fuse_unary(au_sal, au_seg, fp))


def op_count(h, w, d, variant="dual"):
    """Multiply-accumulate counts of a non-local block vs. the dual-affinity block.

    Returns (base, overhead). base = HWD^2 + (HW)^2 D; the unary branch adds
    HWD + (HW)^2, so overhead / base == 1 / D.
    """
    if min(h, w, d) < 1:
        raise ValueError("extents must be positive")
    n = h * w
    base = n * d * d + n * n * d
    if variant == "pairwise_only":
        return base, 0
    if variant != "dual":
        raise ValueError(f"unknown variant {variant!r}")
    return base, n * d + n * n
