"""Pseudo ground truth for segmentation and saliency."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor import DimensionError, sigmoid

IGNORE = 255
BACKGROUND = 0


@dataclass
class ThresholdConfig:
    cam_thresh: float = 0.2
    sal_thresh: float = 0.06

    def __post_init__(self):
        for name in ("cam_thresh", "sal_thresh"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


@dataclass
class CrfParams:
    """Binary dense-CRF settings. Range sigma is in 8-bit intensity units."""
    iterations: int = 5
    spatial_sigma: float = 3.0
    bilateral_spatial_sigma: float = 30.0
    bilateral_range_sigma: float = 10.0
    spatial_weight: float = 1.0
    bilateral_weight: float = 1.0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if min(self.spatial_sigma, self.bilateral_spatial_sigma, self.bilateral_range_sigma) <= 0:
            raise ValueError("CRF sigmas must be positive")


def generate_seg_pgt(cams, sal, present_classes, t=None):
    """Combine normalized CAMs (foreground slices) with a saliency map.

    A pixel is a foreground candidate when the strongest present-class CAM
    reaches ``cam_thresh`` and a background candidate when saliency is below
    ``sal_thresh``. Exactly one candidate decides the label; zero or two give
    IGNORE.
    """
    t = t or ThresholdConfig()
    maps = cams.maps if hasattr(cams, "maps") else np.asarray(cams)
    sal = np.asarray(sal, dtype=np.float64)
    if maps.shape[1:] != sal.shape:
        raise DimensionError(f"CAM extent {maps.shape[1:]} != saliency {sal.shape}")
    present = sorted(int(c) for c in present_classes)
    for c in present:
        if not 1 <= c <= maps.shape[0]:
            raise ValueError(f"class id {c} has no CAM slice")

    bg = sal < t.sal_thresh
    labels = np.full(sal.shape, IGNORE, dtype=np.uint8)
    if present:
        sub = maps[[c - 1 for c in present]]
        best = np.argmax(sub, axis=0)  # first max -> lowest class id on ties
        fg = np.take_along_axis(sub, best[None], axis=0)[0] >= t.cam_thresh
        cls = np.asarray(present, dtype=np.uint8)[best]
    else:
        fg = np.zeros(sal.shape, dtype=bool)
        cls = np.zeros(sal.shape, dtype=np.uint8)
    labels[fg & ~bg] = cls[fg & ~bg]
    labels[bg & ~fg] = BACKGROUND
    return labels


def labelmap_from_saliency(sal, thresh=0.5):
    return (np.asarray(sal) >= thresh).astype(np.uint8)


@lru_cache(maxsize=8)
def _grid_gaussian(h, w, sigma):
    """exp(-|p_i - p_j|^2 / 2 sigma^2) over an h x w grid, float32."""
    yy, xx = np.mgrid[0:h, 0:w]
    pos = np.stack([yy.ravel(), xx.ravel()], axis=1).astype(np.float32)
    d = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
    g = np.exp(-d / np.float32(2.0 * sigma ** 2))
    np.fill_diagonal(g, 0.0)
    g.setflags(write=False)
    return g


@lru_cache(maxsize=8)
def _normalized_spatial(h, w, sigma):
    g = _grid_gaussian(h, w, sigma)
    d = _inv_sqrt_degree(g).astype(np.float32)
    k = g * d[:, None] * d[None, :]
    k.setflags(write=False)
    return k


def _bilateral(image, p):
    """Unnormalized appearance kernel exp(-|dp|^2/2s_xy^2 - |dI|^2/2s_rgb^2), zero diagonal.

    The exponent comes out of a single matmul on augmented, centered features:
    [f_i, -|f_i|^2/2, 1] . [f_j, 1, -|f_j|^2/2] = -|f_i - f_j|^2 / 2.
    """
    c, h, w = image.shape
    yy, xx = np.mgrid[0:h, 0:w]
    pos = np.stack([yy.ravel(), xx.ravel()], axis=1) / p.bilateral_spatial_sigma
    rgb = image.reshape(c, -1).T * (255.0 / p.bilateral_range_sigma)
    f = np.concatenate([pos, rgb], axis=1)
    f -= f.mean(axis=0)
    half_sq = 0.5 * (f * f).sum(axis=1, keepdims=True)
    ones = np.ones_like(half_sq)
    a = np.concatenate([f, -half_sq, ones], axis=1).astype(np.float32)
    b = np.concatenate([f, ones, -half_sq], axis=1).astype(np.float32)
    k = a @ b.T
    np.minimum(k, 0.0, out=k)
    np.exp(k, out=k)
    np.fill_diagonal(k, 0.0)
    return k


def _inv_sqrt_degree(k):
    deg = k.sum(axis=1, dtype=np.float64)
    # isolated pixels (zero degree) keep an all-zero row
    d = np.zeros_like(deg)
    d[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    return d


class _CrfOperator:
    """Matrix-free view of the normalized kernel
    W = w_b D_b B D_b + w_s S_norm with D_b = diag(1/sqrt(row sums of B))."""

    def __init__(self, image, p):
        _, h, w = image.shape
        self.bilateral = _bilateral(image, p)
        self.d = _inv_sqrt_degree(self.bilateral)
        self.spatial = _normalized_spatial(h, w, float(p.spatial_sigma))
        self.p = p

    def __matmul__(self, x):
        x = np.asarray(x, dtype=np.float64)
        d = self.d.reshape((-1,) + (1,) * (x.ndim - 1))
        app = (self.bilateral @ (d * x).astype(np.float32)).astype(np.float64) * d
        smooth = (self.spatial @ x.astype(np.float32)).astype(np.float64)
        return self.p.bilateral_weight * app + self.p.spatial_weight * smooth

    def dense(self):
        k = self.bilateral * self.d.astype(np.float32)[:, None] * self.d.astype(np.float32)[None, :]
        k *= np.float32(self.p.bilateral_weight)
        k += np.float32(self.p.spatial_weight) * self.spatial
        return k


def crf_kernel(image, p):
    """Dense (N, N) pairwise kernel with zero diagonal (float32).

    Spatial and bilateral Gaussians are each symmetrically normalized,
    k_ij / sqrt(d_i d_j) with d the row sums, then weighted and added.
    """
    return _CrfOperator(np.asarray(image, dtype=np.float64), p).dense()


def mean_field_crf(unary_prob, image, p=None, eps=1e-7):
    """Binary fully connected CRF by exact mean-field message passing.

    Q starts at the unary foreground probability. Each iteration sets
    Q_fg = sigmoid(logit(unary) + m_fg - m_bg), where m_l is the kernel-weighted
    sum of the other pixels' Q_l (Potts compatibility, see `crf_kernel`).
    Since m_fg - m_bg = W (2Q - 1), one product with W per iteration suffices.
    """
    p = p or CrfParams()
    prob = np.asarray(unary_prob, dtype=np.float64)
    if p.iterations == 0:
        return prob.copy()
    image = np.asarray(image, dtype=np.float64)
    if prob.shape != image.shape[1:]:
        raise DimensionError(f"saliency {prob.shape} does not match image {image.shape}")
    op = _CrfOperator(image, p)
    clipped = np.clip(prob.ravel(), eps, 1.0 - eps)
    unary_logit = np.log(clipped) - np.log1p(-clipped)
    q = prob.ravel().copy()
    for _ in range(p.iterations):
        q = sigmoid(unary_logit + op @ (2.0 * q - 1.0))
    return q.reshape(prob.shape)


def update_sal_pgt(prev_refined, pt_sal, image, crf=None, stage=0):
    """Saliency pseudo label for a stage: the oracle map at stage 0, else the
    CRF-smoothed average of the previous refined prediction and the oracle."""
    pt_sal = np.asarray(pt_sal, dtype=np.float64)
    if stage == 0:
        return pt_sal
    if prev_refined is None:
        raise ValueError("stages after 0 need the previous refined saliency")
    prev_refined = np.asarray(prev_refined, dtype=np.float64)
    if prev_refined.shape != pt_sal.shape:
        raise DimensionError(f"saliency extents differ: {prev_refined.shape} vs {pt_sal.shape}")
    return mean_field_crf((prev_refined + pt_sal) / 2.0, image, crf)
