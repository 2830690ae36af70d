"""Synthetic shapes dataset with image-level labels and a corrupted saliency oracle."""
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .pseudolabel import BACKGROUND

CLASS_NAMES = ("background", "circle", "square", "triangle")
BASE_COLORS = {1: (0.85, 0.25, 0.20), 2: (0.20, 0.70, 0.30), 3: (0.25, 0.35, 0.90)}


@dataclass
class DatasetSpec:
    n_samples: int = 200
    height: int = 64
    width: int = 64
    min_shapes: int = 1
    max_shapes: int = 3
    min_size: int = 7
    max_size: int = 14
    color_jitter: float = 0.08
    texture_amplitude: float = 0.08
    corruption_radius: tuple = (1, 3)
    blur_sigma: float = 1.5
    salt_rate: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if not 1 <= self.min_shapes <= self.max_shapes <= 3:
            raise ValueError("shapes per image must lie in 1..3")
        lo, hi = self.corruption_radius
        if not 0 <= lo <= hi <= 3:
            raise ValueError("corruption radius must lie in 0..3")
        if self.blur_sigma < 0 or not 0 <= self.salt_rate <= 1:
            raise ValueError("invalid saliency corruption settings")
        if not 0 <= self.texture_amplitude <= 0.5:
            raise ValueError("texture amplitude must lie in [0, 0.5]")


@dataclass
class SyntheticSample:
    image: np.ndarray           # (3, H, W) in [0, 1]
    gt_mask: np.ndarray         # (H, W) uint8 class ids
    image_labels: frozenset
    oracle_saliency: np.ndarray  # (H, W) in [0, 1]
    sample_id: str = ""


def shape_mask(kind, cy, cx, size, h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == 1:
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= size ** 2
    if kind == 2:
        return (np.abs(yy - cy) <= size) & (np.abs(xx - cx) <= size)
    # upward isosceles triangle, apex at the top
    top, bottom = cy - size, cy + size
    half = (yy - top) / (2.0 * size) * size
    return (yy >= top) & (yy <= bottom) & (np.abs(xx - cx) <= half)


def corrupt_saliency(fg, rng, spec):
    """Dilate or erode, blur, then salt a binary foreground mask."""
    sal = fg.copy()
    radius = int(rng.integers(spec.corruption_radius[0], spec.corruption_radius[1] + 1))
    if radius > 0:
        struct = ndimage.generate_binary_structure(2, 1)
        op = ndimage.binary_dilation if rng.random() < 0.5 else ndimage.binary_erosion
        sal = op(sal, structure=struct, iterations=radius)
    sal = sal.astype(np.float64)
    if spec.blur_sigma > 0:
        sal = ndimage.gaussian_filter(sal, spec.blur_sigma)
    if spec.salt_rate > 0:
        sal[rng.random(sal.shape) < spec.salt_rate] = 1.0
    return np.clip(sal, 0.0, 1.0)


def make_sample(rng, spec, sample_id=""):
    h, w = spec.height, spec.width
    mask = np.zeros((h, w), dtype=np.uint8)
    image = 0.45 + spec.texture_amplitude * rng.uniform(-1.0, 1.0, size=(3, h, w))
    image = ndimage.uniform_filter(image, size=(1, 2, 2))
    n_shapes = int(rng.integers(spec.min_shapes, spec.max_shapes + 1))
    for _ in range(n_shapes):
        kind = int(rng.integers(1, 4))
        for _attempt in range(100):
            size = int(rng.integers(spec.min_size, spec.max_size + 1))
            cy = int(rng.integers(size, h - size))
            cx = int(rng.integers(size, w - size))
            region = shape_mask(kind, cy, cx, size, h, w)
            # keep shapes disjoint so each stays fully visible
            if region.sum() >= 16 and not (mask[region] != BACKGROUND).any():
                break
        else:
            continue
        color = np.clip(np.asarray(BASE_COLORS[kind])
                        + rng.uniform(-spec.color_jitter, spec.color_jitter, 3), 0, 1)
        mask[region] = kind
        image[:, region] = color[:, None]
    image = np.clip(image, 0.0, 1.0)
    labels = frozenset(int(c) for c in np.unique(mask) if c != BACKGROUND)
    sal = corrupt_saliency(mask != BACKGROUND, rng, spec)
    return SyntheticSample(image, mask, labels, sal, sample_id)


def generate_dataset(spec=None):
    spec = spec or DatasetSpec()
    rng = np.random.default_rng(spec.seed)
    return [make_sample(rng, spec, f"{i:04d}") for i in range(spec.n_samples)]


def multi_hot(labels, n_classes):
    """Foreground multi-hot vector (length n_classes - 1) from a class-id set."""
    v = np.zeros(n_classes - 1)
    for c in labels:
        v[c - 1] = 1.0
    return v
