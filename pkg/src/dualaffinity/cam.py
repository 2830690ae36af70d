"""Class activation maps: extraction, normalization, multi-scale fusion, refinement.

Class slices index the foreground classes only: slice ``c`` holds class id
``c + 1`` (id 0 is background and has no CAM).
"""
from dataclasses import dataclass

import numpy as np

from .affinity import aggregate_pairwise
from .tensor import (DimensionError, bilinear_resize, max_normalize, minmax_normalize,
                     scaled_extent)

DEFAULT_SCALES = (0.5, 1.0, 1.5)


@dataclass
class CamStack:
    maps: np.ndarray
    normalized: bool = False

    @property
    def n_classes(self):
        return self.maps.shape[0]


def compute_cam(features, u):
    """Weighted channel sum of K x H x W features with fc weights U (K x C)."""
    features = np.asarray(features, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] != features.shape[0]:
        raise DimensionError(f"classifier {u.shape} does not match {features.shape[0]} channels")
    return CamStack(np.tensordot(u.T, features, axes=(1, 0)), normalized=False)


def normalize_cam(cams):
    return CamStack(max_normalize(cams.maps), normalized=True)


def multiscale_cam(forward, image, scales=DEFAULT_SCALES):
    """Sum CAMs over rescaled copies of `image` and min-max normalize per class.

    `forward(image) -> CamStack` is evaluated once per scale; each result is
    resized back to the input resolution before summing.
    """
    scales = tuple(scales)
    if not scales:
        raise ValueError("at least one scale is required")
    if any(s <= 0 for s in scales):
        raise ValueError(f"scales must be positive: {scales}")
    image = np.asarray(image, dtype=np.float64)
    _, h, w = image.shape
    total = None
    for s in scales:
        scaled = bilinear_resize(image, scaled_extent(h, s), scaled_extent(w, s))
        maps = bilinear_resize(forward(scaled).maps, h, w)
        total = maps if total is None else total + maps
    return CamStack(minmax_normalize(total), normalized=True)


def refine_cam(cams, a):
    """Propagate each class map along the pairwise affinity rows, then re-normalize."""
    if cams.maps.shape[1:] != tuple(a.spatial):
        raise DimensionError(f"CAM extent {cams.maps.shape[1:]} != affinity {a.spatial}")
    return CamStack(max_normalize(aggregate_pairwise(a, cams.maps)), normalized=True)
