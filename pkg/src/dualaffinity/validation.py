"""Input checks for the estimator API."""
import numpy as np

from .pseudolabel import IGNORE
from .tensor import DimensionError


def check_images(X):
    """Return a list of finite float64 (3, H, W) arrays."""
    if isinstance(X, np.ndarray) and X.ndim == 3:
        X = [X]
    images = []
    for i, img in enumerate(X):
        arr = np.asarray(img, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise DimensionError(f"image {i}: expected (3, H, W), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"image {i}: contains NaN or Inf")
        images.append(arr)
    if not images:
        raise ValueError("no images given")
    return images


def check_image_labels(y, n_images, n_classes):
    """Rows are either sets of class ids or multi-hot vectors over the
    foreground classes. Returns (list of id sets, multi-hot array)."""
    if y is None or len(y) != n_images:
        raise ValueError("need one image-level label entry per image")
    sets = []
    for row in y:
        if isinstance(row, (set, frozenset)):
            ids = frozenset(int(c) for c in row)
        else:
            vec = np.asarray(row)
            if vec.shape != (n_classes - 1,) or not np.isin(vec, (0, 1)).all():
                raise DimensionError(f"multi-hot rows need {n_classes - 1} entries in {{0, 1}}")
            ids = frozenset(int(i) + 1 for i in np.flatnonzero(vec))
        if any(not 1 <= c < n_classes for c in ids):
            raise ValueError(f"class ids must lie in 1..{n_classes - 1}: {sorted(ids)}")
        sets.append(ids)
    hot = np.zeros((n_images, n_classes - 1))
    for i, ids in enumerate(sets):
        hot[i, [c - 1 for c in ids]] = 1.0
    return sets, hot


def check_saliency(sal, images):
    if sal is None or len(sal) != len(images):
        raise ValueError("need one saliency map per image")
    out = []
    for i, (s, img) in enumerate(zip(sal, images)):
        arr = np.asarray(s, dtype=np.float64)
        if arr.shape != img.shape[1:]:
            raise DimensionError(f"saliency {i}: shape {arr.shape} != image {img.shape[1:]}")
        if arr.min() < 0 or arr.max() > 1:
            raise ValueError(f"saliency {i}: values must lie in [0, 1]")
        out.append(arr)
    return out


def check_label_maps(maps, images, n_classes):
    if maps is None:
        return None
    if len(maps) != len(images):
        raise ValueError("need one label map per image")
    out = []
    for i, (m, img) in enumerate(zip(maps, images)):
        arr = np.asarray(m)
        if arr.shape != img.shape[1:]:
            raise DimensionError(f"label map {i}: shape {arr.shape} != image {img.shape[1:]}")
        bad = (arr != IGNORE) & ((arr < 0) | (arr >= n_classes))
        if bad.any():
            raise ValueError(f"label map {i}: labels outside 0..{n_classes - 1} and IGNORE")
        out.append(arr.astype(np.uint8))
    return out
