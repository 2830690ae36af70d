"""Dense numeric primitives shared by every other module.

Arrays are plain numpy arrays. Working precision is float64; the on-disk
tensor format stores float32.
"""
import struct

import numpy as np

AXT_MAGIC = b"AXT1"


class DimensionError(ValueError):
    """Raised when operand extents are inconsistent."""


def as_tensor(x, ndim=None):
    """Validate `x` as a finite, non-degenerate float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        raise DimensionError("tensors need at least one dimension")
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"expected {ndim} dims, got shape {arr.shape}")
    if any(d < 1 for d in arr.shape):
        raise DimensionError(f"zero extent in shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains NaN or Inf")
    return arr


def matmul(a, b):
    a = as_tensor(a, ndim=2)
    b = as_tensor(b, ndim=2)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} out of range for {x.ndim} dims")
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def channel_mix(x, weights, bias=None):
    """1x1 convolution: per-pixel affine map over the leading axis.

    x is (Din, H, W), weights (Dout, Din), bias (Dout,).
    """
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or x.shape[0] != weights.shape[1]:
        raise DimensionError(
            f"channel mismatch: weights {weights.shape} vs input {x.shape}")
    out = np.tensordot(weights, x, axes=(1, 0))
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (weights.shape[0],):
            raise DimensionError(f"bias shape {bias.shape} != ({weights.shape[0]},)")
        out += bias.reshape((-1,) + (1,) * (x.ndim - 1))
    return out


def resize_matrix(n_in, n_out):
    """Corner-aligned linear interpolation weights, shape (n_out, n_in)."""
    if n_out < 1 or n_in < 1:
        raise DimensionError("resize extents must be >= 1")
    r = np.zeros((n_out, n_in))
    if n_in == 1 or n_out == 1:
        r[:, 0] = 1.0
        return r
    pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    rows = np.arange(n_out)
    r[rows, lo] += 1.0 - frac
    r[rows, hi] += frac
    return r


def bilinear_resize(x, new_h, new_w):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DimensionError(f"expected (C, H, W), got {x.shape}")
    _, h, w = x.shape
    if (h, w) == (new_h, new_w):
        return x.copy()
    rh = resize_matrix(h, new_h)
    rw = resize_matrix(w, new_w)
    return rh @ x @ rw.T


def scaled_extent(n, scale):
    return max(1, int(round(n * scale)))


def minmax_normalize(x, eps=1e-12):
    """(x - min) / (max - min) over all but the leading axis; flat slices -> 0."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(x.shape[0], -1)
    lo = flat.min(axis=1, keepdims=True)
    span = flat.max(axis=1, keepdims=True) - lo
    out = np.zeros_like(flat)
    ok = span[:, 0] >= eps
    out[ok] = (flat[ok] - lo[ok]) / span[ok]
    return out.reshape(x.shape)


def max_normalize(x, eps=1e-12):
    """Clamp negatives to 0 and divide each leading slice by its max."""
    x = np.maximum(np.asarray(x, dtype=np.float64), 0.0)
    flat = x.reshape(x.shape[0], -1)
    peak = flat.max(axis=1, keepdims=True)
    out = np.zeros_like(flat)
    ok = peak[:, 0] >= eps
    out[ok] = flat[ok] / peak[ok]
    return out.reshape(x.shape)


def box_filter3(x):
    """3x3 neighborhood mean per channel with edge replication."""
    x = np.asarray(x, dtype=np.float64)
    p = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="edge")
    h, w = x.shape[1:]
    out = np.zeros_like(x)
    for dy in range(3):
        for dx in range(3):
            out += p[:, dy:dy + h, dx:dx + w]
    return out / 9.0


def avg_pool(x, k):
    """Non-overlapping k x k mean pooling; trailing rows/cols are dropped."""
    x = np.asarray(x, dtype=np.float64)
    c, h, w = x.shape
    ho, wo = h // k, w // k
    if ho < 1 or wo < 1:
        raise DimensionError(f"input {h}x{w} smaller than pool size {k}")
    return x[:, :ho * k, :wo * k].reshape(c, ho, k, wo, k).mean(axis=(2, 4))


def save_tensor(path, x):
    x = np.ascontiguousarray(np.asarray(x, dtype="<f4"))
    with open(path, "wb") as fh:
        fh.write(AXT_MAGIC)
        fh.write(struct.pack("<I", x.ndim))
        fh.write(struct.pack(f"<{x.ndim}I", *x.shape))
        fh.write(x.tobytes())


def load_tensor(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != AXT_MAGIC:
        raise ValueError(f"{path}: not an AXT1 tensor file")
    (rank,) = struct.unpack_from("<I", blob, 4)
    shape = struct.unpack_from(f"<{rank}I", blob, 8)
    offset = 8 + 4 * rank
    count = int(np.prod(shape)) if rank else 1
    if len(blob) - offset != 4 * count:
        raise ValueError(f"{path}: payload size does not match shape {shape}")
    data = np.frombuffer(blob, dtype="<f4", offset=offset, count=count)
    return data.reshape(shape).astype(np.float64)
