"""File formats: 8-bit PGM maps, tensor manifests and model checkpoints."""
import os
import tempfile

import numpy as np

from .tensor import load_tensor, save_tensor


def write_pgm(path, values):
    """Write an (H, W) array of integers 0..255 as binary PGM (P5)."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got {arr.shape}")
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("PGM values must lie in 0..255")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.astype(np.uint8).tobytes())


def _tokens(blob, count):
    out = []
    pos = 2
    while len(out) < count:
        while blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while not blob[pos:pos + 1].isspace():
            pos += 1
        out.append(int(blob[start:pos]))
    return out, pos + 1


def read_pgm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    (w, h, maxval), start = _tokens(blob, 3)
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=start)
    return data.reshape(h, w).copy()


def write_labelmap(path, labels):
    write_pgm(path, np.asarray(labels, dtype=np.uint8))


def write_saliency(path, sal):
    write_pgm(path, np.rint(np.clip(sal, 0.0, 1.0) * 255.0).astype(np.uint8))


def read_saliency(path):
    return read_pgm(path).astype(np.float64) / 255.0


def write_ppm(path, image):
    """Write a (3, H, W) image in [0, 1] as binary PPM (P6)."""
    img = np.rint(np.clip(np.asarray(image), 0.0, 1.0) * 255.0).astype(np.uint8)
    _, h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.transpose(img, (1, 2, 0)).tobytes())


def write_manifest(directory, tensors, extra_lines=()):
    """Save named arrays as AXT1 files plus a ``name path`` manifest."""
    os.makedirs(directory, exist_ok=True)
    lines = []
    for name in sorted(tensors):
        fname = name.replace("/", "_") + ".axt"
        save_tensor(os.path.join(directory, fname), tensors[name])
        lines.append(f"{name} {fname}")
    atomic_write_text(os.path.join(directory, "manifest.txt"),
                      "\n".join(list(extra_lines) + lines) + "\n")


def read_manifest(directory):
    tensors = {}
    meta = {}
    with open(os.path.join(directory, "manifest.txt"), encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = value.strip()
                continue
            name, path = line.split(maxsplit=1)
            tensors[name] = load_tensor(os.path.join(directory, path))
    return tensors, meta


def save_checkpoint(directory, model, stage_config=None):
    """Checkpoint = tensor files + manifest; model and stage settings echoed as comments."""
    extra = [f"# {k} = {v}" for k, v in model.config().items()]
    if stage_config is not None:
        extra += [f"# cfg.{k} = {v}" for k, v in vars(stage_config).items() if k != "weights"]
    write_manifest(directory, model.params, extra)


def load_checkpoint(directory):
    from .model import ToyModel

    tensors, meta = read_manifest(directory)
    kwargs = {k: int(meta[k]) for k in ("n_classes", "backbone_channels", "head_channels",
                                         "fusion_hidden", "stride", "seed") if k in meta}
    model = ToyModel(**kwargs)
    missing = set(model.params) - set(tensors)
    if missing:
        raise ValueError(f"checkpoint lacks parameters: {sorted(missing)}")
    for k in model.params:
        if tensors[k].shape != model.params[k].shape:
            raise ValueError(f"parameter {k} has shape {tensors[k].shape}")
        model.params[k] = tensors[k]
    return model


def atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
