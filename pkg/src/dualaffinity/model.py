"""Toy three-branch network: classification, saliency and segmentation heads
joined by the cross-task dual-affinity block.

Parameters live in a flat ``{name: ndarray}`` dict so that optimizers,
checkpoints and gradient checks can treat them uniformly.
"""
import numpy as np

from . import autograd as ag
from .affinity import PairwiseAffinity, ProjectionParams, FusionParams, UnaryAffinity
from .cam import CamStack
from .losses import LossWeights, bce_pixelwise, ce_pixelwise, multilabel_soft_margin, term_weight
from .tensor import DimensionError, avg_pool, bilinear_resize

BACKBONE_PARAMS = ("bb.w1", "bb.b1", "bb.w2", "bb.b2")
CLS_PARAMS = ("cls.u",)
PIXEL_MEAN = 0.5
PIXEL_STD = 0.25


def glorot(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class ToyModel:
    """Parameter container plus architecture hyper-parameters.

    n_classes counts background; the classifier and CAMs cover the
    ``n_classes - 1`` foreground classes.
    """

    def __init__(self, n_classes=4, backbone_channels=16, head_channels=16,
                 fusion_hidden=4, stride=4, seed=0):
        self.n_classes = n_classes
        self.backbone_channels = backbone_channels
        self.head_channels = head_channels
        self.fusion_hidden = fusion_hidden
        self.stride = stride
        self.seed = seed
        self.params = self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng):
        k, d, c, f = self.backbone_channels, self.head_channels, self.n_classes, self.fusion_hidden
        p = {
            "bb.w1": glorot(rng, k, 3), "bb.b1": np.zeros(k),
            "bb.w2": glorot(rng, k, k), "bb.b2": np.zeros(k),
            "cls.u": glorot(rng, c - 1, k).T.copy(),
        }
        for head in ("sal", "seg"):
            p[f"{head}.w1"] = glorot(rng, d, k)
            p[f"{head}.b1"] = np.zeros(d)
            p[f"{head}.w2"] = glorot(rng, d, d)
            p[f"{head}.b2"] = np.zeros(d)
            for name in ("q", "k", "v"):
                p[f"proj_{head}.w_{name}"] = glorot(rng, d, d)
                p[f"proj_{head}.b_{name}"] = np.zeros(d)
            p[f"proj_{head}.w_u"] = glorot(rng, 1, d)
            p[f"proj_{head}.b_u"] = np.zeros(1)
        for kind in ("p", "u"):
            p[f"fuse.{kind}_w1"] = glorot(rng, f, 2)
            p[f"fuse.{kind}_b1"] = np.zeros(f)
            p[f"fuse.{kind}_w2"] = glorot(rng, 2, f)
            p[f"fuse.{kind}_b2"] = np.zeros(2)
        p["sal_out.w"] = glorot(rng, 1, d)
        p["sal_out.b"] = np.zeros(1)
        p["seg_out.w"] = glorot(rng, c, d)
        p["seg_out.b"] = np.zeros(c)
        return p

    def config(self):
        return {"n_classes": self.n_classes, "backbone_channels": self.backbone_channels,
                "head_channels": self.head_channels, "fusion_hidden": self.fusion_hidden,
                "stride": self.stride, "seed": self.seed}

    def copy(self):
        other = ToyModel.__new__(ToyModel)
        other.__dict__.update(self.config())
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def projection(self, head):
        g = self.params
        pre = f"proj_{head}."
        return ProjectionParams(*(g[pre + n] for n in
                                  ("w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_u", "b_u")))

    def fusion(self):
        g = self.params
        return FusionParams(*(g["fuse." + n] for n in
                              ("p_w1", "p_b1", "p_w2", "p_b2", "u_w1", "u_b1", "u_w2", "u_b2")))


def _check_image(model, image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise DimensionError(f"expected a (3, H, W) image, got {image.shape}")
    if image.shape[1] < model.stride or image.shape[2] < model.stride:
        raise DimensionError(f"image {image.shape[1:]} smaller than stride {model.stride}")
    return image


def _backbone(v, image, stride):
    image = (image - PIXEL_MEAN) / PIXEL_STD
    x = ag.Var(avg_pool(image, stride) if stride > 1 else image)
    x = ag.relu(ag.channel_mix(ag.box_filter3(x), v["bb.w1"], v["bb.b1"]))
    return ag.relu(ag.channel_mix(ag.box_filter3(x), v["bb.w2"], v["bb.b2"]))


def _classify(v, feats):
    gap = ag.mean(ag.reshape(feats, (feats.shape[0], -1)), axis=1)
    return gap @ v["cls.u"]


def _enhance(v, f, head):
    d, h, w = f.shape
    n = h * w
    pre = f"proj_{head}."
    q = ag.channel_mix(f, v[pre + "w_q"], v[pre + "b_q"]).reshape(d, n)
    k = ag.channel_mix(f, v[pre + "w_k"], v[pre + "b_k"]).reshape(d, n)
    val = ag.channel_mix(f, v[pre + "w_v"], v[pre + "b_v"]).reshape(d, n)
    a_p = ag.softmax(q.T @ k, axis=1)
    a_u = ag.softmax(ag.channel_mix(f, v[pre + "w_u"], v[pre + "b_u"]).reshape(n))
    f_p = (val @ a_p.T).reshape(d, h, w)
    f_u = (val @ a_u).reshape(d, 1, 1)
    return f_p + f_u + f, a_p, a_u


def _fuse(v, x1, x2, kind):
    pre = f"fuse.{kind}_"
    hidden = ag.relu(ag.channel_mix(ag.stack([x1, x2]), v[pre + "w1"], v[pre + "b1"]))
    weights = ag.softmax(ag.channel_mix(hidden, v[pre + "w2"], v[pre + "b2"]), axis=0)
    mixed = weights[0] * x1 + weights[1] * x2
    axis = 1 if mixed.value.ndim == 2 else None
    return mixed / ag.sum_(mixed, axis=axis, keepdims=axis is not None)


def _head(v, feats, head):
    x = ag.relu(ag.channel_mix(feats, v[f"{head}.w1"], v[f"{head}.b1"]))
    return ag.relu(ag.channel_mix(x, v[f"{head}.w2"], v[f"{head}.b2"]))


def _refine_unary(p, a_u, kind):
    c, h, w = p.shape
    context = (p.reshape(c, h * w) @ a_u).reshape(c, 1, 1)
    out = p + context
    if kind == "sal":
        return out * 0.5
    return out / ag.sum_(out, axis=0, keepdims=True)


def _refine_pairwise(p, a_p):
    c, h, w = p.shape
    return (p.reshape(c, h * w) @ a_p.T).reshape(c, h, w)


def build_graph(model, image, variables=None, upsample=True, cls_only=False):
    """Run the forward pass on autodiff variables and return the named nodes.

    ``variables`` maps parameter names to `Var` leaves; fresh leaves are made
    when omitted. Dense predictions are upsampled to the image resolution
    unless ``upsample`` is False.
    """
    image = _check_image(model, image)
    v = variables if variables is not None else {k: ag.Var(p) for k, p in model.params.items()}
    feats = _backbone(v, image, model.stride)
    nodes = {"params": v, "features": feats, "logits": _classify(v, feats)}
    if cls_only:
        return nodes

    f_sal_in = _head(v, feats, "sal")
    f_seg_in = _head(v, feats, "seg")
    f_sal_out, ap_sal, au_sal = _enhance(v, f_sal_in, "sal")
    f_seg_out, ap_seg, au_seg = _enhance(v, f_seg_in, "seg")
    a_ct_p = _fuse(v, ap_sal, ap_seg, "p")
    a_ct_u = _fuse(v, au_sal, au_seg, "u")

    p_sal = ag.sigmoid(ag.channel_mix(f_sal_out, v["sal_out.w"], v["sal_out.b"]))
    p_seg = ag.softmax(ag.channel_mix(f_seg_out, v["seg_out.w"], v["seg_out.b"]), axis=0)
    preds = {
        "p_sal": p_sal,
        "p_sal_ref_u": _refine_unary(p_sal, a_ct_u, "sal"),
        "p_sal_ref_p": _refine_pairwise(p_sal, a_ct_p),
        "p_seg": p_seg,
        "p_seg_ref_u": _refine_unary(p_seg, a_ct_u, "seg"),
        "p_seg_ref_p": _refine_pairwise(p_seg, a_ct_p),
    }
    if upsample:
        h, w = image.shape[1:]
        preds = {k: ag.resize(p, h, w) for k, p in preds.items()}
    nodes.update(preds)
    nodes.update({"f_sal_in": f_sal_in, "f_seg_in": f_seg_in, "f_sal_out": f_sal_out,
                  "f_seg_out": f_seg_out, "a_ct_pairwise": a_ct_p, "a_ct_unary": a_ct_u})
    return nodes


def forward_multitask(model, image, upsample=True):
    """Plain-array outputs of the full forward pass."""
    nodes = build_graph(model, image, upsample=upsample)
    feats = nodes["features"].value
    spatial = feats.shape[1:]
    out = {k: nodes[k].value for k in ("logits", "p_sal", "p_sal_ref_u", "p_sal_ref_p",
                                       "p_seg", "p_seg_ref_u", "p_seg_ref_p")}
    out["features"] = feats
    out["cam"] = CamStack(np.tensordot(model.params["cls.u"].T, feats, axes=(1, 0)))
    out["a_ct_pairwise"] = PairwiseAffinity(nodes["a_ct_pairwise"].value, spatial)
    out["a_ct_unary"] = UnaryAffinity(nodes["a_ct_unary"].value, spatial)
    return out


def cls_forward(model, image):
    nodes = build_graph(model, image, cls_only=True)
    feats = nodes["features"].value
    return nodes["logits"].value, CamStack(np.tensordot(model.params["cls.u"].T, feats, axes=(1, 0)))


def multitask_loss(model, image, targets, weights=None, variables=None):
    """Build the seven-term objective for one image.

    ``targets`` holds ``labels`` (multi-hot over foreground classes),
    ``sal`` (binary H x W) and ``seg`` (H x W label map with IGNORE).
    Returns ``(total Var, {term: value}, nodes)``.
    """
    w = weights or LossWeights()
    nodes = build_graph(model, image, variables=variables)
    sal_t = np.asarray(targets["sal"], dtype=np.float64)
    seg_t = np.asarray(targets["seg"])
    terms = {
        "cls": ag.loss(nodes["logits"], multilabel_soft_margin, np.asarray(targets["labels"], float)),
        "sal": ag.loss(nodes["p_sal"][0], bce_pixelwise, sal_t),
        "sal_ref_u": ag.loss(nodes["p_sal_ref_u"][0], bce_pixelwise, sal_t),
        "sal_ref_p": ag.loss(nodes["p_sal_ref_p"][0], bce_pixelwise, sal_t),
        "seg": ag.loss(nodes["p_seg"], ce_pixelwise, seg_t),
        "seg_ref_u": ag.loss(nodes["p_seg_ref_u"], ce_pixelwise, seg_t),
        "seg_ref_p": ag.loss(nodes["p_seg_ref_p"], ce_pixelwise, seg_t),
    }
    total = None
    for name, term in terms.items():
        lam = term_weight(name, w)
        if lam == 0:
            continue
        scaled = term * lam
        total = scaled if total is None else total + scaled
    if total is None:
        total = ag.Var(0.0)
    return total, {k: float(t.value) for k, t in terms.items()}, nodes


def cls_loss(model, image, labels, variables=None):
    nodes = build_graph(model, image, variables=variables, cls_only=True)
    term = ag.loss(nodes["logits"], multilabel_soft_margin, np.asarray(labels, float))
    return term, nodes


def backward(total, nodes):
    """Gradients of `total` for every parameter leaf (zeros where unreached)."""
    ag.backward(total)
    return {k: (v.grad.copy() if v.grad is not None else np.zeros_like(v.value))
            for k, v in nodes["params"].items()}


def upsampled_cam(cams, h, w):
    return CamStack(bilinear_resize(cams.maps, h, w), cams.normalized)
