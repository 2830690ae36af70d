"""Iterative train / refine / relabel loop and its building blocks."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .cam import DEFAULT_SCALES, multiscale_cam, normalize_cam, refine_cam
from .metrics import ConfusionMatrix, miou, precision_recall
from .model import cls_forward, forward_multitask
from .pseudolabel import generate_seg_pgt, update_sal_pgt

log = logging.getLogger(__name__)


@dataclass
class StageRecord:
    """Pseudo labels produced at one stage boundary and where they came from."""
    stage: int
    provenance: str
    cams: list
    pgt_seg: list
    pgt_sal: list


@dataclass
class PipelineResult:
    rows: list
    predictions: list
    stages: list = field(default_factory=list)
    estimator: object = None


def classifier_cam(model):
    """CAM callback for the classification-only network."""
    def forward(image):
        return normalize_cam(cls_forward(model, image)[1])
    return forward


def refined_cam(model):
    """CAM callback that propagates CAMs along the learned cross-task pairwise affinity."""
    def forward(image):
        out = forward_multitask(model, image, upsample=False)
        return refine_cam(normalize_cam(out["cam"]), out["a_ct_pairwise"])
    return forward


def multiscale_cams(forward, images, scales=DEFAULT_SCALES):
    return [multiscale_cam(forward, img, scales) for img in images]


def combine(cams, saliency, label_sets, thresholds):
    return [generate_seg_pgt(c, s, labels, thresholds)
            for c, s, labels in zip(cams, saliency, label_sets)]


def updated_saliency(model, images, oracle, crf, stage):
    out = []
    for img, pt in zip(images, oracle):
        prev = forward_multitask(model, img)["p_sal_ref_p"][0]
        out.append(update_sal_pgt(prev, pt, img, crf, stage))
    return out


def predict_proba(model, image):
    """Final per-pixel class distribution: the pairwise-refined segmentation."""
    return forward_multitask(model, image)["p_seg_ref_p"]


def predict_labels(model, image):
    return np.argmax(predict_proba(model, image), axis=0).astype(np.uint8)


def evaluate(pred_maps, gt_maps, n_classes):
    cm = ConfusionMatrix(n_classes)
    for pred, gt in zip(pred_maps, gt_maps):
        cm.accumulate(pred, gt)
    precision, recall = precision_recall(cm)
    return {"precision": precision, "recall": recall, "miou": miou(cm)}


def metric_row(stage, split, metrics):
    return {"stage": stage, "split": split, **metrics}


def run_pipeline(dataset, **params):
    """Fit the estimator on a synthetic dataset and report per-stage metrics.

    ``params`` are `DualAffinitySegmenter` hyper-parameters.
    """
    from .estimator import DualAffinitySegmenter

    est = DualAffinitySegmenter(**params)
    est.fit([s.image for s in dataset], [s.image_labels for s in dataset],
            saliency=[s.oracle_saliency for s in dataset],
            masks=[s.gt_mask for s in dataset])
    return PipelineResult(rows=est.history_, predictions=list(est.final_predictions_),
                          stages=est.stages_, estimator=est)
