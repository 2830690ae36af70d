"""scikit-learn style estimator for weakly supervised segmentation."""
import logging

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import pipeline as pl
from .cam import DEFAULT_SCALES
from .model import ToyModel
from .pseudolabel import CrfParams, ThresholdConfig, update_sal_pgt
from .training import StageConfig, TrainState, train_classification, train_stage
from .validation import check_image_labels, check_images, check_label_maps, check_saliency

log = logging.getLogger(__name__)


class DualAffinitySegmenter(BaseEstimator):
    """Segmenter trained from image-level labels and coarse saliency maps.

    ``fit`` trains the classifier, builds initial pseudo labels from
    multi-scale CAMs and the saliency maps, then alternates multi-task
    training with pseudo-label updates for ``num_stages`` rounds. Later
    rounds use CAMs refined by the learned cross-task pairwise affinity and
    CRF-smoothed saliency labels.

    X is a sequence of (3, H, W) images in [0, 1]; y holds one set of
    foreground class ids (or a multi-hot row) per image.
    """

    def __init__(self, n_classes=4, num_stages=3, scales=DEFAULT_SCALES, cam_thresh=0.2,
                 sal_thresh=0.06, cls_epochs=15, max_epochs=15, patience=5, lr0=0.1,
                 stage_lr0=0.03, momentum=0.9, clip_norm=1.0, poly_power=0.9, batch_size=4, backbone_channels=16,
                 head_channels=16, fusion_hidden=4, stride=4, crf_iterations=5,
                 sal_target_thresh=0.5, random_state=0):
        self.n_classes = n_classes
        self.num_stages = num_stages
        self.scales = scales
        self.cam_thresh = cam_thresh
        self.sal_thresh = sal_thresh
        self.cls_epochs = cls_epochs
        self.max_epochs = max_epochs
        self.patience = patience
        self.lr0 = lr0
        self.stage_lr0 = stage_lr0
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.poly_power = poly_power
        self.batch_size = batch_size
        self.backbone_channels = backbone_channels
        self.head_channels = head_channels
        self.fusion_hidden = fusion_hidden
        self.stride = stride
        self.crf_iterations = crf_iterations
        self.sal_target_thresh = sal_target_thresh
        self.random_state = random_state

    def _stage_config(self, epochs, lr0=None):
        return StageConfig(max_epochs=epochs, patience=self.patience,
                           lr0=self.lr0 if lr0 is None else lr0,
                           poly_power=self.poly_power, momentum=self.momentum,
                           batch_size=self.batch_size, num_stages=self.num_stages,
                           seed=self.random_state, sal_target_thresh=self.sal_target_thresh,
                           clip_norm=self.clip_norm)

    def _record(self, stage, provenance, cams, pgt_seg, pgt_sal, masks):
        self.stages_.append(pl.StageRecord(stage, provenance, cams, pgt_seg, pgt_sal))
        if masks is not None:
            row = pl.metric_row(stage, "pgt", pl.evaluate(pgt_seg, masks, self.n_classes))
            self.history_.append(row)
            log.info("stage %d PGT %s", stage, row)

    def _evaluate_predictions(self, stage, images, masks):
        preds = [pl.predict_labels(self.model_, img) for img in images]
        if masks is not None:
            row = pl.metric_row(stage, "seg", pl.evaluate(preds, masks, self.n_classes))
            self.history_.append(row)
            log.info("stage %d SEG %s", stage, row)
        return preds

    def fit(self, X, y, saliency=None, masks=None):
        """Run the full train / refine / relabel schedule.

        ``masks`` (true label maps) are optional and only used to fill
        ``history_`` with per-stage metrics; they never reach training.
        """
        images = check_images(X)
        label_sets, hot = check_image_labels(y, len(images), self.n_classes)
        oracle = check_saliency(saliency, images)
        masks = check_label_maps(masks, images, self.n_classes)
        if self.num_stages < 1:
            raise ValueError("num_stages must be >= 1")
        thresholds = ThresholdConfig(self.cam_thresh, self.sal_thresh)
        crf = CrfParams(iterations=self.crf_iterations)

        self.model_ = ToyModel(self.n_classes, self.backbone_channels, self.head_channels,
                               self.fusion_hidden, self.stride, seed=self.random_state)
        self.stages_ = []
        self.history_ = []
        self.train_states_ = []

        state = TrainState(stage=0)
        train_classification(self.model_, images, hot, self._stage_config(self.cls_epochs), state)
        self.train_states_.append(state)
        cams = pl.multiscale_cams(pl.classifier_cam(self.model_), images, self.scales)
        pgt_sal = [update_sal_pgt(None, s, img, crf, stage=0) for s, img in zip(oracle, images)]
        pgt_seg = pl.combine(cams, pgt_sal, label_sets, thresholds)
        self._record(0, "classifier_cam+oracle_saliency", cams, pgt_seg, pgt_sal, masks)

        for stage in range(1, self.num_stages + 1):
            state = TrainState(stage=stage)
            train_stage(self.model_, images, hot, pgt_seg, pgt_sal,
                        self._stage_config(self.max_epochs, self.stage_lr0), state)
            self.train_states_.append(state)
            preds = self._evaluate_predictions(stage, images, masks)
            # labels after the last round are reported but not trained on
            cams = pl.multiscale_cams(pl.refined_cam(self.model_), images, self.scales)
            pgt_sal = pl.updated_saliency(self.model_, images, oracle, crf, stage)
            pgt_seg = pl.combine(cams, pgt_sal, label_sets, thresholds)
            self._record(stage, f"refined_cam:stage{stage}+crf_saliency:stage{stage}",
                         cams, pgt_seg, pgt_sal, masks)
        self.final_predictions_ = preds
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before using this estimator")

    def predict_proba(self, X):
        self._check_fitted()
        return np.stack([pl.predict_proba(self.model_, img) for img in check_images(X)])

    def predict(self, X):
        self._check_fitted()
        return np.stack([pl.predict_labels(self.model_, img) for img in check_images(X)])

    def transform(self, X):
        """Multi-scale CAMs refined by the learned cross-task pairwise affinity."""
        self._check_fitted()
        fwd = pl.refined_cam(self.model_)
        return np.stack([c.maps for c in pl.multiscale_cams(fwd, check_images(X), self.scales)])

    def score(self, X, masks):
        """Mean IoU of ``predict(X)`` against true label maps."""
        images = check_images(X)
        masks = check_label_maps(masks, images, self.n_classes)
        return pl.evaluate(self.predict(images), masks, self.n_classes)["miou"]
