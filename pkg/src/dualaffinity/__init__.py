"""Weakly supervised segmentation with dual pairwise/unary cross-task affinity."""
from .affinity import dual_affinity_forward, op_count, pairwise_affinity, unary_affinity
from .cam import CamStack, compute_cam, multiscale_cam, refine_cam
from .data import DatasetSpec, SyntheticSample, generate_dataset
from .estimator import DualAffinitySegmenter
from .metrics import ConfusionMatrix, miou, precision_recall
from .pipeline import run_pipeline
from .pseudolabel import IGNORE, CrfParams, ThresholdConfig, generate_seg_pgt, mean_field_crf

__version__ = "0.1.0"

__all__ = [
    "CamStack", "ConfusionMatrix", "CrfParams", "DatasetSpec", "DualAffinitySegmenter", "IGNORE",
    "SyntheticSample", "ThresholdConfig", "compute_cam", "dual_affinity_forward",
    "generate_dataset", "generate_seg_pgt", "mean_field_crf", "miou", "multiscale_cam",
    "op_count", "pairwise_affinity", "precision_recall", "refine_cam", "run_pipeline",
    "unary_affinity",
]
