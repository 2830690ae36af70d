import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualaffinity.metrics import NA, ConfusionMatrix, format_metric, miou, per_class_iou, precision_recall
from dualaffinity.pseudolabel import IGNORE


def brute_metrics(pred, gt, n_classes):
    """Per-class pixel sets, intersected and united directly."""
    coords = [(i, j) for i in range(gt.shape[0]) for j in range(gt.shape[1])
              if gt[i, j] != IGNORE and pred[i, j] != IGNORE]
    ious, precs, recs = [], [], []
    for c in range(n_classes):
        p = {xy for xy in coords if pred[xy] == c}
        g = {xy for xy in coords if gt[xy] == c}
        if p | g:
            ious.append(len(p & g) / len(p | g))
        if p:
            precs.append(len(p & g) / len(p))
        if g:
            recs.append(len(p & g) / len(g))
    mean = lambda v: sum(v) / len(v) if v else float("nan")  # noqa: E731
    return mean(ious), mean(precs), mean(recs)


def test_perfect_prediction_is_diagonal(rng):
    gt = rng.integers(0, 3, size=(5, 5))
    cm = ConfusionMatrix(3).accumulate(gt, gt)
    assert (cm.counts == np.diag(np.diag(cm.counts))).all()
    assert miou(cm) == 1.0


def test_all_ignore_gives_empty_matrix(rng):
    cm = ConfusionMatrix(3).accumulate(rng.integers(0, 3, size=(4, 4)), np.full((4, 4), IGNORE))
    assert cm.total == 0
    assert format_metric(miou(cm)) == NA


def test_hand_two_by_two():
    gt = np.array([[0, 1], [1, 1]])
    pred = np.array([[0, 0], [1, IGNORE]])
    cm = ConfusionMatrix(2).accumulate(pred, gt)
    assert cm.counts.tolist() == [[1, 0], [1, 1]]


def test_half_half_example():
    gt = np.array([[0, 0, 1, 1]])
    cm = ConfusionMatrix(2).accumulate(np.zeros((1, 4), int), gt)
    np.testing.assert_allclose(per_class_iou(cm), [0.5, 0.0])
    assert miou(cm) == 0.25


def test_absent_class_excluded_from_mean():
    gt = np.array([[0, 1]])
    cm = ConfusionMatrix(4).accumulate(gt, gt)
    assert miou(cm) == 1.0
    assert precision_recall(cm) == (1.0, 1.0)


def test_matrix_addition_and_errors():
    a = ConfusionMatrix(2).accumulate(np.array([[0, 1]]), np.array([[0, 1]]))
    assert (a + a).total == 4
    with pytest.raises(ValueError):
        ConfusionMatrix(2).accumulate(np.array([[2]]), np.array([[0]]))
    with pytest.raises(ValueError):
        ConfusionMatrix(2).accumulate(np.zeros((1, 2), int), np.zeros((2, 1), int))


def test_format_metric():
    assert format_metric(0.123456) == "0.1235"
    assert format_metric(float("nan")) == NA


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 5))
def test_matches_brute_force(seed, n_classes):
    rng = np.random.default_rng(seed)
    gt = rng.integers(0, n_classes, size=(8, 8))
    pred = rng.integers(0, n_classes, size=(8, 8))
    gt[rng.uniform(size=gt.shape) < 0.1] = IGNORE
    pred[rng.uniform(size=pred.shape) < 0.1] = IGNORE
    cm = ConfusionMatrix(n_classes).accumulate(pred, gt)
    ref_iou, ref_p, ref_r = brute_metrics(pred, gt, n_classes)
    assert miou(cm) == pytest.approx(ref_iou, abs=1e-12)
    assert precision_recall(cm) == pytest.approx((ref_p, ref_r), abs=1e-12)
