import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dualaffinity import DualAffinitySegmenter
from dualaffinity.tensor import DimensionError

FAST = dict(num_stages=1, cls_epochs=1, max_epochs=1, crf_iterations=1, scales=(1.0,))


@pytest.fixture(scope="module")
def fitted(tiny_dataset):
    est = DualAffinitySegmenter(**{**FAST, "num_stages": 2})
    return est.fit([s.image for s in tiny_dataset], [s.image_labels for s in tiny_dataset],
                   saliency=[s.oracle_saliency for s in tiny_dataset],
                   masks=[s.gt_mask for s in tiny_dataset])


def test_params_roundtrip():
    est = DualAffinitySegmenter(cam_thresh=0.3)
    params = est.get_params()
    assert params["cam_thresh"] == 0.3 and params["sal_thresh"] == 0.06
    assert params["scales"] == (0.5, 1.0, 1.5)
    assert clone(est).get_params() == params
    assert est.set_params(num_stages=2).num_stages == 2


def test_history_rows(fitted):
    rows = [(r["stage"], r["split"]) for r in fitted.history_]
    assert rows == [(0, "pgt"), (1, "seg"), (1, "pgt"), (2, "seg"), (2, "pgt")]
    assert [s.provenance for s in fitted.stages_] == [
        "classifier_cam+oracle_saliency",
        "refined_cam:stage1+crf_saliency:stage1",
        "refined_cam:stage2+crf_saliency:stage2",
    ]


def test_predict_shapes(fitted, tiny_dataset):
    X = [s.image for s in tiny_dataset[:2]]
    proba = fitted.predict_proba(X)
    assert proba.shape == (2, 4, 64, 64)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
    labels = fitted.predict(X)
    assert labels.shape == (2, 64, 64) and labels.dtype == np.uint8
    np.testing.assert_array_equal(labels, proba.argmax(axis=1))
    cams = fitted.transform(X)
    assert cams.shape == (2, 3, 64, 64) and cams.min() >= 0 and cams.max() <= 1
    assert 0.0 <= fitted.score(X, [s.gt_mask for s in tiny_dataset[:2]]) <= 1.0


def test_multi_hot_labels_accepted(tiny_dataset):
    est = DualAffinitySegmenter(**FAST)
    hot = [[1.0 if c in s.image_labels else 0.0 for c in (1, 2, 3)] for s in tiny_dataset[:2]]
    est.fit([s.image for s in tiny_dataset[:2]], hot,
            saliency=[s.oracle_saliency for s in tiny_dataset[:2]])
    assert est.history_ == []


def test_not_fitted():
    with pytest.raises(NotFittedError):
        DualAffinitySegmenter().predict(np.zeros((3, 8, 8)))


def test_input_validation(tiny_dataset):
    s = tiny_dataset[0]
    est = DualAffinitySegmenter(**FAST)
    with pytest.raises(DimensionError):
        est.fit([np.zeros((2, 8, 8))], [{1}], saliency=[np.zeros((8, 8))])
    with pytest.raises(ValueError):
        est.fit([s.image], [{1}], saliency=None)
    with pytest.raises(ValueError):
        est.fit([s.image], [{5}], saliency=[s.oracle_saliency])
    with pytest.raises(ValueError):
        est.fit([s.image], [s.image_labels], saliency=[s.oracle_saliency * 2])
    with pytest.raises(ValueError):
        DualAffinitySegmenter(**{**FAST, "num_stages": 0}).fit(
            [s.image], [s.image_labels], saliency=[s.oracle_saliency])
