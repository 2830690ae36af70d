import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualaffinity.affinity import PairwiseAffinity, UnaryAffinity
from dualaffinity.losses import (LOSS_TERMS, LossValue, LossWeights, bce_pixelwise, ce_pixelwise,
                                 finite_diff_check, multilabel_soft_margin, numerical_gradient,
                                 refine_prediction_pairwise, refine_prediction_unary, total_loss)
from dualaffinity.pseudolabel import IGNORE
from dualaffinity.tensor import softmax


def test_soft_margin_examples():
    assert multilabel_soft_margin(np.zeros(3), np.ones(3)).value == pytest.approx(math.log(2))
    assert multilabel_soft_margin(np.array([40.0]), np.array([1.0])).value < 1e-15
    assert multilabel_soft_margin(np.zeros(1), np.ones(1)).gradient[0] == pytest.approx(-0.5)


def test_bce_examples():
    t = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert bce_pixelwise(t, t).value < 1e-6
    assert bce_pixelwise(np.full((3, 3), 0.5), np.eye(3)).value == pytest.approx(math.log(2))
    assert bce_pixelwise(np.array([[0.25]]), np.array([[1.0]])).value == pytest.approx(math.log(4))


def test_ce_examples(rng):
    target = rng.integers(0, 4, size=(3, 5))
    onehot = np.eye(4)[target].transpose(2, 0, 1)
    assert ce_pixelwise(onehot, target).value == pytest.approx(0.0, abs=1e-12)
    assert ce_pixelwise(np.full((4, 3, 5), 0.25), target).value == pytest.approx(math.log(4))
    ignored = ce_pixelwise(rng.dirichlet(np.ones(4), size=(3, 5)).transpose(2, 0, 1),
                           np.full((3, 5), IGNORE))
    assert ignored.value == 0.0 and not ignored.gradient.any()


def test_ce_ignores_only_marked_pixels():
    p = np.full((2, 1, 2), 0.5)
    p[:, 0, 0] = [0.2, 0.8]
    out = ce_pixelwise(p, np.array([[1, IGNORE]]))
    assert out.value == pytest.approx(-math.log(0.8))
    assert out.gradient[:, 0, 1].tolist() == [0.0, 0.0]


def test_total_loss():
    ones = {k: 1.0 for k in LOSS_TERMS}
    assert total_loss(ones).value == 7.0
    assert total_loss(ones, LossWeights(0, 0, 0)).value == 0.0
    w = LossWeights()
    assert (w.lambda1, w.lambda2, w.lambda3) == (1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        total_loss({"cls": 1.0})


def test_total_loss_weights_terms():
    comps = {k: LossValue(float(i + 1), np.full(2, float(i + 1))) for i, k in enumerate(LOSS_TERMS)}
    out = total_loss(comps, LossWeights(2.0, 0.5, 0.0))
    assert out.value == pytest.approx(2 * 1 + 0.5 * (2 + 3 + 4))
    np.testing.assert_allclose(out.gradient["sal"], 1.0)
    np.testing.assert_allclose(out.gradient["seg_ref_p"], 0.0)


def test_refine_unary_examples(rng):
    p = rng.uniform(size=(3, 2, 2))
    out = refine_prediction_unary(p, UnaryAffinity.one_hot(2, 2, 3), renormalize=False)
    np.testing.assert_allclose(out, p + p[:, 1, 1][:, None, None])
    const = np.full((1, 2, 3), 0.3)
    u = UnaryAffinity(softmax(rng.normal(size=6)), (2, 3))
    np.testing.assert_allclose(refine_prediction_unary(const, u, renormalize=False), 0.6)
    seg = rng.dirichlet(np.ones(4), size=(2, 3)).transpose(2, 0, 1)
    np.testing.assert_allclose(refine_prediction_unary(seg, u).sum(axis=0), 1.0)


def test_refine_pairwise_examples(rng):
    p = rng.uniform(size=(2, 3, 3))
    np.testing.assert_allclose(refine_prediction_pairwise(p, PairwiseAffinity.identity(3, 3)), p)
    uni = refine_prediction_pairwise(p, PairwiseAffinity.uniform(3, 3))
    np.testing.assert_allclose(uni, np.broadcast_to(p.mean(axis=(1, 2))[:, None, None], p.shape))


def test_finite_diff_on_quadratic(rng):
    x = rng.normal(size=(4, 3))
    assert finite_diff_check(lambda v: (float((v ** 2).sum()), 2 * v), x) < 1e-6


def test_finite_diff_soft_margin(rng):
    y = (rng.uniform(size=5) > 0.5).astype(float)
    assert finite_diff_check(lambda z: (lambda lv: (lv.value, lv.gradient))(
        multilabel_soft_margin(z, y)), rng.normal(size=5)) < 1e-3


def test_finite_diff_ce_through_softmax(rng):
    target = rng.integers(0, 3, size=(2, 3))
    target[0, 0] = IGNORE

    def fn(logits):
        p = softmax(logits, axis=0)
        lv = ce_pixelwise(p, target)
        g = lv.gradient
        return lv.value, p * (g - (g * p).sum(axis=0, keepdims=True))

    assert finite_diff_check(fn, rng.normal(size=(3, 2, 3))) < 1e-3


def test_finite_diff_bce(rng):
    t = (rng.uniform(size=(3, 3)) > 0.5).astype(float)
    fn = lambda p: (lambda lv: (lv.value, lv.gradient))(bce_pixelwise(p, t))  # noqa: E731
    assert finite_diff_check(fn, rng.uniform(0.1, 0.9, size=(3, 3)), h=1e-5) < 1e-3


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(2, 5), st.integers(0, 10 ** 6))
def test_pairwise_refinement_keeps_simplex(h, w, c, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(c), size=(h, w)).transpose(2, 0, 1)
    a = PairwiseAffinity(softmax(rng.normal(size=(h * w, h * w)) * 3, axis=1), (h, w))
    out = refine_prediction_pairwise(p, a)
    np.testing.assert_allclose(out.sum(axis=0), 1.0, atol=1e-10)
    assert out.min() >= 0


def test_numerical_gradient_on_transposed_input(rng):
    x = rng.normal(size=(3, 4)).T
    np.testing.assert_allclose(numerical_gradient(lambda v: float((v * v).sum()), x), 2 * x,
                               atol=1e-8)
