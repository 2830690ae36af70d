import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualaffinity import affinity as A
from dualaffinity.tensor import DimensionError


def random_projection(rng, d, scale=1.0):
    return A.ProjectionParams(*(scale * rng.normal(size=s) for s in
                                [(d, d), (d,), (d, d), (d,), (d, d), (d,), (1, d), (1,)]))


def random_fusion(rng, hidden=4):
    shapes = [(hidden, 2), (hidden,), (2, hidden), (2,)] * 2
    return A.FusionParams(*(rng.normal(size=s) for s in shapes))


def brute_pairwise(f, proj):
    d, h, w = f.shape
    pix = f.reshape(d, -1).T
    q = pix @ proj.w_q.T + proj.b_q
    k = pix @ proj.w_k.T + proj.b_k
    n = h * w
    out = np.zeros((n, n))
    for i in range(n):
        logits = [float(q[i] @ k[j]) for j in range(n)]
        top = max(logits)
        ex = [math.exp(v - top) for v in logits]
        out[i] = [e / sum(ex) for e in ex]
    return out


def test_pairwise_zero_logits_uniform(rng):
    f = rng.normal(size=(3, 2, 3))
    a = A.pairwise_affinity(f, A.ProjectionParams.zeros(3))
    np.testing.assert_allclose(a.matrix, 1.0 / 6)


def test_pairwise_single_position(rng):
    a = A.pairwise_affinity(rng.normal(size=(4, 1, 1)), random_projection(rng, 4))
    np.testing.assert_array_equal(a.matrix, [[1.0]])


def test_pairwise_matches_brute_force(rng):
    f = rng.normal(size=(3, 1, 2))
    proj = random_projection(rng, 3)
    np.testing.assert_allclose(A.pairwise_affinity(f, proj).matrix, brute_pairwise(f, proj),
                               atol=1e-12)


def test_pairwise_rejects_wrong_projection(rng):
    with pytest.raises(DimensionError):
        A.pairwise_affinity(rng.normal(size=(3, 2, 2)), A.ProjectionParams.zeros(4))


def test_aggregate_pairwise_selectors(rng):
    v = rng.normal(size=(2, 2, 3))
    np.testing.assert_allclose(A.aggregate_pairwise(A.PairwiseAffinity.identity(2, 3), v), v)
    uni = A.aggregate_pairwise(A.PairwiseAffinity.uniform(2, 3), v)
    np.testing.assert_allclose(uni, np.broadcast_to(v.mean(axis=(1, 2))[:, None, None], v.shape))
    sel = np.zeros((6, 6))
    sel[:, 4] = 1.0
    out = A.aggregate_pairwise(A.PairwiseAffinity(sel, (2, 3)), v)
    np.testing.assert_allclose(out, np.broadcast_to(v[:, 1, 1][:, None, None], v.shape))


def test_aggregate_pairwise_shape_mismatch(rng):
    with pytest.raises(DimensionError):
        A.aggregate_pairwise(A.PairwiseAffinity.identity(2, 2), rng.normal(size=(1, 3, 3)))


def test_unary_examples(rng):
    f = rng.normal(size=(3, 2, 2))
    np.testing.assert_allclose(A.unary_affinity(f, A.ProjectionParams.zeros(3)).map, 0.25)
    one = A.unary_affinity(rng.normal(size=(3, 1, 1)), random_projection(rng, 3))
    np.testing.assert_array_equal(one.map, [1.0])
    proj = A.ProjectionParams.zeros(1)
    proj.w_u = np.array([[1.0]])
    f = np.array([[[0.0, math.log(3.0)]]])
    np.testing.assert_allclose(A.unary_affinity(f, proj).map, [0.25, 0.75])


def test_aggregate_unary_examples(rng):
    v = rng.normal(size=(2, 3, 2))
    out = A.aggregate_unary(A.UnaryAffinity.one_hot(3, 2, 5), v)
    np.testing.assert_allclose(out, np.broadcast_to(v[:, 2, 1][:, None, None], v.shape))
    out = A.aggregate_unary(A.UnaryAffinity.uniform(3, 2), v)
    np.testing.assert_allclose(out, np.broadcast_to(v.mean(axis=(1, 2))[:, None, None], v.shape))
    const = np.full((2, 3, 2), 1.7)
    u = A.UnaryAffinity(A.softmax(rng.normal(size=6)), (3, 2))
    np.testing.assert_allclose(A.aggregate_unary(u, const), const)


def saturating_fusion(channel):
    fp = A.FusionParams.zeros(4)
    for kind in ("p", "u"):
        b2 = np.zeros(2)
        b2[channel] = 60.0
        setattr(fp, f"{kind}_b2", b2)
    return fp


def test_fuse_pairwise_saturation_and_fixed_point(rng):
    a1 = A.PairwiseAffinity(A.softmax(rng.normal(size=(4, 4)), axis=1), (2, 2))
    a2 = A.PairwiseAffinity(A.softmax(rng.normal(size=(4, 4)), axis=1), (2, 2))
    np.testing.assert_allclose(A.fuse_pairwise(a1, a2, saturating_fusion(0)).matrix, a1.matrix,
                               atol=1e-12)
    np.testing.assert_allclose(A.fuse_pairwise(a1, a2, saturating_fusion(1)).matrix, a2.matrix,
                               atol=1e-12)
    np.testing.assert_allclose(A.fuse_pairwise(a1, a1, random_fusion(rng)).matrix, a1.matrix,
                               atol=1e-12)


def test_fuse_hand_weights():
    # zero hidden layer, bias logits chosen so softmax gives 0.3 / 0.7
    fp = A.FusionParams.zeros(4)
    fp.p_b2 = np.array([math.log(0.3), math.log(0.7)])
    fp.u_b2 = fp.p_b2.copy()
    a1 = A.PairwiseAffinity(np.array([[0.9, 0.1], [0.2, 0.8]]), (1, 2))
    a2 = A.PairwiseAffinity(np.array([[0.5, 0.5], [0.6, 0.4]]), (1, 2))
    mix = 0.3 * a1.matrix + 0.7 * a2.matrix
    np.testing.assert_allclose(A.fuse_pairwise(a1, a2, fp).matrix,
                               mix / mix.sum(axis=1, keepdims=True), atol=1e-12)
    u1 = A.UnaryAffinity(np.array([0.25, 0.75]), (1, 2))
    u2 = A.UnaryAffinity(np.array([0.9, 0.1]), (1, 2))
    np.testing.assert_allclose(A.fuse_unary(u1, u2, fp).map,
                               [0.3 * 0.25 + 0.7 * 0.9, 0.3 * 0.75 + 0.7 * 0.1], atol=1e-12)
    np.testing.assert_allclose(A.fuse_unary(u1, u1, fp).map, u1.map)


def test_dual_forward_pure_residual(rng):
    f = rng.normal(size=(3, 2, 2))
    g = rng.normal(size=(3, 2, 2))
    out = A.dual_affinity_forward(f, g, A.ProjectionParams.zeros(3), A.ProjectionParams.zeros(3),
                                  A.FusionParams.zeros())
    np.testing.assert_array_equal(out.f_sal_out, f)
    np.testing.assert_array_equal(out.f_seg_out, g)


def test_dual_forward_single_position(rng):
    f = rng.normal(size=(4, 1, 1))
    proj = random_projection(rng, 4)
    out = A.dual_affinity_forward(f, f, proj, proj, random_fusion(rng))
    v = proj.w_v @ f[:, 0, 0] + proj.b_v
    np.testing.assert_allclose(out.f_sal_out[:, 0, 0], 2 * v + f[:, 0, 0])
    np.testing.assert_array_equal(out.a_ct_pairwise.matrix, [[1.0]])
    np.testing.assert_array_equal(out.a_ct_unary.map, [1.0])


def test_dual_forward_extent_mismatch(rng):
    with pytest.raises(DimensionError):
        A.dual_affinity_forward(np.zeros((2, 2, 2)), np.zeros((2, 3, 2)),
                                A.ProjectionParams.zeros(2), A.ProjectionParams.zeros(2),
                                A.FusionParams.zeros())


def test_op_count_examples():
    base, over = A.op_count(8, 8, 4)
    assert (base, over) == (17408, 4352)
    base, over = A.op_count(3, 5, 1)
    assert over / base == 1.0
    base, over = A.op_count(16, 16, 128)
    assert over / base == pytest.approx(1 / 128, abs=0)
    assert A.op_count(4, 4, 8, variant="pairwise_only")[1] == 0
    with pytest.raises(ValueError):
        A.op_count(4, 4, 8, variant="other")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 5), st.integers(0, 10 ** 6))
def test_dual_forward_shape_contract(h, w, d, seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(d, h, w))
    out = A.dual_affinity_forward(f, rng.normal(size=f.shape), random_projection(rng, d),
                                  random_projection(rng, d), random_fusion(rng))
    assert out.f_sal_out.shape == f.shape and out.f_seg_out.shape == f.shape
    np.testing.assert_allclose(out.a_ct_pairwise.matrix.sum(axis=1), 1.0, atol=1e-9)
    assert out.a_ct_unary.map.sum() == pytest.approx(1.0)
