import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stenvan.backbone import BatchNorm, VideoFeatures
from stenvan.errors import DimensionError
from stenvan.fpl import fpl_forward


def test_constant_avg():
    out = fpl_forward(VideoFeatures(np.full((3, 2, 4, 2), -1.25)))
    np.testing.assert_array_equal(out.pre_bn, [-1.25] * 3)


def test_identity_bn():
    x = np.random.default_rng(0).normal(size=(5, 2, 3, 3))
    out = fpl_forward(x, bn=BatchNorm(np.ones(5), np.zeros(5), np.zeros(5), np.ones(5), eps=0.0))
    np.testing.assert_array_equal(out.post_bn, out.pre_bn)


def test_default_bn_is_identity():
    out = fpl_forward(np.random.default_rng(1).normal(size=(4, 2, 2, 2)), kind="max")
    np.testing.assert_array_equal(out.post_bn, out.pre_bn)


def test_max_against_loop():
    x = np.random.default_rng(2).normal(size=(6, 3, 4, 2))
    out = fpl_forward(x, kind="max")
    expected = [max(x[c].ravel().tolist()) for c in range(6)]
    np.testing.assert_array_equal(out.pre_bn, expected)


def test_bn_applied():
    x = np.random.default_rng(3).normal(size=(2, 2, 2, 2))
    bn = BatchNorm(np.array([2.0, 1.0]), np.array([0.0, 1.0]), np.array([0.5, 0.0]), np.array([1.0, 4.0]), eps=0.0)
    out = fpl_forward(x, bn=bn)
    np.testing.assert_allclose(out.post_bn, [2 * (out.pre_bn[0] - 0.5), out.pre_bn[1] / 2 + 1])
    assert out.pre_bn.shape == out.post_bn.shape == (2,)


def test_bn_length_mismatch():
    with pytest.raises(DimensionError):
        fpl_forward(np.zeros((3, 1, 1, 1)), bn=BatchNorm.identity(2))


def test_empty_rejected():
    with pytest.raises(DimensionError):
        fpl_forward(np.zeros((3, 0, 1, 1)))


@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_avg_permutation_invariant_and_below_max(c, t, h, w, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(c, t, h, w))
    perm = rng.permutation(t * h * w)
    xp = x.reshape(c, -1)[:, perm].reshape(x.shape)
    avg = fpl_forward(x).pre_bn
    np.testing.assert_allclose(fpl_forward(xp).pre_bn, avg, rtol=0, atol=1e-12)
    assert (fpl_forward(x, kind="max").pre_bn >= avg - 1e-12).all()
