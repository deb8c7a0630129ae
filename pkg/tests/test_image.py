import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lf2hf.errors import DimensionError, ImageError
from lf2hf.image import (
    BOUNDARIES,
    Kernel,
    Volume,
    adjoint_convolve_same,
    background_mask,
    convolve_same,
    percentile,
    robust_normalize,
    shifted_copies,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_percentile_examples():
    img = np.array([[0.0, 1.0, 2.0, 3.0]])
    assert percentile(img, q=0.0) == 0.0
    assert percentile(img, q=1.0) == 3.0
    assert percentile(np.full((2, 2), 5.0), q=0.37) == 5.0
    # nearest rank: ceil(0.5 * 3) = 2
    assert percentile(img, q=0.5) == 2.0


def test_percentile_empty_mask():
    with pytest.raises(ImageError) as e:
        percentile(np.ones((3, 3)), np.zeros((3, 3), bool), 0.5)
    assert e.value.code == "empty-mask"


@given(arrays(np.float64, (5, 7), elements=finite), st.floats(0, 1), st.floats(0, 1), st.randoms())
def test_percentile_permutation_invariant_and_monotone(img, q1, q2, rnd):
    flat = img.ravel().tolist()
    rnd.shuffle(flat)
    perm = np.array(flat).reshape(img.shape)
    assert percentile(img, q=q1) == percentile(perm, q=q1)
    lo, hi = sorted((q1, q2))
    assert percentile(img, q=lo) <= percentile(img, q=hi)


def test_robust_normalize_examples():
    img = np.linspace(0, 100, 50).reshape(5, 10)
    out, s = robust_normalize(img, q_hi=1.0)
    assert s == 100.0 and out.max() == 1.0
    unit = np.linspace(0, 1, 50).reshape(5, 10)
    out, s = robust_normalize(unit, q_hi=1.0)
    assert s == 1.0 and np.array_equal(out, unit)


def test_robust_normalize_clamps_outlier():
    img = np.zeros((40, 50))
    img[0, 0] = 1000.0
    out, s = robust_normalize(img, q_hi=0.999)
    assert out[0, 0] == 1.0 and s == 1000.0
    # with an explicit foreground the outlier sits above the scale and is clipped
    img[5:35, 5:45] = 10.0
    fg = img > 0
    out, s = robust_normalize(img, q_hi=0.999, mask=fg)
    # 1201 foreground values; rank ceil(0.999 * 1200) = 1199 is still 10
    assert s == 10.0 and out[0, 0] == 1.0 and out[10, 10] == 1.0


def test_robust_normalize_degenerate():
    with pytest.raises(ImageError) as e:
        robust_normalize(np.zeros((4, 4)))
    assert e.value.code == "degenerate-image"


@settings(max_examples=50)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**16))
def test_robust_normalize_scale_invariant(alpha, seed):
    img = np.random.default_rng(seed).random((16, 16))
    a, _ = robust_normalize(img)
    b, _ = robust_normalize(alpha * img)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_background_mask_examples():
    assert not background_mask(np.zeros((3, 3))).any()
    assert background_mask(np.ones((3, 3))).all()
    assert background_mask(np.array([[0.01, 0.5]])).tolist() == [[False, True]]


def test_non_finite_rejected():
    img = np.ones((4, 4))
    img[1, 1] = np.nan
    with pytest.raises(ImageError) as e:
        convolve_same(img, Kernel.delta(3))
    assert e.value.code == "non-finite"


def test_kernel_invariants():
    with pytest.raises(ImageError):
        Kernel(np.ones((4, 4)))
    with pytest.raises(ImageError):
        Kernel(np.array([[np.inf]]))
    with pytest.raises(ImageError):
        Kernel(np.ones((3, 3)), boundary="mirror")
    assert Kernel.gaussian(5, 1.0).taps.sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("boundary", BOUNDARIES)
def test_delta_is_identity(boundary):
    img = np.random.default_rng(1).random((9, 11))
    k = Kernel.delta(5, boundary)
    assert np.array_equal(convolve_same(img, k), img)
    assert np.array_equal(adjoint_convolve_same(img, k), img)


def test_box_preserves_constant():
    img = np.full((10, 12), 0.37)
    np.testing.assert_allclose(convolve_same(img, Kernel.box(5)), img, rtol=1e-15)


def test_ramp_shift_zero_boundary():
    # hand convolution: out[j] = sum_m k[m] * img[j - (m - 1)], k = [1, 0, 0]
    ramp = np.array([[1.0, 2.0, 3.0, 4.0, 5.0]])
    out = convolve_same(ramp, Kernel(np.array([[1.0, 0.0, 0.0]]), "zero"))
    assert out.tolist() == [[2.0, 3.0, 4.0, 5.0, 0.0]]


def test_symmetric_circular_self_adjoint():
    img = np.random.default_rng(2).random((12, 12))
    k = Kernel.gaussian(5, 1.3, "circular")
    np.testing.assert_allclose(adjoint_convolve_same(img, k), convolve_same(img, k), rtol=1e-13)


@pytest.mark.parametrize("boundary", BOUNDARIES)
def test_adjoint_inner_product(boundary):
    rng = np.random.default_rng(3)
    for _ in range(10):
        u, v = rng.normal(size=(2, 32, 32))
        k = Kernel(rng.normal(size=(5, 5)), boundary)
        lhs = np.vdot(convolve_same(u, k), v)
        rhs = np.vdot(u, adjoint_convolve_same(v, k))
        assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(u) * np.linalg.norm(v)


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(BOUNDARIES),
    st.sampled_from([1, 3, 5, 7]),
    st.integers(7, 20),
    st.integers(7, 20),
    st.integers(0, 2**16),
)
def test_adjoint_property(boundary, p, h, w, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(2, h, w))
    k = Kernel(rng.normal(size=(p, p)), boundary)
    lhs = np.vdot(convolve_same(u, k), v)
    rhs = np.vdot(u, adjoint_convolve_same(v, k))
    assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(u) * np.linalg.norm(v)


@pytest.mark.parametrize("boundary", BOUNDARIES)
def test_convolution_matches_shifted_copies(boundary):
    rng = np.random.default_rng(4)
    img = rng.random((10, 13))
    k = Kernel(rng.random((3, 3)), boundary)
    S = shifted_copies(img, 3, boundary)
    np.testing.assert_allclose(np.tensordot(k.taps.ravel(), S, axes=1), convolve_same(img, k), rtol=1e-13)


def test_kernel_too_large():
    with pytest.raises(ImageError) as e:
        convolve_same(np.ones((4, 4)), Kernel.delta(5))
    assert e.value.code == "kernel-too-large"


def test_volume_invariants():
    v = Volume(np.zeros((4, 5)))
    assert v.dims == (4, 5, 1)
    with pytest.raises(DimensionError):
        Volume(np.zeros((4, 5, 2, 2)))
