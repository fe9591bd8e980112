import numpy as np
import pytest

from vidadapt import _kernels
from vidadapt.errors import ContractViolation
from vidadapt.model import FEATURE_DIM, extract_features, frame_features


def test_uniform_gray_image_features():
    img = np.full((4, 6, 3), 0.5)
    h, w = 4, 6
    for (x, y) in [(0, 0), (3, 2), (5, 3)]:
        feats = extract_features(img, y * w + x)
        expected = np.array([0.5, 0.5, 0.5, x / w, y / h, 0.5, 0.5, 0.5, 0.0, 1.0])
        np.testing.assert_array_equal(feats, expected)


def test_single_pixel_image_clamps_everything():
    img = np.zeros((1, 1, 3))
    img[0, 0] = (0.2, 0.4, 0.6)
    feats = extract_features(img, 0)
    np.testing.assert_allclose(feats[:3], [0.2, 0.4, 0.6])
    assert feats[3] == 0.0 and feats[4] == 0.0
    np.testing.assert_allclose(feats[5:8], [0.2, 0.4, 0.6])
    assert feats[8] == 0.0
    assert feats[9] == 1.0


def test_step_edge_gradient_matches_direct_arithmetic():
    # Column 0 black, columns 1..2 white.
    img = np.zeros((3, 3, 3))
    img[:, 1:] = 1.0

    def lum(x, y):
        r, g, b = img[y, x]
        return 0.299 * r + 0.587 * g + 0.114 * b

    # Independent central-difference oracle with clamped neighbors.
    def oracle(x, y):
        xl, xh = max(x - 1, 0), min(x + 1, 2)
        yl, yh = max(y - 1, 0), min(y + 1, 2)
        dx = (lum(xh, y) - lum(xl, y)) * 0.5
        dy = (lum(x, yh) - lum(x, yl)) * 0.5
        return np.sqrt(dx * dx + dy * dy)

    feats = frame_features(img)
    for y in range(3):
        for x in range(3):
            assert feats[y * 3 + x, 8] == pytest.approx(oracle(x, y), abs=1e-15)
    # The center pixel sees the black column at distance one: |1-0|/2.
    assert feats[4, 8] == pytest.approx(0.5)


def test_out_of_bounds_pixel_index_rejected():
    img = np.zeros((2, 2, 3))
    with pytest.raises(ContractViolation):
        extract_features(img, 4)
    with pytest.raises(ContractViolation):
        extract_features(img, -1)


def test_constant_component_and_shape():
    rng = np.random.default_rng(3)
    img = rng.random((7, 5, 3))
    feats = frame_features(img)
    assert feats.shape == (35, FEATURE_DIM)
    assert np.all(feats[:, 9] == 1.0)
    assert np.isfinite(feats).all()


@pytest.mark.skipif(not _kernels.NUMBA_ENABLED, reason="numba path disabled")
def test_numba_and_numpy_feature_paths_agree_bitwise():
    rng = np.random.default_rng(11)
    for shape in [(1, 1), (2, 3), (9, 9), (17, 23)]:
        img = np.ascontiguousarray(rng.random(shape + (3,)))
        a = _kernels.extract_features_jit(img)
        b = _kernels.extract_features_numpy(img)
        np.testing.assert_array_equal(a, b)


@pytest.mark.skipif(not _kernels.NUMBA_ENABLED, reason="numba path disabled")
def test_numba_and_numpy_block_match_agree_on_structured_inputs():
    rng = np.random.default_rng(12)
    a = rng.random((24, 24))
    b = np.zeros_like(a)
    b[:, 3:] = a[:, :-3]
    b[:, :3] = a[:, :3]
    prior = np.zeros((24, 24))
    u1, v1 = _kernels.block_match_jit(a, b, prior, prior, 8, 4)
    u2, v2 = _kernels.block_match_numpy(a, b, prior, prior, 8, 4)
    np.testing.assert_array_equal(u1, u2)
    np.testing.assert_array_equal(v1, v2)
    # identical frames: exact zero everywhere on both paths
    u1, v1 = _kernels.block_match_jit(a, a, prior, prior, 8, 4)
    u2, v2 = _kernels.block_match_numpy(a, a, prior, prior, 8, 4)
    assert not u1.any() and not v1.any()
    assert not u2.any() and not v2.any()
