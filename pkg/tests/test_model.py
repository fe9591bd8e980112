import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidadapt.errors import ConfigurationError, ContractViolation
from vidadapt.labels import IGNORE_LABEL
from vidadapt.model import (
    ModelParameters,
    ReferenceSegmenter,
    TrainConfig,
    argmax_labels,
    frame_features,
    load_params,
    masked_cross_entropy,
    predict,
    save_params,
    sgd_fine_tune,
    validate_probability_volume,
)


def rand_params(rng, k=3, scale=1.0):
    return ModelParameters(rng.normal(0.0, scale, (k, 10)))


def test_zero_weights_predict_uniform():
    img = np.random.default_rng(0).random((3, 4, 3))
    vol = predict(ModelParameters.zeros(4), img)
    np.testing.assert_array_equal(vol, np.full((3, 4, 4), 0.25))


def test_dominant_bias_saturates():
    weights = np.zeros((3, 10))
    weights[2, 9] = 100.0  # constant-feature bias
    vol = predict(ModelParameters(weights), np.random.default_rng(1).random((4, 4, 3)))
    assert vol[:, :, 2].min() > 0.999


def test_predict_matches_scalar_softmax_oracle():
    rng = np.random.default_rng(2)
    img = rng.random((4, 4, 3))
    params = rand_params(rng)
    vol = predict(params, img).reshape(-1, 3)
    feats = frame_features(img)
    for i in range(16):
        logits = [
            sum(params.weights[k, d] * feats[i, d] for d in range(10)) for k in range(3)
        ]
        m = max(logits)
        exps = [math.exp(z - m) for z in logits]
        total = sum(exps)
        for k in range(3):
            assert vol[i, k] == pytest.approx(exps[k] / total, abs=1e-12)


def test_predict_shape_mismatch_rejected():
    with pytest.raises(ConfigurationError):
        predict(ModelParameters(np.zeros((3, 7))), np.zeros((2, 2, 3)))


def test_argmax_ties_break_low_and_match_linear_scan():
    rng = np.random.default_rng(3)
    vol = rng.random((8, 8, 4))
    vol /= vol.sum(axis=2, keepdims=True)
    labels = argmax_labels(vol)
    for y in range(8):
        for x in range(8):
            best = 0
            for c in range(1, 4):
                if vol[y, x, c] > vol[y, x, best]:
                    best = c
            assert labels[y, x] == best
    uniform = np.full((2, 2, 3), 1 / 3)
    np.testing.assert_array_equal(argmax_labels(uniform), np.zeros((2, 2), np.uint8))
    assert argmax_labels(np.array([[[0.1, 0.7, 0.2]]]))[0, 0] == 1


def test_masked_cross_entropy_examples():
    prob = np.zeros((1, 2, 2))
    prob[0, 0] = (0.5, 0.5)
    prob[0, 1] = (0.25, 0.75)
    target = np.zeros((1, 2), dtype=np.uint8)
    expected = -(math.log(0.5) + math.log(0.25)) / 2
    assert masked_cross_entropy(prob, target) == pytest.approx(expected, abs=1e-12)

    all_ignore = np.full((1, 2), IGNORE_LABEL, dtype=np.uint8)
    assert masked_cross_entropy(prob, all_ignore) == 0.0

    perfect = np.array([[[0.0, 1.0]]])
    assert masked_cross_entropy(perfect, np.array([[1]], np.uint8)) == 0.0

    with pytest.raises(ContractViolation):
        masked_cross_entropy(prob, np.zeros((3, 3), np.uint8))


def test_ignore_pixels_never_affect_loss():
    rng = np.random.default_rng(4)
    prob = rng.random((5, 5, 3))
    prob /= prob.sum(axis=2, keepdims=True)
    target = rng.integers(0, 3, (5, 5)).astype(np.uint8)
    target[1, 1] = IGNORE_LABEL
    target[3, 4] = IGNORE_LABEL
    before = masked_cross_entropy(prob, target)
    tweaked = prob.copy()
    tweaked[1, 1] = (0.98, 0.01, 0.01)
    tweaked[3, 4] = (0.01, 0.01, 0.98)
    assert masked_cross_entropy(tweaked, target) == before


def test_sgd_zero_learning_rate_is_identity():
    rng = np.random.default_rng(5)
    params = rand_params(rng)
    img = rng.random((4, 4, 3))
    labels = rng.integers(0, 3, (4, 4)).astype(np.uint8)
    out = sgd_fine_tune(params, [(img, labels)], TrainConfig(learning_rate=0.0))
    np.testing.assert_array_equal(out.weights, params.weights)
    assert out is not params


def test_sgd_all_ignore_dataset_is_bitwise_identity():
    rng = np.random.default_rng(6)
    params = rand_params(rng)
    img = rng.random((4, 4, 3))
    labels = np.full((4, 4), IGNORE_LABEL, dtype=np.uint8)
    cfg = TrainConfig(learning_rate=0.5, momentum=0.9, weight_decay=0.01, iterations=7)
    out = sgd_fine_tune(params, [(img, labels)] * 3, cfg)
    np.testing.assert_array_equal(out.weights, params.weights)
    np.testing.assert_array_equal(out.momentum, params.momentum)


def test_sgd_single_step_matches_finite_difference_gradient():
    rng = np.random.default_rng(7)
    params = rand_params(rng, scale=0.3)
    img = rng.random((2, 2, 3))
    labels = np.array([[0, 1], [2, IGNORE_LABEL]], dtype=np.uint8)
    lr = 0.05
    cfg = TrainConfig(
        learning_rate=lr, momentum=0.0, weight_decay=0.0, iterations=1, pixel_subsample=0
    )
    out = sgd_fine_tune(params, [(img, labels)], cfg)
    analytic = (params.weights - out.weights) / lr

    eps = 1e-5
    fd = np.zeros_like(params.weights)
    for k in range(3):
        for d in range(10):
            wp = params.weights.copy()
            wp[k, d] += eps
            wm = params.weights.copy()
            wm[k, d] -= eps
            lp = masked_cross_entropy(predict(ModelParameters(wp), img), labels)
            lm = masked_cross_entropy(predict(ModelParameters(wm), img), labels)
            fd[k, d] = (lp - lm) / (2 * eps)
    rel = np.abs(analytic - fd) / np.maximum(np.abs(fd), 1e-8)
    assert rel.max() < 1e-4


def test_sgd_momentum_and_decay_follow_stated_update_rule():
    rng = np.random.default_rng(8)
    params = rand_params(rng, scale=0.2)
    img = rng.random((3, 3, 3))
    labels = rng.integers(0, 3, (3, 3)).astype(np.uint8)
    lr, mu, wd = 0.1, 0.7, 0.01

    # One full-sampling step has a closed form given the analytic gradient.
    base = sgd_fine_tune(
        params,
        [(img, labels)],
        TrainConfig(learning_rate=1.0, momentum=0.0, weight_decay=0.0, iterations=1, pixel_subsample=0),
    )
    grad = params.weights - base.weights
    v1 = mu * params.momentum - lr * (grad + wd * params.weights)
    expected = params.weights + v1

    out = sgd_fine_tune(
        params,
        [(img, labels)],
        TrainConfig(learning_rate=lr, momentum=mu, weight_decay=wd, iterations=1, pixel_subsample=0),
    )
    np.testing.assert_allclose(out.weights, expected, rtol=0, atol=1e-14)
    np.testing.assert_allclose(out.momentum, v1, rtol=0, atol=1e-14)


def test_sgd_deterministic_under_seed_and_inputs():
    rng = np.random.default_rng(9)
    params = rand_params(rng)
    data = []
    for _ in range(3):
        img = rng.random((6, 6, 3))
        labels = rng.integers(0, 3, (6, 6)).astype(np.uint8)
        labels[rng.random((6, 6)) < 0.3] = IGNORE_LABEL
        data.append((img, labels))
    cfg = TrainConfig(iterations=9, pixel_subsample=8, seed=123)
    a = sgd_fine_tune(params, data, cfg)
    b = sgd_fine_tune(params, data, cfg)
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.momentum, b.momentum)
    c = sgd_fine_tune(params, data, TrainConfig(iterations=9, pixel_subsample=8, seed=124))
    assert not np.array_equal(a.weights, c.weights)


def test_sgd_empty_dataset_returns_params_unchanged():
    params = rand_params(np.random.default_rng(10))
    out = sgd_fine_tune(params, [], TrainConfig())
    np.testing.assert_array_equal(out.weights, params.weights)


def test_sgd_mismatched_entry_dimensions_rejected():
    params = rand_params(np.random.default_rng(11))
    with pytest.raises(ContractViolation):
        sgd_fine_tune(
            params,
            [(np.zeros((3, 3, 3)), np.zeros((2, 2), np.uint8))],
            TrainConfig(),
        )


def test_sgd_out_of_range_labels_rejected():
    params = rand_params(np.random.default_rng(12))  # 3 classes
    labels = np.full((3, 3), 7, np.uint8)
    with pytest.raises(ContractViolation):
        sgd_fine_tune(params, [(np.zeros((3, 3, 3)), labels)], TrainConfig())


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    h=st.integers(1, 6),
    w=st.integers(1, 6),
    k=st.integers(2, 5),
)
def test_softmax_rows_normalize(seed, h, w, k):
    rng = np.random.default_rng(seed)
    vol = predict(ModelParameters(rng.normal(0, 2, (k, 10))), rng.random((h, w, 3)))
    validate_probability_volume(vol)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.1, 10.0))
def test_argmax_invariant_to_positive_logit_scaling(seed, scale):
    rng = np.random.default_rng(seed)
    weights = rng.normal(0, 1, (4, 10))
    img = rng.random((5, 5, 3))
    a = argmax_labels(predict(ModelParameters(weights), img))
    b = argmax_labels(predict(ModelParameters(scale * weights), img))
    np.testing.assert_array_equal(a, b)


def test_params_file_roundtrip(tmp_path):
    rng = np.random.default_rng(12)
    params = ModelParameters(
        rng.normal(0, 1, (3, 10)).astype(np.float32).astype(np.float64),
        rng.normal(0, 1, (3, 10)).astype(np.float32).astype(np.float64),
    )
    path = tmp_path / "model.vapm"
    save_params(params, path)
    loaded = load_params(path)
    np.testing.assert_array_equal(loaded.weights, params.weights)
    np.testing.assert_array_equal(loaded.momentum, params.momentum)
    blob = path.read_bytes()
    assert blob[:4] == b"VAPM"

    with pytest.raises(ConfigurationError):
        load_params(__file__)
    bad = tmp_path / "trunc.vapm"
    bad.write_bytes(blob[:-4])
    with pytest.raises(ConfigurationError):
        load_params(bad)


def test_reference_segmenter_contract():
    rng = np.random.default_rng(13)
    seg = ReferenceSegmenter(rand_params(rng))
    imgs = [rng.random((3, 3, 3)) for _ in range(2)]
    vols = seg.predict_sequence(imgs)
    np.testing.assert_array_equal(vols[0], seg.predict(imgs[0]))
    labels = rng.integers(0, 3, (3, 3)).astype(np.uint8)
    tuned = seg.fine_tuned([(imgs[0], labels)], TrainConfig(learning_rate=0.1))
    assert tuned is not seg
    assert not np.array_equal(tuned.params.weights, seg.params.weights)
