"""Per-pixel probabilistic labeling model with ignore-aware fine-tuning.

The reference model is a linear softmax classifier over ten handcrafted
per-pixel features: r, g, b, x/W, y/H, the 3x3 box means of r/g/b (edge
clamped), the central-difference luminance gradient magnitude, and a
constant 1. It stands in for a heavyweight segmentation network so that
selection and adaptation logic stays fast and exactly verifiable; real
networks participate through the external-segmenter protocol instead
(see vidadapt.protocol).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import FEATURE_DIM
from .errors import ConfigurationError, ContractViolation
from .labels import IGNORE_LABEL

PARAMS_MAGIC = b"VAPM"
PARAMS_VERSION = 1

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    """SGD hyperparameters; defaults follow the pipeline-wide defaults."""

    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 1
    iterations: int | None = None  # None: one step per dataset entry
    pixel_subsample: int = 4096  # 0: use every non-ignored pixel
    seed: int = 0
    shuffle: bool = False

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")
        if self.batch_size != 1:
            raise ConfigurationError("only batch_size=1 is supported")
        if self.pixel_subsample < 0:
            raise ConfigurationError("pixel_subsample must be >= 0")


@dataclass
class ModelParameters:
    """Weights and momentum buffer of the linear classifier, both (K, D)."""

    weights: np.ndarray
    momentum: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.momentum is None:
            self.momentum = np.zeros_like(self.weights)
        else:
            self.momentum = np.asarray(self.momentum, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape != self.momentum.shape:
            raise ContractViolation(
                "weights and momentum must share a (K, D) shape, got %r / %r"
                % (self.weights.shape, self.momentum.shape)
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.momentum).all()):
            raise ContractViolation("model parameters must be finite")

    @classmethod
    def zeros(cls, num_classes: int, feature_dim: int = FEATURE_DIM) -> "ModelParameters":
        return cls(np.zeros((num_classes, feature_dim)))

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.weights.copy(), self.momentum.copy())


def validate_image(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractViolation("image must have shape (H, W, 3), got %r" % (arr.shape,))
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ContractViolation("image must be at least 1x1")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ContractViolation("image channels must lie in [0, 1]")
    return arr


def validate_probability_volume(prob: np.ndarray, tol: float = 1e-5) -> np.ndarray:
    arr = np.asarray(prob, dtype=np.float64)
    if arr.ndim != 3:
        raise ContractViolation(
            "probability volume must have shape (H, W, K), got %r" % (arr.shape,)
        )
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ContractViolation("probabilities must lie in [0, 1]")
    sums = arr.sum(axis=2)
    if np.abs(sums - 1.0).max() > tol:
        raise ContractViolation("per-pixel probabilities must sum to 1 within %g" % tol)
    return arr


def frame_features(image: np.ndarray) -> np.ndarray:
    """(H*W, 10) feature matrix, pixels in row-major order."""
    return _kernels.extract_features(np.ascontiguousarray(image, dtype=np.float64))


def extract_features(image: np.ndarray, pixel_index: int) -> np.ndarray:
    """Feature vector of one pixel; `pixel_index` is y * width + x."""
    image = validate_image(image)
    h, w, _ = image.shape
    if not 0 <= pixel_index < h * w:
        raise ContractViolation(
            "pixel index %d out of bounds for %dx%d image" % (pixel_index, w, h)
        )
    return frame_features(image)[pixel_index].copy()


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=1, keepdims=True)
    return shifted


def predict(params: ModelParameters, image: np.ndarray) -> np.ndarray:
    """Per-pixel class probabilities, shape (H, W, K)."""
    image = validate_image(image)
    if params.feature_dim != FEATURE_DIM:
        raise ConfigurationError(
            "model expects %d features per pixel, parameters carry %d"
            % (FEATURE_DIM, params.feature_dim)
        )
    h, w, _ = image.shape
    feats = frame_features(image)
    probs = _softmax_rows(feats @ params.weights.T)
    return probs.reshape(h, w, params.num_classes)


def argmax_labels(prob: np.ndarray) -> np.ndarray:
    """Label map of per-pixel argmax; ties resolve to the lowest class index."""
    prob = np.asarray(prob)
    return prob.argmax(axis=2).astype(np.uint8)


def masked_cross_entropy(prob: np.ndarray, target: np.ndarray) -> float:
    """Mean negative log-probability of target labels, skipping IGNORE pixels."""
    prob = np.asarray(prob, dtype=np.float64)
    target = np.asarray(target)
    if prob.shape[:2] != target.shape:
        raise ContractViolation(
            "probability volume %r does not match target %r"
            % (prob.shape[:2], target.shape)
        )
    flat_t = target.ravel()
    valid = np.flatnonzero(flat_t != IGNORE_LABEL)
    if valid.size == 0:
        return 0.0
    flat_p = prob.reshape(-1, prob.shape[2])
    picked = flat_p[valid, flat_t[valid].astype(np.intp)]
    return float(-np.mean(np.log(np.maximum(picked, LOG_CLAMP))))


def _entry_features(cache: dict, index: int, image: np.ndarray) -> np.ndarray:
    feats = cache.get(index)
    if feats is None:
        feats = frame_features(validate_image(image))
        cache[index] = feats
    return feats


def sgd_fine_tune(
    params: ModelParameters,
    dataset: list[tuple[np.ndarray, np.ndarray]],
    config: TrainConfig,
) -> ModelParameters:
    """Fine-tune a copy of `params` on (image, label map) pairs.

    Steps walk the dataset in insertion order (one entry per step,
    wrapping around) unless `config.shuffle` draws a fresh permutation per
    epoch. Every step samples `pixel_subsample` non-ignored pixels without
    replacement and applies classical momentum with the weight-decay term
    folded into the gradient:

        v <- momentum * v - lr * (grad + weight_decay * w);  w <- w + v

    The velocity continues from the buffer carried by `params`; fresh and
    shipped models hold a zero buffer. A step whose entry has no
    non-ignored pixel is skipped entirely, so all-IGNORE datasets leave the
    parameters bitwise unchanged.
    """
    out = params.copy()
    if not dataset:
        return out
    for image, labels in dataset:
        labels = np.asarray(labels)
        if np.asarray(image).shape[:2] != labels.shape:
            raise ContractViolation("dataset entry image/labels dimensions differ")
        bad = (labels != IGNORE_LABEL) & (labels >= params.num_classes)
        if bad.any():
            raise ContractViolation(
                "dataset labels contain classes >= %d that are not IGNORE"
                % params.num_classes
            )

    n = len(dataset)
    iterations = config.iterations if config.iterations is not None else n
    rng = np.random.default_rng(config.seed)
    feature_cache: dict[int, np.ndarray] = {}
    perm = np.arange(n)

    w = out.weights
    v = out.momentum
    for step in range(iterations):
        pos = step % n
        if config.shuffle and pos == 0:
            perm = rng.permutation(n)
        idx = int(perm[pos])
        image, labels = dataset[idx]
        flat_t = np.asarray(labels).ravel()
        valid = np.flatnonzero(flat_t != IGNORE_LABEL)
        if valid.size == 0:
            continue
        if 0 < config.pixel_subsample < valid.size:
            sel = rng.choice(valid.size, size=config.pixel_subsample, replace=False)
            pix = valid[sel]
        else:
            pix = valid
        feats = _entry_features(feature_cache, idx, image)[pix]
        probs = _softmax_rows(feats @ w.T)
        probs[np.arange(pix.size), flat_t[pix].astype(np.intp)] -= 1.0
        grad = (probs.T @ feats) / pix.size
        grad += config.weight_decay * w
        v *= config.momentum
        v -= config.learning_rate * grad
        w += v
    return out


class ReferenceSegmenter:
    """Linear-softmax segmenter satisfying the segmenter contract.

    The contract is two methods: predict(image) -> (H, W, K) probability
    volume, and fine_tuned(dataset, config) -> a new segmenter, leaving the
    original untouched. predict_sequence(images) exists so protocol-backed
    segmenters can batch a whole request.
    """

    def __init__(self, params: ModelParameters):
        self.params = params

    def predict(self, image: np.ndarray) -> np.ndarray:
        return predict(self.params, image)

    def predict_sequence(self, images) -> list[np.ndarray]:
        return [self.predict(img) for img in images]

    def fine_tuned(self, dataset, config: TrainConfig) -> "ReferenceSegmenter":
        return ReferenceSegmenter(sgd_fine_tune(self.params, dataset, config))


def save_params(params: ModelParameters, path) -> None:
    """Write parameters as little-endian float32 with a VAPM header."""
    k, d = params.weights.shape
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<III", PARAMS_VERSION, k, d))
        fh.write(params.weights.astype("<f4").tobytes(order="C"))
        fh.write(params.momentum.astype("<f4").tobytes(order="C"))


def load_params(path) -> ModelParameters:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != PARAMS_MAGIC:
        raise ConfigurationError("%s is not a model parameters file" % path)
    version, k, d = struct.unpack("<III", blob[4:16])
    if version != PARAMS_VERSION:
        raise ConfigurationError(
            "%s has unsupported parameters version %d" % (path, version)
        )
    expected = 16 + 2 * 4 * k * d
    if len(blob) != expected:
        raise ConfigurationError(
            "%s is truncated: expected %d bytes, found %d" % (path, expected, len(blob))
        )
    flat = np.frombuffer(blob, dtype="<f4", offset=16)
    weights = flat[: k * d].reshape(k, d).astype(np.float64)
    momentum = flat[k * d :].reshape(k, d).astype(np.float64)
    return ModelParameters(weights, momentum)
