"""Dense backward flow: a built-in block-matching estimator, label warping,
and Middlebury .flo file I/O.

Flow fields are (H, W, 2) float32 arrays storing (dx, dy) per pixel of the
LATER frame; the source sample in the earlier frame sits at (x+dx, y+dy).
"""

from __future__ import annotations

import struct

import numpy as np

from . import _kernels
from .errors import ConfigurationError, ContractViolation
from .labels import IGNORE_LABEL

FLO_MAGIC = 202021.25

_LUM = np.array([0.299, 0.587, 0.114])


def _luminance(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        return image @ _LUM
    return image


def _downsample(gray: np.ndarray) -> np.ndarray:
    h2, w2 = gray.shape[0] // 2, gray.shape[1] // 2
    trimmed = gray[: h2 * 2, : w2 * 2]
    return trimmed.reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _upsample_flow(comp: np.ndarray, h: int, w: int) -> np.ndarray:
    up = np.repeat(np.repeat(comp, 2, axis=0), 2, axis=1)
    pad_y = h - up.shape[0]
    pad_x = w - up.shape[1]
    if pad_y > 0 or pad_x > 0:
        up = np.pad(up, ((0, max(pad_y, 0)), (0, max(pad_x, 0))), mode="edge")
    return up[:h, :w] * 2.0


def estimate_flow(
    frame_a: np.ndarray,
    frame_b: np.ndarray,
    levels: int = 3,
    block_size: int = 8,
    search_radius: int = 4,
) -> np.ndarray:
    """Backward flow from frame_b to frame_a via coarse-to-fine block matching.

    Each pyramid level runs an exhaustive +/-search_radius integer search per
    block_size block on sum-of-absolute-differences of luminance, seeded by
    the doubled coarser-level displacement. SAD ties resolve to the smallest
    total displacement, so identical or flat frames map to zero flow.
    """
    a = _luminance(frame_a)
    b = _luminance(frame_b)
    if a.shape != b.shape:
        raise ContractViolation(
            "frame shapes differ: %r vs %r" % (a.shape, b.shape)
        )
    pyr_a = [a]
    pyr_b = [b]
    for _ in range(levels - 1):
        if min(pyr_a[-1].shape) // 2 < block_size:
            break
        pyr_a.append(_downsample(pyr_a[-1]))
        pyr_b.append(_downsample(pyr_b[-1]))

    u = np.zeros(pyr_a[-1].shape, dtype=np.float64)
    v = np.zeros(pyr_a[-1].shape, dtype=np.float64)
    for level in range(len(pyr_a) - 1, -1, -1):
        ra, rb = pyr_a[level], pyr_b[level]
        if u.shape != ra.shape:
            u = _upsample_flow(u, *ra.shape)
            v = _upsample_flow(v, *ra.shape)
        u, v = _kernels.block_match(
            np.ascontiguousarray(ra),
            np.ascontiguousarray(rb),
            u,
            v,
            block_size,
            search_radius,
        )
    return np.stack([u, v], axis=2).astype(np.float32)


def warp_labels(labels: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Pull labels along backward flow; out-of-bounds samples become IGNORE."""
    labels = np.asarray(labels)
    flow = np.asarray(flow)
    if flow.shape[:2] != labels.shape or flow.shape[2] != 2:
        raise ContractViolation(
            "flow shape %r does not match labels %r" % (flow.shape, labels.shape)
        )
    h, w = labels.shape
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    sx = np.floor(xx + flow[:, :, 0] + 0.5).astype(np.int64)
    sy = np.floor(yy + flow[:, :, 1] + 0.5).astype(np.int64)
    inside = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    out = np.full((h, w), IGNORE_LABEL, dtype=np.uint8)
    out[inside] = labels[sy[inside], sx[inside]]
    return out


def read_flo(path) -> np.ndarray:
    """Read a little-endian .flo file into an (H, W, 2) float32 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise ConfigurationError("%s is too short to be a .flo file" % path)
    (magic,) = struct.unpack("<f", blob[:4])
    if magic != FLO_MAGIC:
        raise ConfigurationError(
            "%s has magic %r, expected %r; not a .flo file" % (path, magic, FLO_MAGIC)
        )
    width, height = struct.unpack("<ii", blob[4:12])
    if width <= 0 or height <= 0:
        raise ConfigurationError("%s declares invalid size %dx%d" % (path, width, height))
    expected = 12 + 8 * width * height
    if len(blob) != expected:
        raise ConfigurationError(
            "%s is truncated: expected %d bytes, found %d" % (path, expected, len(blob))
        )
    data = np.frombuffer(blob, dtype="<f4", offset=12)
    return data.reshape(height, width, 2).copy()


def write_flo(path, flow: np.ndarray) -> None:
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ContractViolation("flow must have shape (H, W, 2)")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", w, h))
        fh.write(flow.astype("<f4").tobytes(order="C"))
