"""Hot per-pixel kernels with numba-jitted and pure-numpy variants.

Set VIDADAPT_NUMBA=0 to force the numpy fallback (useful for debugging and
for the benchmark in benchmarks/bench_kernels.py). Both variants implement
the same arithmetic in the same order; the feature kernel is bitwise
identical across paths, the block matcher can differ only when two
candidate blocks have floating-point-tied SAD costs.
"""

from __future__ import annotations

import os

import numpy as np

FEATURE_DIM = 10

# Luminance weights shared by the feature kernel and the flow estimator.
_LUM_R = 0.299
_LUM_G = 0.587
_LUM_B = 0.114


def _flag_enabled() -> bool:
    value = os.environ.get("VIDADAPT_NUMBA", "1").strip().lower()
    return value not in ("0", "false", "off", "no")


NUMBA_ENABLED = False
if _flag_enabled():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# Per-pixel features: r, g, b, x/W, y/H, 3x3 box means of r/g/b (edge
# clamped), central-difference luminance gradient magnitude, constant 1.
# ---------------------------------------------------------------------------


def extract_features_numpy(image: np.ndarray) -> np.ndarray:
    """Feature matrix (H*W, 10) for an RGB image in [0, 1], row-major pixels."""
    h, w, _ = image.shape
    r = image[:, :, 0]
    g = image[:, :, 1]
    b = image[:, :, 2]

    ys = np.arange(h)
    xs = np.arange(w)
    yl = np.clip(ys - 1, 0, h - 1)
    yh = np.clip(ys + 1, 0, h - 1)
    xl = np.clip(xs - 1, 0, w - 1)
    xh = np.clip(xs + 1, 0, w - 1)

    def box_mean(c):
        # Same left-to-right summation order as the jitted kernel.
        return (
            c[np.ix_(yl, xl)]
            + c[np.ix_(yl, xs)]
            + c[np.ix_(yl, xh)]
            + c[np.ix_(ys, xl)]
            + c[np.ix_(ys, xs)]
            + c[np.ix_(ys, xh)]
            + c[np.ix_(yh, xl)]
            + c[np.ix_(yh, xs)]
            + c[np.ix_(yh, xh)]
        ) / 9.0

    lum = _LUM_R * r + _LUM_G * g + _LUM_B * b
    dx = (lum[:, xh] - lum[:, xl]) * 0.5
    dy = (lum[yh, :] - lum[yl, :]) * 0.5
    grad = np.sqrt(dx * dx + dy * dy)

    out = np.empty((h * w, FEATURE_DIM), dtype=np.float64)
    out[:, 0] = r.ravel()
    out[:, 1] = g.ravel()
    out[:, 2] = b.ravel()
    out[:, 3] = np.tile(xs / w, h)
    out[:, 4] = np.repeat(ys / h, w)
    out[:, 5] = box_mean(r).ravel()
    out[:, 6] = box_mean(g).ravel()
    out[:, 7] = box_mean(b).ravel()
    out[:, 8] = grad.ravel()
    out[:, 9] = 1.0
    return out


def _extract_features_loops(image: np.ndarray) -> np.ndarray:
    h, w, _ = image.shape
    out = np.empty((h * w, FEATURE_DIM), dtype=np.float64)
    for y in range(h):
        yl = y - 1 if y > 0 else 0
        yh = y + 1 if y < h - 1 else h - 1
        for x in range(w):
            xl = x - 1 if x > 0 else 0
            xh = x + 1 if x < w - 1 else w - 1
            i = y * w + x
            r = image[y, x, 0]
            g = image[y, x, 1]
            b = image[y, x, 2]
            mr = (
                image[yl, xl, 0]
                + image[yl, x, 0]
                + image[yl, xh, 0]
                + image[y, xl, 0]
                + image[y, x, 0]
                + image[y, xh, 0]
                + image[yh, xl, 0]
                + image[yh, x, 0]
                + image[yh, xh, 0]
            ) / 9.0
            mg = (
                image[yl, xl, 1]
                + image[yl, x, 1]
                + image[yl, xh, 1]
                + image[y, xl, 1]
                + image[y, x, 1]
                + image[y, xh, 1]
                + image[yh, xl, 1]
                + image[yh, x, 1]
                + image[yh, xh, 1]
            ) / 9.0
            mb = (
                image[yl, xl, 2]
                + image[yl, x, 2]
                + image[yl, xh, 2]
                + image[y, xl, 2]
                + image[y, x, 2]
                + image[y, xh, 2]
                + image[yh, xl, 2]
                + image[yh, x, 2]
                + image[yh, xh, 2]
            ) / 9.0
            lxh = (
                _LUM_R * image[y, xh, 0]
                + _LUM_G * image[y, xh, 1]
                + _LUM_B * image[y, xh, 2]
            )
            lxl = (
                _LUM_R * image[y, xl, 0]
                + _LUM_G * image[y, xl, 1]
                + _LUM_B * image[y, xl, 2]
            )
            lyh = (
                _LUM_R * image[yh, x, 0]
                + _LUM_G * image[yh, x, 1]
                + _LUM_B * image[yh, x, 2]
            )
            lyl = (
                _LUM_R * image[yl, x, 0]
                + _LUM_G * image[yl, x, 1]
                + _LUM_B * image[yl, x, 2]
            )
            dx = (lxh - lxl) * 0.5
            dy = (lyh - lyl) * 0.5
            out[i, 0] = r
            out[i, 1] = g
            out[i, 2] = b
            out[i, 3] = x / w
            out[i, 4] = y / h
            out[i, 5] = mr
            out[i, 6] = mg
            out[i, 7] = mb
            out[i, 8] = np.sqrt(dx * dx + dy * dy)
            out[i, 9] = 1.0
    return out


# ---------------------------------------------------------------------------
# One pyramid level of block matching. For every block of `cur` (the later
# frame) find the integer displacement, within prior+search window, whose
# pointed-to block in `ref` (the earlier frame) minimizes SAD over clamped
# samples. Ties resolve to the smallest total displacement, then (dy, dx).
# ---------------------------------------------------------------------------


def _block_match_loops(
    ref: np.ndarray,
    cur: np.ndarray,
    prior_u: np.ndarray,
    prior_v: np.ndarray,
    block_size: int,
    radius: int,
) -> tuple[np.ndarray, np.ndarray]:
    h, w = cur.shape
    out_u = np.empty((h, w), dtype=np.float64)
    out_v = np.empty((h, w), dtype=np.float64)
    for by in range(0, h, block_size):
        y_end = min(by + block_size, h)
        for bx in range(0, w, block_size):
            x_end = min(bx + block_size, w)
            pu = int(round(prior_u[by, bx]))
            pv = int(round(prior_v[by, bx]))
            best_sad = np.inf
            best_mag = 0
            best_u = 0
            best_v = 0
            for dv in range(-radius, radius + 1):
                tv = pv + dv
                for du in range(-radius, radius + 1):
                    tu = pu + du
                    sad = 0.0
                    for y in range(by, y_end):
                        sy = y + tv
                        if sy < 0:
                            sy = 0
                        elif sy > h - 1:
                            sy = h - 1
                        for x in range(bx, x_end):
                            sx = x + tu
                            if sx < 0:
                                sx = 0
                            elif sx > w - 1:
                                sx = w - 1
                            d = cur[y, x] - ref[sy, sx]
                            sad += d if d >= 0.0 else -d
                    mag = tu * tu + tv * tv
                    better = sad < best_sad
                    if not better and sad == best_sad:
                        if mag < best_mag:
                            better = True
                        elif mag == best_mag and (
                            tv < best_v or (tv == best_v and tu < best_u)
                        ):
                            better = True
                    if better:
                        best_sad = sad
                        best_mag = mag
                        best_u = tu
                        best_v = tv
            out_u[by:y_end, bx:x_end] = best_u
            out_v[by:y_end, bx:x_end] = best_v
    return out_u, out_v


def block_match_numpy(
    ref: np.ndarray,
    cur: np.ndarray,
    prior_u: np.ndarray,
    prior_v: np.ndarray,
    block_size: int,
    radius: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized fallback of the block matcher (same selection rule)."""
    h, w = cur.shape
    by_starts = np.arange(0, h, block_size)
    bx_starts = np.arange(0, w, block_size)
    pu = np.round(prior_u[np.ix_(by_starts, bx_starts)]).astype(np.int64)
    pv = np.round(prior_v[np.ix_(by_starts, bx_starts)]).astype(np.int64)

    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    # Expand per-block prior to per-pixel maps.
    pu_full = np.repeat(np.repeat(pu, block_size, axis=0), block_size, axis=1)[:h, :w]
    pv_full = np.repeat(np.repeat(pv, block_size, axis=0), block_size, axis=1)[:h, :w]

    n_side = 2 * radius + 1
    n_cand = n_side * n_side
    nb = len(by_starts) * len(bx_starts)
    sads = np.empty((n_cand, nb), dtype=np.float64)
    mags = np.empty((n_cand, nb), dtype=np.int64)
    tus = np.empty((n_cand, nb), dtype=np.int64)
    tvs = np.empty((n_cand, nb), dtype=np.int64)

    k = 0
    for dv in range(-radius, radius + 1):
        for du in range(-radius, radius + 1):
            sy = np.clip(yy + pv_full + dv, 0, h - 1)
            sx = np.clip(xx + pu_full + du, 0, w - 1)
            diff = np.abs(cur - ref[sy, sx])
            rows = np.add.reduceat(diff, by_starts, axis=0)
            cells = np.add.reduceat(rows, bx_starts, axis=1)
            sads[k] = cells.ravel()
            tu = (pu + du).ravel()
            tv = (pv + dv).ravel()
            tus[k] = tu
            tvs[k] = tv
            mags[k] = tu * tu + tv * tv
            k += 1

    order = np.lexsort((tus, tvs, mags, sads), axis=0)
    pick = order[0]
    cols = np.arange(nb)
    best_u = tus[pick, cols].reshape(len(by_starts), len(bx_starts))
    best_v = tvs[pick, cols].reshape(len(by_starts), len(bx_starts))

    out_u = np.repeat(np.repeat(best_u, block_size, axis=0), block_size, axis=1)[:h, :w]
    out_v = np.repeat(np.repeat(best_v, block_size, axis=0), block_size, axis=1)[:h, :w]
    return out_u.astype(np.float64), out_v.astype(np.float64)


if NUMBA_ENABLED:
    extract_features_jit = njit(cache=True)(_extract_features_loops)
    block_match_jit = njit(cache=True)(_block_match_loops)
    extract_features = extract_features_jit
    block_match = block_match_jit
else:
    extract_features_jit = None
    block_match_jit = None
    extract_features = extract_features_numpy
    block_match = block_match_numpy
