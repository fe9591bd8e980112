/** Geometry for the network input pipeline: scale the long side to a target
 * length, reflect-pad to a fixed canvas, and invert both on the way out.
 * Reflection repeats as needed, so any pad size is valid; un-padding is an
 * exact crop. */

export interface Geometry {
  srcWidth: number;
  srcHeight: number;
  scaledWidth: number;
  scaledHeight: number;
  padLeft: number;
  padTop: number;
  padWidth: number;
  padHeight: number;
}

export function planGeometry(
  srcWidth: number,
  srcHeight: number,
  resizeLongSide: number,
  padTo: [number, number] | null
): Geometry {
  const long = Math.max(srcWidth, srcHeight);
  const scale = resizeLongSide > 0 ? resizeLongSide / long : 1;
  let scaledWidth = Math.max(1, Math.round(srcWidth * scale));
  let scaledHeight = Math.max(1, Math.round(srcHeight * scale));
  if (resizeLongSide > 0) {
    // keep the long side exact
    if (srcWidth >= srcHeight) scaledWidth = resizeLongSide;
    if (srcHeight >= srcWidth) scaledHeight = resizeLongSide;
  }
  let padWidth = scaledWidth;
  let padHeight = scaledHeight;
  let padLeft = 0;
  let padTop = 0;
  if (padTo) {
    padWidth = Math.max(padTo[0], scaledWidth);
    padHeight = Math.max(padTo[1], scaledHeight);
    padLeft = Math.floor((padWidth - scaledWidth) / 2);
    padTop = Math.floor((padHeight - scaledHeight) / 2);
  }
  return { srcWidth, srcHeight, scaledWidth, scaledHeight, padLeft, padTop, padWidth, padHeight };
}

/** Index into [0, n) by repeated reflection about the edges. */
export function reflectIndex(i: number, n: number): number {
  if (n === 1) return 0;
  const period = 2 * (n - 1);
  let m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

/** Bilinear resize of interleaved channel data (half-pixel centers). */
export function resizeBilinear(
  src: Float32Array,
  srcWidth: number,
  srcHeight: number,
  dstWidth: number,
  dstHeight: number,
  channels: number
): Float32Array {
  if (srcWidth === dstWidth && srcHeight === dstHeight) {
    return src.slice();
  }
  const out = new Float32Array(dstWidth * dstHeight * channels);
  const sx = srcWidth / dstWidth;
  const sy = srcHeight / dstHeight;
  for (let y = 0; y < dstHeight; y++) {
    const fy = Math.min(Math.max((y + 0.5) * sy - 0.5, 0), srcHeight - 1);
    const y0 = Math.floor(fy);
    const y1 = Math.min(y0 + 1, srcHeight - 1);
    const wy = fy - y0;
    for (let x = 0; x < dstWidth; x++) {
      const fx = Math.min(Math.max((x + 0.5) * sx - 0.5, 0), srcWidth - 1);
      const x0 = Math.floor(fx);
      const x1 = Math.min(x0 + 1, srcWidth - 1);
      const wx = fx - x0;
      for (let c = 0; c < channels; c++) {
        const v00 = src[(y0 * srcWidth + x0) * channels + c];
        const v01 = src[(y0 * srcWidth + x1) * channels + c];
        const v10 = src[(y1 * srcWidth + x0) * channels + c];
        const v11 = src[(y1 * srcWidth + x1) * channels + c];
        const top = v00 + (v01 - v00) * wx;
        const bottom = v10 + (v11 - v10) * wx;
        out[(y * dstWidth + x) * channels + c] = top + (bottom - top) * wy;
      }
    }
  }
  return out;
}

/** Nearest-neighbor resize for label maps (preserves the ignore value). */
export function resizeNearest(
  src: Uint8Array,
  srcWidth: number,
  srcHeight: number,
  dstWidth: number,
  dstHeight: number
): Uint8Array {
  if (srcWidth === dstWidth && srcHeight === dstHeight) {
    return src.slice();
  }
  const out = new Uint8Array(dstWidth * dstHeight);
  for (let y = 0; y < dstHeight; y++) {
    const sy = Math.min(srcHeight - 1, Math.floor(((y + 0.5) * srcHeight) / dstHeight));
    for (let x = 0; x < dstWidth; x++) {
      const sx = Math.min(srcWidth - 1, Math.floor(((x + 0.5) * srcWidth) / dstWidth));
      out[y * dstWidth + x] = src[sy * srcWidth + sx];
    }
  }
  return out;
}

/** Reflect-pad interleaved channel data onto the padded canvas. */
export function reflectPad(
  src: Float32Array,
  geom: Geometry,
  channels: number
): Float32Array {
  const { scaledWidth: w, scaledHeight: h, padWidth, padHeight, padLeft, padTop } = geom;
  const out = new Float32Array(padWidth * padHeight * channels);
  for (let y = 0; y < padHeight; y++) {
    const sy = reflectIndex(y - padTop, h);
    for (let x = 0; x < padWidth; x++) {
      const sx = reflectIndex(x - padLeft, w);
      for (let c = 0; c < channels; c++) {
        out[(y * padWidth + x) * channels + c] = src[(sy * w + sx) * channels + c];
      }
    }
  }
  return out;
}

/** Exact inverse of reflectPad: crop the central scaled region. */
export function unpad(src: Float32Array, geom: Geometry, channels: number): Float32Array {
  const { scaledWidth: w, scaledHeight: h, padWidth, padLeft, padTop } = geom;
  const out = new Float32Array(w * h * channels);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      for (let c = 0; c < channels; c++) {
        out[(y * w + x) * channels + c] =
          src[((y + padTop) * padWidth + (x + padLeft)) * channels + c];
      }
    }
  }
  return out;
}
