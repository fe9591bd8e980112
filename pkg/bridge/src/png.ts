/** PNG decode/encode helpers over pngjs. */

import * as fs from "fs";
import { PNG } from "pngjs";

export interface RgbImage {
  width: number;
  height: number;
  /** Row-major interleaved r,g,b in [0, 1]. */
  data: Float32Array;
}

export function readRgbPng(path: string): RgbImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  const out = new Float32Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    out[i * 3] = png.data[i * 4] / 255;
    out[i * 3 + 1] = png.data[i * 4 + 1] / 255;
    out[i * 3 + 2] = png.data[i * 4 + 2] / 255;
  }
  return { width: png.width, height: png.height, data: out };
}

/** Single-channel label map; pngjs expands grayscale to RGBA on read. */
export function readLabelPng(path: string): { width: number; height: number; data: Uint8Array } {
  const png = PNG.sync.read(fs.readFileSync(path));
  const out = new Uint8Array(png.width * png.height);
  for (let i = 0; i < out.length; i++) {
    out[i] = png.data[i * 4];
  }
  return { width: png.width, height: png.height, data: out };
}

export function writeRgbPng(path: string, image: RgbImage): void {
  const png = new PNG({ width: image.width, height: image.height });
  for (let i = 0; i < image.width * image.height; i++) {
    png.data[i * 4] = Math.round(Math.min(Math.max(image.data[i * 3], 0), 1) * 255);
    png.data[i * 4 + 1] = Math.round(Math.min(Math.max(image.data[i * 3 + 1], 0), 1) * 255);
    png.data[i * 4 + 2] = Math.round(Math.min(Math.max(image.data[i * 3 + 2], 0), 1) * 255);
    png.data[i * 4 + 3] = 255;
  }
  fs.writeFileSync(path, PNG.sync.write(png));
}
