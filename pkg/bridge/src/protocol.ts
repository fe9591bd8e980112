/** Types and file helpers for the request/response exchange directory. */

import * as fs from "fs";
import * as path from "path";

export const IGNORE_LABEL = 255;

export interface Preprocessing {
  resize_long_side: number;
  pad_to: [number, number];
  pad_mode: string;
}

export interface PredictRequest {
  mode: "predict";
  frames: string[];
  num_classes: number;
  preprocessing?: Preprocessing;
}

export interface FinetuneEntry {
  frame: string;
  labels: string;
}

export interface FinetuneRequest {
  mode: "finetune";
  dataset: FinetuneEntry[];
  learning_rate: number;
  momentum: number;
  weight_decay: number;
  iterations: number;
  pixel_subsample?: number;
  seed?: number;
  ignore_label?: number;
  dropout?: number;
}

export type Request = PredictRequest | FinetuneRequest;

export class RequestError extends Error {}

/** Write a file atomically: temp file in the same directory, then rename. */
export function atomicWrite(target: string, data: Buffer | string): void {
  const dir = path.dirname(target);
  const tmp = path.join(dir, `.tmp-${process.pid}-${Math.random().toString(36).slice(2)}`);
  fs.writeFileSync(tmp, data);
  fs.renameSync(tmp, target);
}

export function writeJson(target: string, payload: unknown): void {
  atomicWrite(target, JSON.stringify(payload, null, 2) + "\n");
}

export function parseRequest(raw: string): Request {
  let data: any;
  try {
    data = JSON.parse(raw);
  } catch (err) {
    throw new RequestError(`request.json is not valid JSON: ${err}`);
  }
  if (data.mode === "predict") {
    if (!Array.isArray(data.frames) || data.frames.length === 0) {
      throw new RequestError("predict request needs a nonempty `frames` list");
    }
    if (typeof data.num_classes !== "number" || data.num_classes < 2) {
      throw new RequestError("predict request needs `num_classes` >= 2");
    }
    return data as PredictRequest;
  }
  if (data.mode === "finetune") {
    if (!Array.isArray(data.dataset)) {
      throw new RequestError("finetune request needs a `dataset` list");
    }
    for (const key of ["learning_rate", "momentum", "weight_decay", "iterations"]) {
      if (typeof data[key] !== "number") {
        throw new RequestError(`finetune request needs numeric \`${key}\``);
      }
    }
    return data as FinetuneRequest;
  }
  throw new RequestError(`unknown request mode: ${JSON.stringify(data.mode)}`);
}

/** Planar little-endian float32 encoding of an H*W*K probability volume. */
export function volumeToBuffer(planes: Float32Array, _height: number, _width: number): Buffer {
  // planes is already planar (K * H * W); Node buffers share the LE layout.
  return Buffer.from(planes.buffer, planes.byteOffset, planes.byteLength);
}

export interface Sidecar {
  width: number;
  height: number;
  num_classes: number;
  dtype: "f32le";
  layout: "planar";
}

export function sidecarFor(width: number, height: number, numClasses: number): Sidecar {
  return { width, height, num_classes: numClasses, dtype: "f32le", layout: "planar" };
}
