/** TensorFlow.js per-pixel classifier: build, save/load, predict, fine-tune.
 *
 * The network is a small fully-convolutional stack (3x3 conv + relu, then a
 * 1x1 conv to class logits). Predict requests run it on the resized and
 * reflect-padded canvas the request asks for, then crop and resize the
 * probabilities back to the original frame. Fine-tune requests run SGD with
 * momentum at native frame resolution with ignored pixels excluded from the
 * loss; `dropout` in requests is metadata only for this architecture.
 */

import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";

import { RgbImage } from "./png";
import { IGNORE_LABEL, Preprocessing, RequestError, atomicWrite } from "./protocol";
import { planGeometry, reflectPad, resizeBilinear, unpad } from "./preprocess";

const MODEL_JSON = "model.json";
const WEIGHTS_BIN = "weights.bin";
const HIDDEN_FILTERS = 12;

export interface Bundle {
  model: tf.LayersModel;
  numClasses: number;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function seededNormals(count: number, scale: number, rng: () => number): Float32Array {
  const out = new Float32Array(count);
  for (let i = 0; i < count; i += 2) {
    const u = Math.max(rng(), 1e-12);
    const v = rng();
    const r = Math.sqrt(-2 * Math.log(u));
    out[i] = r * Math.cos(2 * Math.PI * v) * scale;
    if (i + 1 < count) out[i + 1] = r * Math.sin(2 * Math.PI * v) * scale;
  }
  return out;
}

export function buildModel(numClasses: number, seed: number): Bundle {
  if (numClasses < 2) {
    throw new RequestError(`a segmentation model needs >= 2 classes, got ${numClasses}`);
  }
  const model = tf.sequential();
  model.add(
    tf.layers.conv2d({
      filters: HIDDEN_FILTERS,
      kernelSize: 3,
      padding: "same",
      activation: "relu",
      inputShape: [null, null, 3],
    })
  );
  model.add(tf.layers.conv2d({ filters: numClasses, kernelSize: 1, padding: "same" }));
  const rng = mulberry32(seed + 0x9e3779b9);
  const seeded = model.getWeights().map((w) => {
    const size = w.size;
    const isBias = w.shape.length === 1;
    const data = isBias ? new Float32Array(size) : seededNormals(size, 0.25, rng);
    return tf.tensor(data, w.shape as number[]);
  });
  model.setWeights(seeded);
  seeded.forEach((t) => t.dispose());
  return { model, numClasses };
}

export async function saveModel(dir: string, bundle: Bundle): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await bundle.model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const weightData = artifacts.weightData as ArrayBuffer;
      atomicWrite(path.join(dir, WEIGHTS_BIN), Buffer.from(weightData));
      atomicWrite(
        path.join(dir, MODEL_JSON),
        JSON.stringify(
          {
            format: "vidadapt-bridge-model",
            num_classes: bundle.numClasses,
            modelTopology: artifacts.modelTopology,
            weightSpecs: artifacts.weightSpecs,
          },
          null,
          2
        )
      );
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: "JSON" } };
    })
  );
}

export async function loadModel(dir: string): Promise<Bundle> {
  const jsonPath = path.join(dir, MODEL_JSON);
  const binPath = path.join(dir, WEIGHTS_BIN);
  if (!fs.existsSync(jsonPath) || !fs.existsSync(binPath)) {
    throw new RequestError(`no model at ${dir}: expected ${MODEL_JSON} and ${WEIGHTS_BIN}`);
  }
  const meta = JSON.parse(fs.readFileSync(jsonPath, "utf-8"));
  if (meta.format !== "vidadapt-bridge-model") {
    throw new RequestError(`${jsonPath} has unknown format ${JSON.stringify(meta.format)}`);
  }
  const weightData = fs.readFileSync(binPath);
  const model = await tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: meta.modelTopology,
      weightSpecs: meta.weightSpecs,
      weightData: weightData.buffer.slice(
        weightData.byteOffset,
        weightData.byteOffset + weightData.byteLength
      ),
    })
  );
  return { model, numClasses: meta.num_classes };
}

/** Class probabilities for one frame as planar K*H*W float32 at the frame's
 * original size, renormalized per pixel. */
export function predictVolume(
  bundle: Bundle,
  image: RgbImage,
  prep: Preprocessing | null
): Float32Array {
  const k = bundle.numClasses;
  const geom = planGeometry(
    image.width,
    image.height,
    prep ? prep.resize_long_side : 0,
    prep ? prep.pad_to : null
  );
  const scaled = resizeBilinear(
    image.data,
    image.width,
    image.height,
    geom.scaledWidth,
    geom.scaledHeight,
    3
  );
  const padded = reflectPad(scaled, geom, 3);

  const probsPadded = tf.tidy(() => {
    const input = tf.tensor4d(padded, [1, geom.padHeight, geom.padWidth, 3]);
    const logits = bundle.model.predict(input) as tf.Tensor4D;
    return tf.softmax(logits, -1);
  });
  const interleaved = probsPadded.dataSync() as Float32Array;
  probsPadded.dispose();

  const cropped = unpad(interleaved, geom, k);
  const restored = resizeBilinear(
    cropped,
    geom.scaledWidth,
    geom.scaledHeight,
    image.width,
    image.height,
    k
  );

  // Renormalize in double precision and lay out planar planes.
  const planes = new Float32Array(k * image.width * image.height);
  const pixels = image.width * image.height;
  for (let i = 0; i < pixels; i++) {
    let sum = 0;
    for (let c = 0; c < k; c++) {
      const v = Math.max(restored[i * k + c], 0);
      sum += v;
    }
    for (let c = 0; c < k; c++) {
      const v = Math.max(restored[i * k + c], 0) / (sum > 0 ? sum : 1);
      planes[c * pixels + i] = v;
    }
  }
  return planes;
}

export interface FinetuneSample {
  image: RgbImage;
  labels: Uint8Array; // same dimensions, 255 = ignore
}

export interface FinetuneHyper {
  learningRate: number;
  momentum: number;
  weightDecay: number;
  iterations: number;
}

/** Ignore-aware SGD; returns the number of gradient steps actually applied.
 * Entries are visited in order, one per step, wrapping around; steps whose
 * entry has no valid pixel are skipped so all-IGNORE data changes nothing. */
export function finetune(bundle: Bundle, samples: FinetuneSample[], hyper: FinetuneHyper): number {
  if (samples.length === 0 || hyper.iterations <= 0) {
    return 0;
  }
  const k = bundle.numClasses;
  const optimizer = tf.train.momentum(hyper.learningRate, hyper.momentum);
  let applied = 0;
  try {
    for (let step = 0; step < hyper.iterations; step++) {
      const sample = samples[step % samples.length];
      const { width, height } = sample.image;
      if (sample.labels.length !== width * height) {
        throw new RequestError("fine-tune entry frame/labels dimensions differ");
      }
      const pixels = width * height;
      const oneHot = new Float32Array(pixels * k);
      const mask = new Float32Array(pixels);
      let valid = 0;
      for (let i = 0; i < pixels; i++) {
        const label = sample.labels[i];
        if (label === IGNORE_LABEL) continue;
        if (label >= k) {
          throw new RequestError(`label ${label} out of range for ${k} classes`);
        }
        oneHot[i * k + label] = 1;
        mask[i] = 1;
        valid++;
      }
      if (valid === 0) {
        continue;
      }
      optimizer.minimize(() =>
        tf.tidy(() => {
          const input = tf.tensor4d(sample.image.data, [1, height, width, 3]);
          const logits = (bundle.model.apply(input) as tf.Tensor4D).reshape([pixels, k]);
          const logProbs = tf.logSoftmax(logits);
          const targets = tf.tensor2d(oneHot, [pixels, k]);
          const picked = tf.sum(tf.mul(logProbs, targets), 1);
          const maskT = tf.tensor1d(mask);
          const ce = tf.neg(tf.div(tf.sum(tf.mul(picked, maskT)), valid));
          let decay = tf.scalar(0);
          for (const v of bundle.model.trainableWeights) {
            decay = tf.add(decay, tf.sum(tf.square(v.read())));
          }
          return tf.add(ce, tf.mul(tf.scalar(0.5 * hyper.weightDecay), decay)) as tf.Scalar;
        })
      );
      applied++;
    }
  } finally {
    optimizer.dispose();
  }
  return applied;
}
