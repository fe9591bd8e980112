/** Directory-polling server for the file-exchange protocol.
 *
 * Each `req_*` subdirectory holding a `request.json` without a `done.json`
 * or `error.json` is an open request; they are answered oldest-first, one
 * at a time. Responses are written atomically with the completion marker
 * last; a failed request gets `error.json` and serving continues.
 */

import * as fs from "fs";
import * as path from "path";

import { Bundle, FinetuneSample, finetune, loadModel, predictVolume, saveModel } from "./model";
import { readLabelPng, readRgbPng } from "./png";
import {
  FinetuneRequest,
  PredictRequest,
  RequestError,
  atomicWrite,
  parseRequest,
  sidecarFor,
  volumeToBuffer,
  writeJson,
} from "./protocol";

export interface ServeConfig {
  workdir: string;
  modelDir: string;
  pollIntervalMs: number;
  device: string;
}

export class BridgeServer {
  private constructor(
    private readonly config: ServeConfig,
    private bundle: Bundle
  ) {}

  static async create(config: ServeConfig): Promise<BridgeServer> {
    if (config.device !== "cpu") {
      throw new RequestError(`unsupported device ${JSON.stringify(config.device)}; only "cpu"`);
    }
    fs.mkdirSync(config.workdir, { recursive: true });
    const bundle = await loadModel(config.modelDir);
    return new BridgeServer(config, bundle);
  }

  get numClasses(): number {
    return this.bundle.numClasses;
  }

  pendingRequests(): string[] {
    let names: string[];
    try {
      names = fs.readdirSync(this.config.workdir).sort();
    } catch {
      return [];
    }
    const pending: string[] = [];
    for (const name of names) {
      if (!name.startsWith("req_")) continue;
      const reqDir = path.join(this.config.workdir, name);
      if (!fs.statSync(reqDir).isDirectory()) continue;
      if (!fs.existsSync(path.join(reqDir, "request.json"))) continue;
      if (fs.existsSync(path.join(reqDir, "done.json"))) continue;
      if (fs.existsSync(path.join(reqDir, "error.json"))) continue;
      pending.push(reqDir);
    }
    return pending;
  }

  async serveOnce(): Promise<boolean> {
    const pending = this.pendingRequests();
    if (pending.length === 0) {
      return false;
    }
    const reqDir = pending[0];
    try {
      const request = parseRequest(fs.readFileSync(path.join(reqDir, "request.json"), "utf-8"));
      if (request.mode === "predict") {
        this.handlePredict(reqDir, request);
      } else {
        await this.handleFinetune(reqDir, request);
      }
      writeJson(path.join(reqDir, "done.json"), { status: "ok" });
    } catch (err) {
      writeJson(path.join(reqDir, "error.json"), {
        status: "error",
        message: err instanceof Error ? err.message : String(err),
      });
    }
    return true;
  }

  async serveForever(stop?: { stopped: boolean }): Promise<void> {
    for (;;) {
      if (stop?.stopped) return;
      const worked = await this.serveOnce();
      if (!worked) {
        await new Promise((resolve) => setTimeout(resolve, this.config.pollIntervalMs));
      }
    }
  }

  private handlePredict(reqDir: string, request: PredictRequest): void {
    if (request.num_classes !== this.bundle.numClasses) {
      throw new RequestError(
        `request expects ${request.num_classes} classes, model has ${this.bundle.numClasses}`
      );
    }
    const probsDir = path.join(reqDir, "probs");
    fs.mkdirSync(probsDir, { recursive: true });
    for (const rel of request.frames) {
      const image = readRgbPng(path.join(reqDir, rel));
      const planes = predictVolume(this.bundle, image, request.preprocessing ?? null);
      const frameName = path.basename(rel).replace(/\.[^.]+$/, "");
      atomicWrite(
        path.join(probsDir, `${frameName}.f32`),
        volumeToBuffer(planes, image.height, image.width)
      );
      writeJson(
        path.join(probsDir, `${frameName}.json`),
        sidecarFor(image.width, image.height, this.bundle.numClasses)
      );
    }
  }

  private async handleFinetune(reqDir: string, request: FinetuneRequest): Promise<void> {
    const samples: FinetuneSample[] = request.dataset.map((entry) => {
      const image = readRgbPng(path.join(reqDir, entry.frame));
      const labels = readLabelPng(path.join(reqDir, entry.labels));
      if (labels.width !== image.width || labels.height !== image.height) {
        throw new RequestError(`${entry.labels} does not match ${entry.frame} dimensions`);
      }
      return { image, labels: labels.data };
    });
    const applied = finetune(this.bundle, samples, {
      learningRate: request.learning_rate,
      momentum: request.momentum,
      weightDecay: request.weight_decay,
      iterations: request.iterations,
    });
    if (applied > 0) {
      await saveModel(this.config.modelDir, this.bundle);
    }
  }
}
