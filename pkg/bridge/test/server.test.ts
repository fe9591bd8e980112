import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { afterAll, describe, expect, it } from "vitest";

import { buildModel, saveModel } from "../src/model";
import { writeRgbPng } from "../src/png";
import { BridgeServer } from "../src/server";

const tmpDirs: string[] = [];

function tmpDir(): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "bridge-server-"));
  tmpDirs.push(dir);
  return dir;
}

afterAll(() => {
  for (const dir of tmpDirs) fs.rmSync(dir, { recursive: true, force: true });
});

async function makeServer(numClasses = 2): Promise<{ server: BridgeServer; workdir: string; modelDir: string }> {
  const root = tmpDir();
  const modelDir = path.join(root, "model");
  const workdir = path.join(root, "exchange");
  await saveModel(modelDir, buildModel(numClasses, 11));
  const server = await BridgeServer.create({
    workdir,
    modelDir,
    pollIntervalMs: 5,
    device: "cpu",
  });
  return { server, workdir, modelDir };
}

function writeFramePng(target: string, width: number, height: number, seed: number): void {
  let state = seed;
  const next = () => {
    state = (state * 1103515245 + 12345) % 2147483648;
    return state / 2147483648;
  };
  const data = new Float32Array(width * height * 3);
  for (let i = 0; i < data.length; i++) data[i] = next();
  writeRgbPng(target, { width, height, data });
}

function writeRequest(reqDir: string, payload: unknown, files: () => void): void {
  fs.mkdirSync(reqDir, { recursive: true });
  files();
  fs.writeFileSync(path.join(reqDir, "request.json"), JSON.stringify(payload));
}

describe("request lifecycle", () => {
  it("answers a predict request with volumes, sidecars, and done.json", async () => {
    const { server, workdir } = await makeServer(2);
    const reqDir = path.join(workdir, "req_000001");
    writeRequest(
      reqDir,
      {
        mode: "predict",
        frames: ["frames/frame_000001.png"],
        num_classes: 2,
        preprocessing: { resize_long_side: 32, pad_to: [48, 48], pad_mode: "reflect" },
      },
      () => {
        fs.mkdirSync(path.join(reqDir, "frames"), { recursive: true });
        writeFramePng(path.join(reqDir, "frames", "frame_000001.png"), 7, 5, 3);
      }
    );
    expect(await server.serveOnce()).toBe(true);
    expect(fs.existsSync(path.join(reqDir, "done.json"))).toBe(true);
    const sidecar = JSON.parse(
      fs.readFileSync(path.join(reqDir, "probs", "frame_000001.json"), "utf-8")
    );
    expect(sidecar).toEqual({
      width: 7,
      height: 5,
      num_classes: 2,
      dtype: "f32le",
      layout: "planar",
    });
    const raw = fs.readFileSync(path.join(reqDir, "probs", "frame_000001.f32"));
    expect(raw.length).toBe(7 * 5 * 2 * 4);
    // channel sums within the protocol tolerance
    for (let i = 0; i < 7 * 5; i++) {
      const a = raw.readFloatLE(i * 4);
      const b = raw.readFloatLE((7 * 5 + i) * 4);
      expect(Math.abs(a + b - 1)).toBeLessThan(1e-3);
    }
  });

  it("rejects a class-count mismatch via error.json and keeps serving", async () => {
    const { server, workdir } = await makeServer(2);
    const bad = path.join(workdir, "req_000001");
    writeRequest(
      bad,
      { mode: "predict", frames: ["frames/frame_000001.png"], num_classes: 5 },
      () => {
        fs.mkdirSync(path.join(bad, "frames"), { recursive: true });
        writeFramePng(path.join(bad, "frames", "frame_000001.png"), 4, 4, 5);
      }
    );
    expect(await server.serveOnce()).toBe(true);
    const err = JSON.parse(fs.readFileSync(path.join(bad, "error.json"), "utf-8"));
    expect(err.status).toBe("error");
    expect(err.message).toMatch(/classes/);

    const good = path.join(workdir, "req_000002");
    writeRequest(
      good,
      { mode: "predict", frames: ["frames/frame_000001.png"], num_classes: 2 },
      () => {
        fs.mkdirSync(path.join(good, "frames"), { recursive: true });
        writeFramePng(path.join(good, "frames", "frame_000001.png"), 4, 4, 5);
      }
    );
    expect(await server.serveOnce()).toBe(true);
    expect(fs.existsSync(path.join(good, "done.json"))).toBe(true);
  });

  it("fine-tune persists updated weights; all-IGNORE leaves the file alone", async () => {
    const { server, workdir, modelDir } = await makeServer(2);
    const weightsPath = path.join(modelDir, "weights.bin");
    const before = fs.readFileSync(weightsPath);

    const ignoreReq = path.join(workdir, "req_000001");
    writeRequest(
      ignoreReq,
      {
        mode: "finetune",
        dataset: [{ frame: "dataset/frame_000001.png", labels: "dataset/labels_000001.png" }],
        learning_rate: 0.5,
        momentum: 0.9,
        weight_decay: 0.01,
        iterations: 4,
        ignore_label: 255,
        dropout: 0.5,
      },
      () => {
        fs.mkdirSync(path.join(ignoreReq, "dataset"), { recursive: true });
        writeFramePng(path.join(ignoreReq, "dataset", "frame_000001.png"), 6, 6, 2);
        const { PNG } = require("pngjs");
        const png = new PNG({ width: 6, height: 6 });
        for (let i = 0; i < 36; i++) {
          png.data[i * 4] = 255;
          png.data[i * 4 + 1] = 255;
          png.data[i * 4 + 2] = 255;
          png.data[i * 4 + 3] = 255;
        }
        fs.writeFileSync(path.join(ignoreReq, "dataset", "labels_000001.png"), PNG.sync.write(png));
      }
    );
    expect(await server.serveOnce()).toBe(true);
    expect(fs.existsSync(path.join(ignoreReq, "done.json"))).toBe(true);
    expect(fs.readFileSync(weightsPath).equals(before)).toBe(true);

    const realReq = path.join(workdir, "req_000002");
    writeRequest(
      realReq,
      {
        mode: "finetune",
        dataset: [{ frame: "dataset/frame_000001.png", labels: "dataset/labels_000001.png" }],
        learning_rate: 0.1,
        momentum: 0.9,
        weight_decay: 0.0005,
        iterations: 2,
      },
      () => {
        fs.mkdirSync(path.join(realReq, "dataset"), { recursive: true });
        writeFramePng(path.join(realReq, "dataset", "frame_000001.png"), 6, 6, 2);
        const { PNG } = require("pngjs");
        const png = new PNG({ width: 6, height: 6 });
        for (let i = 0; i < 36; i++) {
          const v = i < 18 ? 1 : 0;
          png.data[i * 4] = v;
          png.data[i * 4 + 1] = v;
          png.data[i * 4 + 2] = v;
          png.data[i * 4 + 3] = 255;
        }
        fs.writeFileSync(path.join(realReq, "dataset", "labels_000001.png"), PNG.sync.write(png));
      }
    );
    expect(await server.serveOnce()).toBe(true);
    expect(fs.existsSync(path.join(realReq, "done.json"))).toBe(true);
    expect(fs.readFileSync(weightsPath).equals(before)).toBe(false);
  });

  it("ignores directories without request.json and already-answered ones", async () => {
    const { server, workdir } = await makeServer(2);
    fs.mkdirSync(path.join(workdir, "req_000001"));
    expect(server.pendingRequests()).toEqual([]);
    expect(await server.serveOnce()).toBe(false);
  });

  it("malformed request mode produces error.json", async () => {
    const { server, workdir } = await makeServer(2);
    const reqDir = path.join(workdir, "req_000001");
    writeRequest(reqDir, { mode: "dance" }, () => {});
    expect(await server.serveOnce()).toBe(true);
    const err = JSON.parse(fs.readFileSync(path.join(reqDir, "error.json"), "utf-8"));
    expect(err.message).toMatch(/mode/);
  });
});
