#!/usr/bin/env node
/** Bridge CLI: create a model directory, or serve an exchange directory. */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { buildModel, saveModel } from "./model";
import { BridgeServer } from "./server";

async function main(): Promise<void> {
  await yargs(hideBin(process.argv))
    .command(
      "make-model",
      "initialize a seeded per-pixel classification model directory",
      (y) =>
        y
          .option("out", { type: "string", demandOption: true, describe: "model directory" })
          .option("classes", { type: "number", default: 2 })
          .option("seed", { type: "number", default: 0 }),
      async (argv) => {
        const bundle = buildModel(argv.classes, argv.seed);
        await saveModel(argv.out, bundle);
        console.log(`wrote ${argv.classes}-class model to ${argv.out}`);
      }
    )
    .command(
      "serve",
      "answer predict/fine-tune requests in a working directory",
      (y) =>
        y
          .option("dir", { type: "string", demandOption: true, describe: "exchange directory" })
          .option("model", { type: "string", demandOption: true, describe: "model directory" })
          .option("poll-interval", {
            type: "number",
            default: 0.2,
            describe: "seconds between directory scans",
          })
          .option("device", { type: "string", default: "cpu" }),
      async (argv) => {
        const server = await BridgeServer.create({
          workdir: argv.dir,
          modelDir: argv.model,
          pollIntervalMs: Math.max(1, Math.round(argv["poll-interval"] * 1000)),
          device: argv.device,
        });
        console.log(
          `serving ${server.numClasses}-class model from ${argv.model} on ${argv.dir}`
        );
        await server.serveForever();
      }
    )
    .demandCommand(1)
    .strict()
    .parseAsync();
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : String(err));
  process.exit(1);
});
