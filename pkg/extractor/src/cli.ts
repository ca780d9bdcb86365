#!/usr/bin/env node
/** Command line entry: `extract` one video, or `manifest` a directory. */

import { mkdir } from "fs/promises";
import { dirname } from "path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { ExtractorConfigSchema } from "./encoder.js";
import { extract } from "./extract.js";
import { manifestBuild } from "./manifest.js";

function configFrom(argv: Record<string, unknown>) {
  return ExtractorConfigSchema.parse({
    encoder: argv.encoder,
    resize: argv.resize,
    frameStride: argv.stride,
    batchSize: argv.batch,
  });
}

const encoderOpts = {
  encoder: { type: "string" as const, default: "grid-stats-4x4x8" },
  resize: { type: "number" as const, default: 384 },
  stride: { type: "number" as const, default: 2 },
  batch: { type: "number" as const, default: 8 },
};

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .command("extract <video>", "encode one video into an embedding file", (y) =>
      y
        .positional("video", { type: "string", demandOption: true })
        .option("out", { type: "string", demandOption: true })
        .options(encoderOpts),
    )
    .command(
      "manifest <dir>",
      "extract every labeled video in a directory and write manifest.json",
      (y) =>
        y
          .positional("dir", { type: "string", demandOption: true })
          .option("labels", { type: "string", demandOption: true })
          .option("out", { type: "string", demandOption: true })
          .options(encoderOpts),
    )
    .demandCommand(1)
    .strict()
    .parse();

  const cmd = argv._[0];
  try {
    if (cmd === "extract") {
      await mkdir(dirname(argv.out as string), { recursive: true });
      const res = await extract(
        argv.video as string,
        configFrom(argv),
        argv.out as string,
      );
      console.log(
        `wrote ${argv.out}: ${res.frameCount} frames, ${res.tS} x ${res.dS}`,
      );
    } else if (cmd === "manifest") {
      await mkdir(argv.out as string, { recursive: true });
      const res = await manifestBuild(
        argv.dir as string,
        argv.labels as string,
        configFrom(argv),
        argv.out as string,
      );
      console.log(
        `wrote ${res.entries.length} entries` +
          (res.skipped.length ? `, skipped ${res.skipped.length}` : ""),
      );
    }
  } catch (e) {
    console.error((e as Error).message);
    return 1;
  }
  return 0;
}

main().then((code) => {
  process.exitCode = code;
});
