import { execFileSync } from "child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";

import { ExtractorConfigSchema, getEncoder, resizeFrame } from "../src/encoder.js";
import { extract } from "../src/extract.js";
import { loadLabels, manifestBuild } from "../src/manifest.js";
import { readEmbeddingFile } from "../src/embfile.js";
import { decodeY4m } from "../src/y4m.js";
import { makeY4m } from "./helpers.js";

const CONFIG = ExtractorConfigSchema.parse({ resize: 32 });

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "ext-"));
}

function writeClip(dir: string, name: string, frames = 10): string {
  const path = join(dir, name);
  writeFileSync(
    path,
    makeY4m({
      width: 24,
      height: 16,
      frames: (f, r, c) => 40 + 10 * f + 5 * r + 3 * c,
    frameCount: frames,
    }),
  );
  return path;
}

/** Load through the training pipeline's strict Python loader. */
function pythonLoad(embPath: string): { frame_count: number; t_s: number; d_s: number } {
  const script = [
    "import json, sys, warnings",
    "from unite.data import load_embeddings",
    "with warnings.catch_warnings():",
    "    warnings.simplefilter('error')",
    "    frames, header = load_embeddings(sys.argv[1])",
    "print(json.dumps(header))",
  ].join("\n");
  return JSON.parse(
    execFileSync("python3", ["-c", script, embPath], { encoding: "utf-8" }),
  );
}

describe("extract", () => {
  it("strides 10 frames at stride 2 into frame_count 5", async () => {
    const dir = tmp();
    const clip = writeClip(dir, "a.y4m", 10);
    const res = await extract(clip, CONFIG, join(dir, "a.emb"));
    expect(res).toEqual({ frameCount: 5, tS: 16, dS: 8 });
    const { header } = await readEmbeddingFile(join(dir, "a.emb"));
    expect(header.frameCount).toBe(5);
  });

  it("is byte-identical across repeated runs", async () => {
    const dir = tmp();
    const clip = writeClip(dir, "a.y4m");
    await extract(clip, CONFIG, join(dir, "one.emb"));
    await extract(clip, CONFIG, join(dir, "two.emb"));
    expect(readFileSync(join(dir, "one.emb"))).toEqual(
      readFileSync(join(dir, "two.emb")),
    );
  });

  it("header geometry matches a probe frame encoding", async () => {
    const dir = tmp();
    const clip = writeClip(dir, "a.y4m");
    await extract(clip, CONFIG, join(dir, "a.emb"));
    const { header } = await readEmbeddingFile(join(dir, "a.emb"));
    const encoder = getEncoder(CONFIG.encoder);
    const probe = encoder.encode(
      resizeFrame(decodeY4m(readFileSync(clip))[0], CONFIG.resize),
    );
    expect(header.tS * header.dS).toBe(probe.length);
  });

  it("validates under the Python loader with zero warnings", async () => {
    const dir = tmp();
    const clip = writeClip(dir, "a.y4m", 8);
    await extract(clip, CONFIG, join(dir, "a.emb"));
    const header = pythonLoad(join(dir, "a.emb"));
    expect(header.frame_count).toBe(4);
    expect(header.t_s).toBe(16);
    expect(header.d_s).toBe(8);
  });

  it("supports the projection encoder identifier", async () => {
    const dir = tmp();
    const clip = writeClip(dir, "a.y4m", 4);
    const cfg = ExtractorConfigSchema.parse({
      encoder: "patch-proj-27x27x64",
      resize: 54,
    });
    const res = await extract(clip, cfg, join(dir, "a.emb"));
    expect(res).toEqual({ frameCount: 2, tS: 729, dS: 64 });
    expect(pythonLoad(join(dir, "a.emb")).t_s).toBe(729);
  });

  it("rejects an unknown encoder identifier", async () => {
    const dir = tmp();
    const clip = writeClip(dir, "a.y4m");
    const cfg = { ...CONFIG, encoder: "siglip-400m" };
    await expect(extract(clip, cfg, join(dir, "a.emb"))).rejects.toThrow(
      /unknown encoder/,
    );
  });

  it("rejects an undecodable file", async () => {
    const dir = tmp();
    writeFileSync(join(dir, "a.y4m"), "not a video\n");
    await expect(extract(join(dir, "a.y4m"), CONFIG, join(dir, "a.emb")))
      .rejects.toThrow(/not a YUV4MPEG2/);
  });
});

describe("manifestBuild", () => {
  function labels(dir: string, records: object[]): string {
    const path = join(dir, "labels.json");
    writeFileSync(path, JSON.stringify(records));
    return path;
  }

  const RECORDS = [
    { filename: "a.y4m", label: 0, dataset: "lab", generator: "camera", split: "train" },
    { filename: "b.y4m", label: 1, dataset: "lab", generator: "faceswap", split: "train" },
    { filename: "c.y4m", label: 1, dataset: "lab", generator: "t2v", split: "test" },
  ];

  it("builds one entry per labeled video, fields verbatim", async () => {
    const dir = tmp();
    for (const r of RECORDS) writeClip(dir, r.filename, 6);
    const out = join(dir, "out");
    const res = await manifestBuild(dir, labels(dir, RECORDS), CONFIG, out, () => {});
    expect(res.entries).toHaveLength(3);
    expect(res.skipped).toEqual([]);
    const manifest = JSON.parse(readFileSync(join(out, "manifest.json"), "utf-8"));
    for (const [i, rec] of RECORDS.entries()) {
      expect(manifest[i]).toEqual({
        video_id: rec.filename.replace(/\.y4m$/, ""),
        embedding_path: rec.filename.replace(/\.y4m$/, ".emb"),
        label: rec.label,
        dataset: rec.dataset,
        generator: rec.generator,
        split: rec.split,
      });
    }
  });

  it("produces a manifest the Python loader accepts strictly", async () => {
    const dir = tmp();
    for (const r of RECORDS) writeClip(dir, r.filename, 6);
    const out = join(dir, "out");
    await manifestBuild(dir, labels(dir, RECORDS), CONFIG, out, () => {});
    const script = [
      "import sys",
      "from unite.data import Manifest",
      "m = Manifest.load(sys.argv[1], strict=True)",
      "print(len(m.entries))",
    ].join("\n");
    const n = execFileSync("python3", ["-c", script, join(out, "manifest.json")],
      { encoding: "utf-8" });
    expect(n.trim()).toBe("3");
  });

  it("skips unlabeled videos with a warning", async () => {
    const dir = tmp();
    for (const r of RECORDS) writeClip(dir, r.filename, 6);
    writeClip(dir, "mystery.y4m", 6);
    const warnings: string[] = [];
    const res = await manifestBuild(
      dir, labels(dir, RECORDS), CONFIG, join(dir, "out"),
      (m) => warnings.push(m),
    );
    expect(res.entries).toHaveLength(3);
    expect(res.skipped).toEqual(["mystery.y4m"]);
    expect(warnings[0]).toMatch(/mystery\.y4m/);
  });

  it("rejects duplicate filenames in the labels file", async () => {
    const dir = tmp();
    const dup = [...RECORDS, { ...RECORDS[0] }];
    await expect(loadLabels(labels(dir, dup))).rejects.toThrow(/duplicate filename/);
  });

  it("rejects labels records with unknown or missing fields", async () => {
    const dir = tmp();
    await expect(
      loadLabels(labels(dir, [{ filename: "a.y4m", label: 0 }])),
    ).rejects.toThrow(/invalid labels file/);
    await expect(
      loadLabels(labels(dir, [{ ...RECORDS[0], extra: 1 }])),
    ).rejects.toThrow(/invalid labels file/);
  });
});
