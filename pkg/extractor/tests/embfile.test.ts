import { mkdtempSync, readdirSync, readFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";

import {
  encodeEmbeddingFile,
  HEADER_BYTES,
  readEmbeddingFile,
  StoreError,
  writeEmbeddingFile,
} from "../src/embfile.js";

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "emb-"));
}

describe("embedding store", () => {
  it("lays out the header exactly", () => {
    const buf = encodeEmbeddingFile(new Float32Array(2 * 16 * 8), 2, 16, 8);
    expect(buf.toString("ascii", 0, 8)).toBe("UNITEEMB");
    expect(buf.readUInt32LE(8)).toBe(1); // version
    expect(buf.readUInt32LE(12)).toBe(2); // frame_count
    expect(buf.readUInt32LE(16)).toBe(16); // t_s
    expect(buf.readUInt32LE(20)).toBe(8); // d_s
    expect(buf.readUInt32LE(24)).toBe(1); // dtype f32
    expect(buf.length).toBe(HEADER_BYTES + 4 * 2 * 16 * 8);
  });

  it("round trips values through disk", async () => {
    const dir = tmp();
    const values = Float32Array.from({ length: 3 * 4 * 2 }, (_, i) => i / 7);
    const path = join(dir, "v.emb");
    writeEmbeddingFile(path, values, 3, 4, 2);
    const { header, values: back } = await readEmbeddingFile(path);
    expect(header).toEqual({ frameCount: 3, tS: 4, dS: 2, version: 1 });
    expect(Array.from(back)).toEqual(Array.from(values));
  });

  it("leaves no temp file behind", () => {
    const dir = tmp();
    writeEmbeddingFile(join(dir, "v.emb"), new Float32Array(8), 1, 4, 2);
    expect(readdirSync(dir)).toEqual(["v.emb"]);
  });

  it("rejects non-finite values", () => {
    const values = new Float32Array(8);
    values[5] = NaN;
    expect(() => encodeEmbeddingFile(values, 1, 4, 2)).toThrow(StoreError);
    expect(() => encodeEmbeddingFile(values, 1, 4, 2)).toThrow(/index 5/);
  });

  it("rejects a count/shape mismatch", () => {
    expect(() => encodeEmbeddingFile(new Float32Array(7), 1, 4, 2)).toThrow(
      StoreError,
    );
  });

  it("writes byte-identical files for identical input", () => {
    const dir = tmp();
    const values = Float32Array.from({ length: 16 }, (_, i) => Math.sin(i));
    writeEmbeddingFile(join(dir, "a.emb"), values, 2, 4, 2);
    writeEmbeddingFile(join(dir, "b.emb"), values, 2, 4, 2);
    expect(readFileSync(join(dir, "a.emb"))).toEqual(
      readFileSync(join(dir, "b.emb")),
    );
  });
});
