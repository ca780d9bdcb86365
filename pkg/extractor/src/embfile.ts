/**
 * Binary embedding store, matching the training pipeline's loader
 * bit for bit.  Little-endian layout:
 *
 *   magic "UNITEEMB" | version u32 | frame_count u32 | t_s u32
 *   | d_s u32 | dtype u32 (1 = float32) | frame-major float32 body
 */

import { renameSync, writeFileSync } from "fs";
import { readFile } from "fs/promises";

export const EMB_MAGIC = "UNITEEMB";
export const EMB_VERSION = 1;
export const DTYPE_F32 = 1;
export const HEADER_BYTES = 28;

export class StoreError extends Error {}

export interface EmbeddingHeader {
  frameCount: number;
  tS: number;
  dS: number;
  version: number;
}

/** Serialize frames (frameCount x tS x dS, frame-major) to the store bytes. */
export function encodeEmbeddingFile(
  frames: Float32Array,
  frameCount: number,
  tS: number,
  dS: number,
): Buffer {
  if (frames.length !== frameCount * tS * dS) {
    throw new StoreError(
      `value count ${frames.length} != ${frameCount}x${tS}x${dS}`,
    );
  }
  for (let i = 0; i < frames.length; i++) {
    if (!Number.isFinite(frames[i])) {
      throw new StoreError(`refusing to write non-finite value at index ${i}`);
    }
  }
  const buf = Buffer.alloc(HEADER_BYTES + 4 * frames.length);
  buf.write(EMB_MAGIC, 0, "ascii");
  buf.writeUInt32LE(EMB_VERSION, 8);
  buf.writeUInt32LE(frameCount, 12);
  buf.writeUInt32LE(tS, 16);
  buf.writeUInt32LE(dS, 20);
  buf.writeUInt32LE(DTYPE_F32, 24);
  for (let i = 0; i < frames.length; i++) {
    buf.writeFloatLE(frames[i], HEADER_BYTES + 4 * i);
  }
  return buf;
}

/** Atomic write: temp file in the same directory, then rename. */
export function writeEmbeddingFile(
  path: string,
  frames: Float32Array,
  frameCount: number,
  tS: number,
  dS: number,
): void {
  const bytes = encodeEmbeddingFile(frames, frameCount, tS, dS);
  const tmp = `${path}.tmp-${process.pid}`;
  writeFileSync(tmp, bytes);
  renameSync(tmp, path);
}

/** Read back header and values; used by tests and geometry probes. */
export async function readEmbeddingFile(
  path: string,
): Promise<{ header: EmbeddingHeader; values: Float32Array }> {
  const buf = await readFile(path);
  if (buf.length < HEADER_BYTES) {
    throw new StoreError(`${path}: truncated header (${buf.length} bytes)`);
  }
  if (buf.toString("ascii", 0, 8) !== EMB_MAGIC) {
    throw new StoreError(`${path}: bad magic`);
  }
  const version = buf.readUInt32LE(8);
  const frameCount = buf.readUInt32LE(12);
  const tS = buf.readUInt32LE(16);
  const dS = buf.readUInt32LE(20);
  const dtype = buf.readUInt32LE(24);
  if (version !== EMB_VERSION) {
    throw new StoreError(`${path}: unsupported version ${version}`);
  }
  if (dtype !== DTYPE_F32) {
    throw new StoreError(`${path}: unsupported dtype code ${dtype}`);
  }
  const n = frameCount * tS * dS;
  if (buf.length !== HEADER_BYTES + 4 * n) {
    throw new StoreError(`${path}: body size mismatch`);
  }
  const values = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    values[i] = buf.readFloatLE(HEADER_BYTES + 4 * i);
  }
  return { header: { frameCount, tS, dS, version }, values };
}
