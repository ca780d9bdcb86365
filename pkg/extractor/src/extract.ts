/**
 * extract: video file -> embedding store file.
 *
 * Frames are decoded, strided, resized, and encoded in batches; the
 * first encoded frame doubles as a geometry probe, checked against the
 * encoder's declared (tokens, dim) before anything is written.
 */

import { readFile } from "fs/promises";

import { writeEmbeddingFile } from "./embfile.js";
import {
  ExtractorConfig,
  getEncoder,
  resizeFrame,
} from "./encoder.js";
import { decodeY4m, DecodeError, RgbFrame } from "./y4m.js";

export class ShapeMismatchError extends Error {}

export interface ExtractResult {
  frameCount: number;
  tS: number;
  dS: number;
}

export async function extract(
  videoPath: string,
  config: ExtractorConfig,
  outPath: string,
): Promise<ExtractResult> {
  let raw: Buffer;
  try {
    raw = await readFile(videoPath);
  } catch (e) {
    throw new DecodeError(`cannot read ${videoPath}: ${(e as Error).message}`);
  }
  const frames = decodeY4m(raw);
  const strided: RgbFrame[] = [];
  for (let i = 0; i < frames.length; i += config.frameStride) {
    strided.push(frames[i]);
  }
  const encoder = getEncoder(config.encoder);
  const perFrame = encoder.tS * encoder.dS;
  const values = new Float32Array(strided.length * perFrame);
  for (let start = 0; start < strided.length; start += config.batchSize) {
    const batch = strided.slice(start, start + config.batchSize);
    batch.forEach((frame, j) => {
      const encoded = encoder.encode(resizeFrame(frame, config.resize));
      if (encoded.length !== perFrame) {
        throw new ShapeMismatchError(
          `encoder '${encoder.id}' emitted ${encoded.length} values per frame, ` +
            `expected ${encoder.tS} x ${encoder.dS}`,
        );
      }
      values.set(encoded, (start + j) * perFrame);
    });
  }
  writeEmbeddingFile(outPath, values, strided.length, encoder.tS, encoder.dS);
  return { frameCount: strided.length, tS: encoder.tS, dS: encoder.dS };
}
