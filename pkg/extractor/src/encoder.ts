/**
 * Frame encoders, pluggable by identifier.
 *
 * The reference pipeline used a large pretrained image encoder; the
 * store format only records the (tokens, dim) geometry, so any
 * deterministic per-frame encoder can stand in.  Two desk-scale
 * encoders ship here: a hand-rolled patch-statistics encoder whose
 * geometry matches the toy training configs, and a seeded
 * random-projection encoder on a 27x27 patch grid echoing the
 * full-scale token layout.
 */

import { z } from "zod";
import type { RgbFrame } from "./y4m.js";

export const ExtractorConfigSchema = z
  .object({
    encoder: z.string().default("grid-stats-4x4x8"),
    resize: z.number().int().positive().default(384),
    frameStride: z.number().int().positive().default(2),
    dtype: z.literal("f32").default("f32"),
    batchSize: z.number().int().positive().default(8),
  })
  .strict();

export type ExtractorConfig = z.infer<typeof ExtractorConfigSchema>;

export interface FrameEncoder {
  id: string;
  tS: number;
  dS: number;
  /** Encode one resized square luma/rgb frame to tS * dS values. */
  encode(frame: ResizedFrame): Float32Array;
}

export interface ResizedFrame {
  size: number;
  /** Planar r, g, b in [0, 1], each size * size. */
  data: Float64Array;
}

/** Bilinear resize of a planar RGB frame to size x size. */
export function resizeFrame(frame: RgbFrame, size: number): ResizedFrame {
  const { width, height, data } = frame;
  const out = new Float64Array(3 * size * size);
  const n = width * height;
  const m = size * size;
  for (let row = 0; row < size; row++) {
    const sy = size === 1 ? 0 : (row * (height - 1)) / (size - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, height - 1);
    const fy = sy - y0;
    for (let col = 0; col < size; col++) {
      const sx = size === 1 ? 0 : (col * (width - 1)) / (size - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, width - 1);
      const fx = sx - x0;
      for (let c = 0; c < 3; c++) {
        const p = c * n;
        const top = data[p + y0 * width + x0] * (1 - fx) + data[p + y0 * width + x1] * fx;
        const bot = data[p + y1 * width + x0] * (1 - fx) + data[p + y1 * width + x1] * fx;
        out[c * m + row * size + col] = top * (1 - fy) + bot * fy;
      }
    }
  }
  return { size, data: out };
}

function cellBounds(grid: number, size: number, i: number): [number, number] {
  return [Math.round((i * size) / grid), Math.round(((i + 1) * size) / grid)];
}

/**
 * 4x4 grid, 8 hand-picked statistics per cell: channel means, luma
 * mean and standard deviation, mean absolute horizontal and vertical
 * gradients, and the mean of the cell's central quarter.  Geometry
 * (t_s = 16, d_s = 8) matches the toy training configs.
 */
function gridStats(frame: ResizedFrame): Float32Array {
  const grid = 4;
  const dS = 8;
  const { size, data } = frame;
  const m = size * size;
  const out = new Float32Array(grid * grid * dS);
  const luma = (i: number) =>
    0.299 * data[i] + 0.587 * data[m + i] + 0.114 * data[2 * m + i];
  for (let gr = 0; gr < grid; gr++) {
    const [r0, r1] = cellBounds(grid, size, gr);
    for (let gc = 0; gc < grid; gc++) {
      const [c0, c1] = cellBounds(grid, size, gc);
      const count = (r1 - r0) * (c1 - c0);
      let sr = 0;
      let sg = 0;
      let sb = 0;
      let sy = 0;
      let syy = 0;
      let gx = 0;
      let gy = 0;
      let inner = 0;
      let innerCount = 0;
      for (let row = r0; row < r1; row++) {
        for (let col = c0; col < c1; col++) {
          const i = row * size + col;
          sr += data[i];
          sg += data[m + i];
          sb += data[2 * m + i];
          const yv = luma(i);
          sy += yv;
          syy += yv * yv;
          if (col + 1 < c1) gx += Math.abs(luma(i + 1) - yv);
          if (row + 1 < r1) gy += Math.abs(luma(i + size) - yv);
          const qr = row - r0 >= (r1 - r0) / 4 && row - r0 < (3 * (r1 - r0)) / 4;
          const qc = col - c0 >= (c1 - c0) / 4 && col - c0 < (3 * (c1 - c0)) / 4;
          if (qr && qc) {
            inner += yv;
            innerCount++;
          }
        }
      }
      const mean = sy / count;
      const cell = (gr * grid + gc) * dS;
      out[cell] = sr / count;
      out[cell + 1] = sg / count;
      out[cell + 2] = sb / count;
      out[cell + 3] = mean;
      out[cell + 4] = Math.sqrt(Math.max(syy / count - mean * mean, 0));
      out[cell + 5] = gx / Math.max((r1 - r0) * (c1 - c0 - 1), 1);
      out[cell + 6] = gy / Math.max((r1 - r0 - 1) * (c1 - c0), 1);
      out[cell + 7] = innerCount ? inner / innerCount : mean;
    }
  }
  return out;
}

/** Deterministic PRNG (mulberry32) for the projection encoder. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/**
 * 27x27 patch grid (729 tokens, as in the full-scale layout) with a
 * fixed seeded random projection of each patch's luma values to 64
 * dimensions.  The projection matrix depends only on the encoder id,
 * so extraction is deterministic across runs and machines.
 */
function makeProjectionEncoder(id: string, grid: number, dS: number): FrameEncoder {
  let seed = 0;
  for (const ch of id) seed = (seed * 31 + ch.charCodeAt(0)) >>> 0;
  const cache = new Map<number, Float64Array>();
  const projection = (patchLen: number): Float64Array => {
    let w = cache.get(patchLen);
    if (!w) {
      const rand = mulberry32(seed ^ patchLen);
      w = new Float64Array(patchLen * dS);
      const scale = 1 / Math.sqrt(patchLen);
      for (let i = 0; i < w.length; i++) {
        // Box-Muller normal deviates
        const u = Math.max(rand(), 1e-12);
        const v = rand();
        w[i] = Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v) * scale;
      }
      cache.set(patchLen, w);
    }
    return w;
  };
  return {
    id,
    tS: grid * grid,
    dS,
    encode(frame: ResizedFrame): Float32Array {
      const { size, data } = frame;
      const m = size * size;
      const out = new Float32Array(grid * grid * dS);
      for (let gr = 0; gr < grid; gr++) {
        const [r0, r1] = cellBounds(grid, size, gr);
        for (let gc = 0; gc < grid; gc++) {
          const [c0, c1] = cellBounds(grid, size, gc);
          const patch: number[] = [];
          for (let row = r0; row < r1; row++) {
            for (let col = c0; col < c1; col++) {
              const i = row * size + col;
              patch.push(
                0.299 * data[i] + 0.587 * data[m + i] + 0.114 * data[2 * m + i],
              );
            }
          }
          const w = projection(patch.length);
          const token = (gr * grid + gc) * dS;
          for (let d = 0; d < dS; d++) {
            let acc = 0;
            for (let p = 0; p < patch.length; p++) {
              acc += patch[p] * w[p * dS + d];
            }
            out[token + d] = acc;
          }
        }
      }
      return out;
    },
  };
}

const REGISTRY: Record<string, FrameEncoder> = {};

function register(enc: FrameEncoder): void {
  REGISTRY[enc.id] = enc;
}

register({ id: "grid-stats-4x4x8", tS: 16, dS: 8, encode: gridStats });
register(makeProjectionEncoder("patch-proj-27x27x64", 27, 64));

export function getEncoder(id: string): FrameEncoder {
  const enc = REGISTRY[id];
  if (!enc) {
    throw new Error(
      `unknown encoder '${id}' (available: ${Object.keys(REGISTRY).join(", ")})`,
    );
  }
  return enc;
}
