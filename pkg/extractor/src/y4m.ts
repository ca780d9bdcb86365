/**
 * Minimal YUV4MPEG2 (.y4m) decoder.
 *
 * Y4M is the one common container that needs no codec: a text header
 * line, then raw planar frames each introduced by a FRAME marker.  The
 * decoder hands back planar RGB in [0, 1] (BT.601 limited range), which
 * is what the patch encoders consume.
 */

export class DecodeError extends Error {}

export interface RgbFrame {
  width: number;
  height: number;
  /** Planar, r then g then b, row-major, length 3 * width * height. */
  data: Float64Array;
}

interface Header {
  width: number;
  height: number;
  colorspace: string;
  headerEnd: number;
}

const CHROMA_SHAPES: Record<string, [number, number]> = {
  // colorspace tag -> chroma subsampling divisors (x, y)
  "420": [2, 2],
  "420jpeg": [2, 2],
  "420mpeg2": [2, 2],
  "420paldv": [2, 2],
  "422": [2, 1],
  "444": [1, 1],
  mono: [0, 0],
};

function parseHeader(buf: Buffer): Header {
  const nl = buf.indexOf(0x0a);
  if (nl < 0) {
    throw new DecodeError("no newline in stream header");
  }
  const line = buf.toString("ascii", 0, nl);
  const parts = line.split(" ");
  if (parts[0] !== "YUV4MPEG2") {
    throw new DecodeError(`not a YUV4MPEG2 stream (got '${parts[0]}')`);
  }
  let width = 0;
  let height = 0;
  let colorspace = "420";
  for (const p of parts.slice(1)) {
    if (p.startsWith("W")) width = parseInt(p.slice(1), 10);
    else if (p.startsWith("H")) height = parseInt(p.slice(1), 10);
    else if (p.startsWith("C")) colorspace = p.slice(1);
  }
  if (!(width > 0) || !(height > 0)) {
    throw new DecodeError(`bad frame geometry ${width}x${height}`);
  }
  if (!(colorspace in CHROMA_SHAPES)) {
    throw new DecodeError(`unsupported colorspace C${colorspace}`);
  }
  return { width, height, colorspace, headerEnd: nl + 1 };
}

function clamp01(v: number): number {
  return v < 0 ? 0 : v > 1 ? 1 : v;
}

/** BT.601 limited-range YCbCr -> RGB, all channels scaled to [0, 1]. */
function toRgb(
  y: Buffer,
  cb: Buffer | null,
  cr: Buffer | null,
  width: number,
  height: number,
  cx: number,
  cy: number,
): RgbFrame {
  const n = width * height;
  const data = new Float64Array(3 * n);
  const cw = cx ? Math.ceil(width / cx) : 0;
  for (let row = 0; row < height; row++) {
    for (let col = 0; col < width; col++) {
      const i = row * width + col;
      const yv = (y[i] - 16) / 219;
      let r = yv;
      let g = yv;
      let b = yv;
      if (cb && cr) {
        const ci = Math.floor(row / cy) * cw + Math.floor(col / cx);
        const u = (cb[ci] - 128) / 224;
        const v = (cr[ci] - 128) / 224;
        r = yv + 1.402 * v;
        g = yv - 0.344136 * u - 0.714136 * v;
        b = yv + 1.772 * u;
      }
      data[i] = clamp01(r);
      data[n + i] = clamp01(g);
      data[2 * n + i] = clamp01(b);
    }
  }
  return { width, height, data };
}

/** Decode every frame of a .y4m buffer. */
export function decodeY4m(buf: Buffer): RgbFrame[] {
  const { width, height, colorspace, headerEnd } = parseHeader(buf);
  const [cx, cy] = CHROMA_SHAPES[colorspace];
  const ySize = width * height;
  const cSize = cx ? Math.ceil(width / cx) * Math.ceil(height / cy) : 0;
  const frames: RgbFrame[] = [];
  let pos = headerEnd;
  while (pos < buf.length) {
    const nl = buf.indexOf(0x0a, pos);
    if (nl < 0 || buf.toString("ascii", pos, pos + 5) !== "FRAME") {
      throw new DecodeError(`bad FRAME marker at byte ${pos}`);
    }
    pos = nl + 1;
    const frameBytes = ySize + 2 * cSize;
    if (pos + frameBytes > buf.length) {
      throw new DecodeError(
        `truncated frame ${frames.length}: need ${frameBytes} bytes, have ${buf.length - pos}`,
      );
    }
    const y = buf.subarray(pos, pos + ySize);
    const cb = cSize ? buf.subarray(pos + ySize, pos + ySize + cSize) : null;
    const cr = cSize
      ? buf.subarray(pos + ySize + cSize, pos + frameBytes)
      : null;
    frames.push(toRgb(y, cb, cr, width, height, cx, cy));
    pos += frameBytes;
  }
  if (frames.length === 0) {
    throw new DecodeError("stream contains no frames");
  }
  return frames;
}
