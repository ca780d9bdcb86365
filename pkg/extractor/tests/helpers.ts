/** Test fixtures: synthesize tiny .y4m buffers in memory. */

export interface Y4mSpec {
  width: number;
  height: number;
  colorspace?: "420" | "422" | "444" | "mono";
  /** luma value per frame, or a painter (frame, row, col) -> byte */
  frames: number | ((frame: number, row: number, col: number) => number);
  frameCount?: number;
}

export function makeY4m(spec: Y4mSpec): Buffer {
  const cs = spec.colorspace ?? "420";
  const count = typeof spec.frames === "number" ? spec.frames : spec.frameCount ?? 1;
  const painter =
    typeof spec.frames === "function" ? spec.frames : () => 128;
  const { width, height } = spec;
  const header = Buffer.from(`YUV4MPEG2 W${width} H${height} F25:1 C${cs}\n`, "ascii");
  const cx = cs === "mono" ? 0 : cs === "444" ? 1 : 2;
  const cy = cs === "420" ? 2 : cs === "mono" ? 0 : 1;
  const cSize = cx ? Math.ceil(width / cx) * Math.ceil(height / cy) : 0;
  const chunks: Buffer[] = [header];
  for (let f = 0; f < count; f++) {
    chunks.push(Buffer.from("FRAME\n", "ascii"));
    const y = Buffer.alloc(width * height);
    for (let r = 0; r < height; r++) {
      for (let c = 0; c < width; c++) {
        y[r * width + c] = painter(f, r, c) & 0xff;
      }
    }
    chunks.push(y);
    if (cSize) {
      chunks.push(Buffer.alloc(cSize, 128), Buffer.alloc(cSize, 128));
    }
  }
  return Buffer.concat(chunks);
}
