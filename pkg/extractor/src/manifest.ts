/**
 * manifest_build: a directory of videos plus a labels file -> the
 * manifest JSON the training CLI consumes.
 *
 * The labels file is a JSON array mapping video filenames to their
 * label, dataset, generator, and split; those fields are copied into
 * the manifest verbatim.  Videos without a labels entry are listed and
 * skipped with a warning rather than failing the whole build.
 */

import { mkdir, readdir, readFile, writeFile } from "fs/promises";
import { basename, extname, join } from "path";
import { z } from "zod";

import { ExtractorConfig } from "./encoder.js";
import { extract } from "./extract.js";

export class LabelsError extends Error {}

const LabelRecordSchema = z
  .object({
    filename: z.string().min(1),
    label: z.number().int().nonnegative(),
    dataset: z.string().min(1),
    generator: z.string().min(1),
    split: z.enum(["train", "val", "test"]),
  })
  .strict();

export type LabelRecord = z.infer<typeof LabelRecordSchema>;

export interface ManifestEntry {
  video_id: string;
  embedding_path: string;
  label: number;
  dataset: string;
  generator: string;
  split: string;
}

export interface BuildResult {
  entries: ManifestEntry[];
  skipped: string[];
}

export async function loadLabels(path: string): Promise<Map<string, LabelRecord>> {
  let raw: unknown;
  try {
    raw = JSON.parse(await readFile(path, "utf-8"));
  } catch (e) {
    throw new LabelsError(`cannot read labels file ${path}: ${(e as Error).message}`);
  }
  const parsed = z.array(LabelRecordSchema).safeParse(raw);
  if (!parsed.success) {
    throw new LabelsError(`invalid labels file ${path}: ${parsed.error.message}`);
  }
  const byName = new Map<string, LabelRecord>();
  for (const rec of parsed.data) {
    if (byName.has(rec.filename)) {
      throw new LabelsError(`duplicate filename '${rec.filename}' in labels file`);
    }
    byName.set(rec.filename, rec);
  }
  return byName;
}

/**
 * Extract every labeled .y4m in videoDir into outDir and write
 * outDir/manifest.json.  Returns the entries plus any skipped files.
 */
export async function manifestBuild(
  videoDir: string,
  labelsPath: string,
  config: ExtractorConfig,
  outDir: string,
  warn: (msg: string) => void = (m) => console.warn(m),
): Promise<BuildResult> {
  const labels = await loadLabels(labelsPath);
  await mkdir(outDir, { recursive: true });
  const files = (await readdir(videoDir))
    .filter((f) => extname(f) === ".y4m")
    .sort();
  const entries: ManifestEntry[] = [];
  const skipped: string[] = [];
  for (const file of files) {
    const rec = labels.get(file);
    if (!rec) {
      skipped.push(file);
      warn(`no labels entry for '${file}', skipping`);
      continue;
    }
    const stem = basename(file, ".y4m");
    const embName = `${stem}.emb`;
    await extract(join(videoDir, file), config, join(outDir, embName));
    entries.push({
      video_id: stem,
      embedding_path: embName,
      label: rec.label,
      dataset: rec.dataset,
      generator: rec.generator,
      split: rec.split,
    });
  }
  await writeFile(
    join(outDir, "manifest.json"),
    JSON.stringify(entries, null, 2) + "\n",
  );
  return { entries, skipped };
}
