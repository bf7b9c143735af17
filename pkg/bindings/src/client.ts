/**
 * Flat binding surface. Every function delegates 1:1 to the primary
 * implementation through its CLI and file formats; nothing here
 * recomputes geometry, pooling, generation, or metrics.
 */

import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { runPrimary, runPrimaryJson, type RunOptions } from "./cli.js";
import { readRaster } from "./p3dr.js";
import type {
  CanonicalTransform,
  EvalReport,
  PointMapRecord,
  QaItem,
  RegionFeature,
  SceneRepresentation,
  SceneSummary,
  TokenGridRecord,
} from "./records.js";

export interface CommonOptions extends RunOptions {
  /** Pipeline config JSON path passed straight to the CLI. */
  configPath?: string;
  /** Worker threads inside the primary (default: its own default). */
  threads?: number;
}

function commonArgs(options: CommonOptions): string[] {
  const args: string[] = [];
  if (options.configPath) args.push("--config", options.configPath);
  if (options.threads !== undefined) args.push("--threads", String(options.threads));
  return args;
}

/** Load + validate a scene manifest; returns the primary's summary record. */
export function loadScene(manifestPath: string, options: RunOptions = {}): SceneSummary {
  return runPrimaryJson<SceneSummary>(["info", manifestPath, "--json"], options);
}

export interface BuildOptions extends CommonOptions {
  /** Where the canonical maps, grids, and transform land (required). */
  outDir: string;
  /** Directory of external world point maps (pointmap_<index>.p3dr). */
  pointmapsDir?: string;
  /** Frames to sample (primary default: 32). */
  frames?: number;
  cacheDir?: string;
}

interface CanonicalizeStdout {
  out: string;
  frames: number[];
  from_cache: boolean;
  transform: CanonicalTransform;
}

/** Canonical point maps + position token grids via the primary pipeline. */
export function buildSceneRepresentation(
  manifestPath: string,
  options: BuildOptions
): SceneRepresentation {
  const args = ["canonicalize", manifestPath, "--out", options.outDir, ...commonArgs(options)];
  if (options.pointmapsDir) args.push("--pointmaps", options.pointmapsDir);
  if (options.frames !== undefined) args.push("--frames", String(options.frames));
  if (options.cacheDir) args.push("--cache", options.cacheDir);
  const doc = runPrimaryJson<CanonicalizeStdout>(args, options);

  const pad = (index: number) => String(index).padStart(5, "0");
  const canonicalMaps = new Map<number, PointMapRecord>();
  const positionGrids = new Map<number, TokenGridRecord>();
  for (const index of doc.frames) {
    canonicalMaps.set(index, {
      positions: readRaster(join(options.outDir, `canonical_${pad(index)}.p3dr`)),
      validity: readRaster(join(options.outDir, `validity_${pad(index)}.p3dr`)),
      space: "canonical",
    });
    positionGrids.set(index, {
      values: readRaster(join(options.outDir, `posgrid_${pad(index)}.p3dr`)),
      provenance: "position",
    });
  }
  return {
    frameIndices: doc.frames,
    transform: doc.transform,
    canonicalMaps,
    positionGrids,
    fromCache: doc.from_cache,
    outDir: doc.out,
  };
}

export interface RegionOptions extends CommonOptions {
  frames?: number;
  /** Also dump the fused token grids here (fused_<index>.p3dr). */
  dumpGridsDir?: string;
  cacheDir?: string;
}

export interface RegionResult {
  feature: RegionFeature;
  transform: CanonicalTransform;
  /** Fused grids, present when dumpGridsDir was given. */
  fusedGrids?: Map<number, TokenGridRecord>;
}

/** Resolve a region prompt and pool its feature across sampled frames. */
export function extractMultiView(
  manifestPath: string,
  promptPath: string,
  options: RegionOptions = {}
): RegionResult {
  const args = ["region", manifestPath, "--prompt", promptPath, ...commonArgs(options)];
  if (options.frames !== undefined) args.push("--frames", String(options.frames));
  if (options.dumpGridsDir) args.push("--dump-grids", options.dumpGridsDir);
  if (options.cacheDir) args.push("--cache", options.cacheDir);
  const doc = runPrimaryJson<RegionFeature & { transform: CanonicalTransform }>(args, options);
  const result: RegionResult = {
    feature: { vector: doc.vector, support: doc.support, frames_used: doc.frames_used },
    transform: doc.transform,
  };
  if (options.dumpGridsDir) {
    result.fusedGrids = new Map(
      doc.frames_used.map((index) => [
        index,
        {
          values: readRaster(
            join(options.dumpGridsDir as string, `fused_${String(index).padStart(5, "0")}.p3dr`)
          ),
          provenance: "fused" as const,
        },
      ])
    );
  }
  return result;
}

export interface EmbedOptions extends CommonOptions {
  validityPath?: string;
  /** Vision grid to fuse with; output provenance becomes "fused". */
  visionPath?: string;
  /** Where the grid raster is written (required by the CLI). */
  outPath: string;
}

/** Embed a canonical point map into a token grid, optionally fusing. */
export function embedGrid(pointmapPath: string, options: EmbedOptions): TokenGridRecord {
  const args = [
    "embed",
    "--pointmap",
    pointmapPath,
    "--out",
    options.outPath,
    ...commonArgs(options),
  ];
  if (options.validityPath) args.push("--validity", options.validityPath);
  if (options.visionPath) args.push("--vision", options.visionPath);
  const doc = runPrimaryJson<{ out: string; shape: number[]; provenance: string }>(args, options);
  return {
    values: readRaster(doc.out),
    provenance: doc.provenance as TokenGridRecord["provenance"],
  };
}

/** Fuse vision tokens with the position embedding of a point map. */
export function fuseGrids(
  pointmapPath: string,
  visionPath: string,
  options: EmbedOptions
): TokenGridRecord {
  return embedGrid(pointmapPath, { ...options, visionPath });
}

export interface GenerateOptions extends RunOptions {
  /** Keep the QA JSONL here instead of a temp file. */
  outPath?: string;
  configPath?: string;
}

function parseQaLines(text: string): QaItem[] {
  return text
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line) as QaItem);
}

/** Generate spatial QA items for a scene via the primary's templates. */
export function generate(
  manifestPath: string,
  quotas: Record<string, number>,
  seed: number,
  options: GenerateOptions = {}
): QaItem[] {
  const scratch = mkdtempSync(join(tmpdir(), "sr3d-bindings-"));
  try {
    const quotasPath = join(scratch, "quotas.json");
    const outPath = options.outPath ?? join(scratch, "qa.jsonl");
    writeFileSync(quotasPath, JSON.stringify(quotas));
    const args = ["genqa", manifestPath, "--quotas", quotasPath, "--seed", String(seed), "--out", outPath];
    if (options.configPath) args.push("--config", options.configPath);
    runPrimary(args, options);
    return parseQaLines(readFileSync(outPath, "utf8"));
  } finally {
    rmSync(scratch, { recursive: true, force: true });
  }
}

/** Score a predictions file against a QA file. */
export function evaluate(
  qaPath: string,
  predictionsPath: string,
  delta = 1.25,
  options: RunOptions = {}
): EvalReport {
  return runPrimaryJson<EvalReport>(
    ["eval", "--qa", qaPath, "--pred", predictionsPath, "--delta", String(delta), "--json"],
    options
  );
}

interface MetricsStdout {
  success: boolean;
  mra: number;
}

/** Ratio-threshold success: max(pred/gt, gt/pred) <= delta. */
export function evalMetric(pred: number, gt: number, delta = 1.25, options: RunOptions = {}): boolean {
  return runPrimaryJson<MetricsStdout>(
    ["metrics", "--pred", String(pred), "--gt", String(gt), "--delta", String(delta)],
    options
  ).success;
}

/** Mean relative accuracy over the primary's threshold ladder. */
export function evalMra(pred: number, gt: number, options: RunOptions = {}): number {
  return runPrimaryJson<MetricsStdout>(
    ["metrics", "--pred", String(pred), "--gt", String(gt)],
    options
  ).mra;
}
