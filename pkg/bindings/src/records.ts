/**
 * Host-language mirrors of the primary's domain records. Field names and
 * value semantics follow the wire formats exactly (scene manifests, QA
 * JSONL schema `sr3d-qa/1`, region feature JSON, report JSON).
 */

import type { Raster } from "./p3dr.js";

export interface IntrinsicsRecord {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export interface BoxRecord {
  id: number;
  label: string;
  /** World-space center in meters. */
  center: [number, number, number];
  /** True extents along the gravity-aligned axes, meters. */
  size: [number, number, number];
  /** Rotation about the gravity (+z) axis, radians. */
  yaw: number;
}

export interface FrameSummary {
  index: number;
  width: number;
  height: number;
  valid_depth_fraction: number;
}

export interface CanonicalTransform {
  offset: [number, number, number];
  scale: number;
  aabb_min: [number, number, number];
  aabb_max: [number, number, number];
  degenerate: boolean;
}

export interface SceneSummary {
  name: string;
  frame_count: number;
  frames: FrameSummary[];
  boxes: BoxRecord[];
  canonicalization: CanonicalTransform | null;
}

/** A point map: positions raster (3 channels) plus validity (1 channel). */
export interface PointMapRecord {
  positions: Raster;
  validity: Raster;
  space: "camera" | "world" | "canonical";
}

export interface TokenGridRecord {
  values: Raster;
  provenance: "vision" | "position" | "fused";
}

export interface RegionFeature {
  vector: number[];
  support: number;
  frames_used: number[];
}

export interface QaItem {
  schema: string;
  id: number;
  category: string;
  question: string;
  region_ids: number[];
  answer_kind: "choice" | "metric";
  gt_choice: number | string | null;
  gt_value: number | null;
  unit: string | null;
  scene: string;
  seed: number;
}

export interface CategoryStats {
  count: number;
  correct?: number;
  accuracy?: number;
  successes?: number;
  success_rate?: number;
  mra?: number;
}

export interface EvalReport {
  per_category: Record<string, CategoryStats>;
  total: number;
  unparsed_metric: number;
  missing_predictions: number;
  delta: number;
  qualitative_average: number | null;
  quantitative_average: number | null;
  mra_average: number | null;
}

export interface SceneRepresentation {
  /** Indices of the sampled frames, in sampling order. */
  frameIndices: number[];
  transform: CanonicalTransform;
  /** Frame-resolution canonical point maps, keyed by frame index. */
  canonicalMaps: Map<number, PointMapRecord>;
  /** Position token grids, keyed by frame index. */
  positionGrids: Map<number, TokenGridRecord>;
  fromCache: boolean;
  outDir: string;
}

export function makeBox(
  id: number,
  label: string,
  center: [number, number, number],
  size: [number, number, number],
  yaw = 0
): BoxRecord {
  return { id, label, center, size, yaw };
}
