export {
  P3DR_MAGIC,
  decodeRaster,
  encodeRaster,
  rasterAt,
  readRaster,
  writeRaster,
  type Raster,
} from "./p3dr.js";
export {
  EmptyRegionError,
  GeometryError,
  PrimaryError,
  ValidationError,
  primaryErrorFrom,
} from "./errors.js";
export { primaryExecutable, runPrimary, runPrimaryJson, type RunOptions } from "./cli.js";
export {
  buildSceneRepresentation,
  embedGrid,
  evalMetric,
  evalMra,
  evaluate,
  extractMultiView,
  fuseGrids,
  generate,
  loadScene,
  type BuildOptions,
  type CommonOptions,
  type EmbedOptions,
  type GenerateOptions,
  type RegionOptions,
  type RegionResult,
} from "./client.js";
export {
  makeBox,
  type BoxRecord,
  type CanonicalTransform,
  type CategoryStats,
  type EvalReport,
  type FrameSummary,
  type IntrinsicsRecord,
  type PointMapRecord,
  type QaItem,
  type RegionFeature,
  type SceneRepresentation,
  type SceneSummary,
  type TokenGridRecord,
} from "./records.js";
