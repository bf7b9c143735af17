"""Canonical 3D positional representations of multi-view RGB-D scenes,
dynamic tile-then-stitch region features, and a template-based spatial QA
benchmark generator/evaluator."""

__version__ = "0.1.0"

from .errors import EmptyRegionError, GeometryError, Sr3dError, ValidationError
from .geometry import (
    CanonicalTransform,
    PointMap,
    back_project,
    box_corners,
    canonicalize,
    fit_canonicalization,
    project_box,
    project_point,
    to_world,
)
from .pipeline import (
    AnswerBundle,
    PipelineConfig,
    SceneRepresentation,
    answer_context,
    build_scene_representation,
    pseudo_vision_grid,
)
from .pos_embed import (
    PointwiseMlp,
    SinusoidConfig,
    TokenGrid,
    embed_grid,
    fuse,
    grad_check,
    mlp_forward,
    sinusoid,
)
from .qa import (
    EvalReport,
    QaItem,
    eval_choice,
    eval_metric,
    eval_mra,
    evaluate,
    generate,
    gt_distance,
    gt_height,
    gt_width,
)
from .region import (
    RegionFeature,
    RegionPrompt,
    drop_frames,
    extract_multi_view,
    extract_single_view,
    mask_to_box,
    resolve_prompt,
)
from .scene import (
    CameraIntrinsics,
    DepthMap,
    Frame,
    OrientedBox3D,
    Pose,
    Scene,
    load_scene,
    sample_frames,
    save_scene,
)
from .tiling import TilingPlan, downsample_to_tokens, select_ratio, split_grid, stitch, tile

__all__ = [
    "AnswerBundle",
    "CameraIntrinsics",
    "CanonicalTransform",
    "DepthMap",
    "EmptyRegionError",
    "EvalReport",
    "Frame",
    "GeometryError",
    "OrientedBox3D",
    "PipelineConfig",
    "PointMap",
    "PointwiseMlp",
    "Pose",
    "QaItem",
    "RegionFeature",
    "RegionPrompt",
    "Scene",
    "SceneRepresentation",
    "SinusoidConfig",
    "Sr3dError",
    "TilingPlan",
    "TokenGrid",
    "ValidationError",
    "answer_context",
    "back_project",
    "box_corners",
    "build_scene_representation",
    "canonicalize",
    "downsample_to_tokens",
    "drop_frames",
    "embed_grid",
    "eval_choice",
    "eval_metric",
    "eval_mra",
    "evaluate",
    "extract_multi_view",
    "extract_single_view",
    "fit_canonicalization",
    "fuse",
    "generate",
    "grad_check",
    "gt_distance",
    "gt_height",
    "gt_width",
    "load_scene",
    "mask_to_box",
    "mlp_forward",
    "project_box",
    "project_point",
    "pseudo_vision_grid",
    "resolve_prompt",
    "sample_frames",
    "save_scene",
    "select_ratio",
    "sinusoid",
    "split_grid",
    "stitch",
    "tile",
    "to_world",
]
