"""Command-line surface for the pipeline.

Exit codes: 0 success, 2 validation error, 3 geometry error, 4 empty
region. Diagnostics are single machine-parseable lines on stderr
(``ERROR <code>: <message>``); data output goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, p3dr
from .errors import Sr3dError, ValidationError
from .geometry import PointMap, resize_point_map
from .pipeline import (
    PipelineConfig,
    answer_context,
    build_scene_representation,
    default_cache_dir,
    load_config,
    load_external_pointmaps,
    write_representation,
)
from .pos_embed import TokenGrid, embed_grid, fuse
from .qa import (
    evaluate,
    eval_metric,
    eval_mra,
    generate,
    read_predictions_jsonl,
    read_qa_jsonl,
    validate_quotas,
    write_qa_jsonl,
)
from .region import load_prompt
from .scene import load_scene, sample_frames, save_scene, scene_summary
from .synth import make_scene


def _config_from(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "frames", None):
        cfg = PipelineConfig.from_dict({**cfg.to_dict(), "frame_count": args.frames})
    return cfg


def _threads(args) -> int:
    if args.threads is not None:
        return max(args.threads, 1)
    return os.cpu_count() or 1


def _cmd_synth(args) -> int:
    scene = make_scene(
        seed=args.seed,
        n_frames=args.frames,
        n_boxes=args.boxes,
        width=args.width,
        height=args.height,
    )
    manifest = save_scene(scene, args.out_dir)
    print(json.dumps({"manifest": str(manifest), "frames": len(scene.frames), "boxes": len(scene.boxes)}))
    return 0


def _cmd_info(args) -> int:
    scene = load_scene(args.manifest)
    summary = scene_summary(scene)
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        print(f"scene '{summary['name']}': {summary['frame_count']} frames, {len(summary['boxes'])} boxes")
        for box in summary["boxes"]:
            print(f"  box {box['id']:>3} {box['label']:<12} size {box['size']}")
    return 0


def _cmd_canonicalize(args) -> int:
    scene = load_scene(args.manifest)
    cfg = _config_from(args)
    external = None
    if args.pointmaps:
        frames = sample_frames(scene, cfg.frame_count)
        external = load_external_pointmaps(args.pointmaps, frames)
    rep = build_scene_representation(
        scene,
        cfg,
        external_pointmaps=external,
        cache_dir=default_cache_dir(args.cache),
        threads=_threads(args),
    )
    out_dir = Path(args.out)
    write_representation(rep, out_dir)
    print(
        json.dumps(
            {
                "out": str(out_dir),
                "frames": rep.frame_indices,
                "from_cache": rep.from_cache,
                "transform": rep.transform.to_dict(),
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_region(args) -> int:
    scene = load_scene(args.manifest)
    cfg = _config_from(args)
    prompt = load_prompt(args.prompt)
    bundle = answer_context(
        scene,
        cfg,
        prompt,
        cache_dir=default_cache_dir(args.cache),
        threads=_threads(args),
    )
    if args.dump_grids:
        dump = Path(args.dump_grids)
        dump.mkdir(parents=True, exist_ok=True)
        for index in bundle.frame_indices:
            p3dr.write_raster(dump / f"fused_{index:05d}.p3dr", bundle.fused_grids[index].values)
    doc = bundle.region_feature.to_dict()
    doc["transform"] = bundle.transform.to_dict()
    print(json.dumps(doc, sort_keys=True))
    return 0


def _cmd_embed(args) -> int:
    cfg = _config_from(args)
    positions = p3dr.read_raster(args.pointmap).astype(np.float64)
    if positions.shape[2] != 3:
        raise ValidationError(f"{args.pointmap}: expected 3 channels, got {positions.shape[2]}")
    if args.validity:
        validity = p3dr.read_plane(args.validity) > 0.5
        if validity.shape != positions.shape[:2]:
            raise ValidationError(
                f"validity raster {validity.shape} does not match point map {positions.shape[:2]}"
            )
    else:
        validity = np.isfinite(positions).all(axis=2)
    positions[~validity] = 0.0
    points = PointMap(positions=positions, space="canonical", validity=validity)
    h, w = points.shape
    if h % cfg.patch_size or w % cfg.patch_size:
        # arbitrary-resolution maps (e.g. canonicalize outputs) get the
        # same one-frame-one-tile resize the pipeline applies
        points = resize_point_map(points, cfg.tile_size, cfg.tile_size)
    grid = embed_grid(points, cfg.sinusoid, cfg.make_mlp(), cfg.patch_size)
    provenance = "position"
    if args.vision:
        values = p3dr.read_raster(args.vision).astype(np.float64)
        if values.shape != grid.values.shape:
            raise ValidationError(
                f"vision grid shape {values.shape} does not match position grid {grid.values.shape}"
            )
        grid = fuse(TokenGrid(values=values, provenance="vision"), grid)
        provenance = "fused"
    p3dr.write_raster(args.out, grid.values)
    print(
        json.dumps(
            {"out": args.out, "shape": list(grid.values.shape), "provenance": provenance},
            sort_keys=True,
        )
    )
    return 0


def _cmd_genqa(args) -> int:
    scene = load_scene(args.manifest)
    cfg = _config_from(args)
    quotas_path = Path(args.quotas)
    if not quotas_path.is_file():
        raise ValidationError(f"quotas file not found: {quotas_path}")
    try:
        quotas = validate_quotas(json.loads(quotas_path.read_text()))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"quotas file is not valid JSON: {exc}") from exc
    result = generate(scene, quotas, seed=args.seed, min_ratio_gap=cfg.tie_gap)
    if args.out:
        write_qa_jsonl(result.items, args.out)
    else:
        for item in result.items:
            print(json.dumps(item.to_dict(), sort_keys=True))
    for category, missing in sorted(result.shortfall.items()):
        print(f"shortfall {category}: {missing} item(s) unsatisfiable", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    items = read_qa_jsonl(args.qa)
    predictions = read_predictions_jsonl(args.pred)
    report = evaluate(items, predictions, delta=args.delta)
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
        print(report.format_table(), file=sys.stderr)
    else:
        print(report.format_table())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    return 0


def _cmd_metrics(args) -> int:
    print(
        json.dumps(
            {
                "success": eval_metric(args.pred, args.gt, delta=args.delta),
                "mra": eval_mra(args.pred, args.gt),
            },
            sort_keys=True,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sr3d",
        description="Canonical 3D scene representations, region features, and spatial QA.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, frames_flag=False):
        p.add_argument("--config", help="pipeline config JSON file")
        p.add_argument("--cache", help="cache directory (overrides SR3D_CACHE_DIR)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
        if frames_flag:
            p.add_argument("--frames", type=int, default=None, help="frames to sample (default 32)")

    p = sub.add_parser("synth", help="write a deterministic synthetic scene")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=4)
    p.add_argument("--boxes", type=int, default=6)
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--height", type=int, default=72)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("info", help="validate a manifest and summarize the scene")
    p.add_argument("manifest")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_info)

    p = sub.add_parser("canonicalize", help="write canonical point maps, grids, and the transform")
    p.add_argument("manifest")
    p.add_argument("--pointmaps", help="directory of external world point maps (pointmap_<index>.p3dr)")
    p.add_argument("--out", default="canonical_out", help="output directory")
    add_common(p, frames_flag=True)
    p.set_defaults(func=_cmd_canonicalize)

    p = sub.add_parser("region", help="resolve a region prompt and print its pooled feature")
    p.add_argument("manifest")
    p.add_argument("--prompt", required=True, help="region prompt JSON file")
    p.add_argument("--dump-grids", help="also write fused token grids to this directory")
    p.add_argument("--json", action="store_true", help="accepted for symmetry; output is always JSON")
    add_common(p, frames_flag=True)
    p.set_defaults(func=_cmd_region)

    p = sub.add_parser("embed", help="embed a canonical point map raster into a token grid")
    p.add_argument("--pointmap", required=True, help="canonical point map (P3DR, 3 channels)")
    p.add_argument("--validity", help="optional validity raster (P3DR, 1 channel)")
    p.add_argument("--vision", help="optional vision grid to fuse with (P3DR)")
    p.add_argument("--out", required=True, help="output grid path (P3DR)")
    add_common(p)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("genqa", help="generate spatial QA items from a scene's boxes")
    p.add_argument("manifest")
    p.add_argument("--quotas", required=True, help="JSON file mapping category to count")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="output JSONL path (default: stdout)")
    add_common(p)
    p.set_defaults(func=_cmd_genqa)

    p = sub.add_parser("eval", help="score a predictions file against a QA file")
    p.add_argument("--qa", required=True, help="QA JSONL file")
    p.add_argument("--pred", required=True, help="predictions JSONL file")
    p.add_argument("--delta", type=float, default=1.25, help="success-rate ratio threshold")
    p.add_argument("--json", action="store_true", help="print the report JSON on stdout")
    p.add_argument("--out", help="also write the report JSON here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("metrics", help="evaluate one metric prediction/ground-truth pair")
    p.add_argument("--pred", type=float, required=True)
    p.add_argument("--gt", type=float, required=True)
    p.add_argument("--delta", type=float, default=1.25)
    p.set_defaults(func=_cmd_metrics)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Sr3dError as exc:
        print(f"ERROR {exc.exit_code}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
