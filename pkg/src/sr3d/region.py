"""Tile-then-stitch region feature extraction with mask pooling, plus the
mask augmentations used at training time (mask-to-box, frame dropping).

A region prompt arrives as 2D masks on one or more frames, 2D boxes, or a
single oriented 3D box; everything is resolved to per-frame masks before
pooling. Token cells are selected at coverage > 0.5; a prompt whose
coverage never clears the threshold raises ``EmptyRegionError`` (reporting
the best coverage seen) instead of silently pooling nothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import p3dr
from .errors import EmptyRegionError, ValidationError
from .geometry import project_box
from .pos_embed import TokenGrid
from .scene import Frame, OrientedBox3D, Scene
from .tiling import PATCH_SIZE, TilingPlan, downsample_to_tokens, resize_raster, stitch, tile

POOL_THRESHOLD = 0.5

PROMPT_KINDS = ("mask2d", "box2d", "box3d")


@dataclass
class RegionPrompt:
    """A region of interest before/after resolution to per-frame masks.

    ``rects`` are inclusive pixel boxes [x0, y0, x1, y1] on a frame;
    ``per_frame_masks`` maps frame index to an HxW boolean raster.
    """

    kind: str
    id: int = 0
    per_frame_masks: dict[int, np.ndarray] = field(default_factory=dict)
    rects: dict[int, tuple[float, float, float, float]] = field(default_factory=dict)
    box: OrientedBox3D | None = None

    def __post_init__(self):
        if self.kind not in PROMPT_KINDS:
            raise ValidationError(f"unknown prompt kind '{self.kind}'")
        if self.kind == "box3d" and self.box is None:
            raise ValidationError("box3d prompt requires a box")
        self.per_frame_masks = {
            int(k): np.asarray(v, dtype=bool) for k, v in self.per_frame_masks.items()
        }

    def nonempty_frames(self) -> list[int]:
        return sorted(i for i, m in self.per_frame_masks.items() if m.any())


@dataclass(frozen=True)
class RegionFeature:
    """Pooled region feature: the mean over selected token cells."""

    vector: np.ndarray
    support: int
    frames_used: list[int]

    def __post_init__(self):
        vector = np.asarray(self.vector, dtype=np.float64)
        if self.support < 1:
            raise ValidationError(f"support must be >= 1, got {self.support}")
        if not np.isfinite(vector).all():
            raise ValidationError("region feature vector must be finite")
        object.__setattr__(self, "vector", vector)

    def to_dict(self) -> dict:
        return {
            "vector": [float(v) for v in self.vector],
            "support": int(self.support),
            "frames_used": [int(i) for i in self.frames_used],
        }


def mask_token_coverage(mask: np.ndarray, grid_hw: tuple[int, int], patch_size: int) -> np.ndarray:
    """Fraction of each token cell covered by the mask.

    The mask is nearest-resized to the grid's pixel footprint and patch-
    averaged, matching the tile-then-stitch pipeline cell for cell.
    """
    gh, gw = grid_hw
    resized = resize_raster(np.asarray(mask, dtype=bool), gh * patch_size, gw * patch_size, "nearest")
    return downsample_to_tokens(resized, patch_size)


def extract_single_view(
    image_grid: TokenGrid,
    mask: np.ndarray,
    plan: TilingPlan,
    threshold: float = POOL_THRESHOLD,
) -> RegionFeature:
    """Pool a stitched token grid over a mask tiled with the same plan.

    The mask goes through the identical tile (nearest) -> token-downsample
    -> stitch route as the image, so selected cells line up exactly with
    the high-resolution feature grid.
    """
    mask = np.asarray(mask, dtype=bool)
    grid_w, grid_h = plan.stitched_grid
    if image_grid.values.shape[:2] != (grid_h, grid_w):
        raise ValidationError(
            f"stitched grid shape {image_grid.values.shape[:2]} does not match plan "
            f"({grid_h}, {grid_w})"
        )
    mask_tiles = tile(mask, plan, "nearest")
    coverage = stitch([downsample_to_tokens(t, plan.patch_size) for t in mask_tiles], plan)
    selected = coverage > threshold
    if not selected.any():
        raise EmptyRegionError(
            f"mask selects no token cells at coverage > {threshold} "
            f"(max coverage {float(coverage.max()):.4f})"
        )
    cells = image_grid.values[selected]
    return RegionFeature(vector=cells.mean(axis=0), support=int(selected.sum()), frames_used=[])


def extract_multi_view(
    frame_grids: dict[int, TokenGrid],
    prompt: RegionPrompt,
    patch_size: int = PATCH_SIZE,
    threshold: float = POOL_THRESHOLD,
) -> RegionFeature:
    """Pool one region feature across frames, treating each frame as a tile.

    The mean is cell-count weighted over the union of selected cells in
    every frame, so a frame seeing more of the region contributes more
    cells, and frame order cannot change the result.
    """
    if prompt.kind != "mask2d":
        raise ValidationError(f"extract_multi_view needs a resolved mask2d prompt, got '{prompt.kind}'")
    total = None
    count = 0
    frames_used: list[int] = []
    best_coverage = 0.0
    for index in sorted(prompt.per_frame_masks):
        mask = prompt.per_frame_masks[index]
        if not mask.any():
            continue
        if index not in frame_grids:
            raise ValidationError(f"no token grid supplied for frame {index}")
        grid = frame_grids[index]
        coverage = mask_token_coverage(mask, grid.values.shape[:2], patch_size)
        best_coverage = max(best_coverage, float(coverage.max()))
        selected = coverage > threshold
        n = int(selected.sum())
        if n == 0:
            continue
        cells = grid.values[selected]
        total = cells.sum(axis=0) if total is None else total + cells.sum(axis=0)
        count += n
        frames_used.append(index)
    if count == 0:
        raise EmptyRegionError(
            f"region selects no token cells in any frame at coverage > {threshold} "
            f"(max coverage {best_coverage:.4f})"
        )
    return RegionFeature(vector=total / count, support=count, frames_used=frames_used)


def mask_to_box(mask: np.ndarray) -> np.ndarray:
    """Replace a mask with the filled tight bounding rectangle of its pixels."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyRegionError("cannot take the bounding box of an empty mask")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    out = np.zeros_like(mask)
    out[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1] = True
    return out


def rect_mask(shape: tuple[int, int], rect: tuple[float, float, float, float]) -> np.ndarray:
    """Filled mask for an inclusive pixel rectangle [x0, y0, x1, y1]."""
    h, w = shape
    x0, y0, x1, y1 = rect
    if x1 < x0 or y1 < y0:
        raise ValidationError(f"degenerate rectangle {rect}")
    mask = np.zeros((h, w), dtype=bool)
    c0 = max(int(np.floor(x0)), 0)
    r0 = max(int(np.floor(y0)), 0)
    c1 = min(int(np.floor(x1)), w - 1)
    r1 = min(int(np.floor(y1)), h - 1)
    if c0 <= c1 and r0 <= r1:
        mask[r0 : r1 + 1, c0 : c1 + 1] = True
    return mask


def drop_frames(prompt: RegionPrompt, keep_probability: float, seed: int) -> RegionPrompt:
    """Randomly drop per-frame masks to simulate sparser annotations.

    Each nonempty frame mask survives independently with
    ``keep_probability``; if the draw would drop everything, the frame
    with the largest mask area is retained (ties: lowest frame index).
    Deterministic for a given (prompt, seed).
    """
    if not 0.0 < keep_probability <= 1.0:
        raise ValueError(f"keep_probability must be in (0, 1], got {keep_probability}")
    nonempty = prompt.nonempty_frames()
    if not nonempty:
        raise ValidationError("prompt has no nonempty frame masks to drop from")
    rng = np.random.default_rng(seed)
    kept = [i for i in nonempty if rng.random() < keep_probability]
    if not kept:
        areas = {i: int(prompt.per_frame_masks[i].sum()) for i in nonempty}
        kept = [max(nonempty, key=lambda i: (areas[i], -i))]
    return RegionPrompt(
        kind=prompt.kind,
        id=prompt.id,
        per_frame_masks={i: prompt.per_frame_masks[i].copy() for i in kept},
        rects=dict(prompt.rects),
        box=prompt.box,
    )


def resolve_prompt(prompt: RegionPrompt, scene: Scene, frames: list[Frame]) -> RegionPrompt:
    """Resolve any prompt kind to per-frame 2D masks.

    box3d prompts are projected into each of the given frames; box2d
    rectangles become filled masks at their frame's raster size; mask2d
    prompts pass through. A 3D box that projects to an empty mask in
    every frame raises ``EmptyRegionError``.
    """
    if prompt.kind == "mask2d":
        return prompt
    if prompt.kind == "box2d":
        masks = {}
        for index, rect in prompt.rects.items():
            frame = scene.frame_by_index(index)
            masks[index] = rect_mask((frame.intrinsics.height, frame.intrinsics.width), rect)
        if not any(m.any() for m in masks.values()):
            raise EmptyRegionError(f"prompt {prompt.id}: no rectangle covers any pixel")
        return RegionPrompt(kind="mask2d", id=prompt.id, per_frame_masks=masks)
    # box3d
    assert prompt.box is not None
    masks = {}
    for frame in frames:
        mask = project_box(prompt.box, frame)
        if mask.any():
            masks[frame.index] = mask
    if not masks:
        raise EmptyRegionError(
            f"prompt {prompt.id}: box {prompt.box.id} projects into none of the "
            f"{len(frames)} frames"
        )
    return RegionPrompt(kind="mask2d", id=prompt.id, per_frame_masks=masks)


def load_prompt(path: str | Path) -> RegionPrompt:
    """Load a prompt JSON; mask P3DR paths resolve relative to the file."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"prompt file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"prompt is not valid JSON: {exc}") from exc
    kind = doc.get("kind")
    if kind not in PROMPT_KINDS:
        raise ValidationError(f"prompt kind must be one of {PROMPT_KINDS}, got {kind!r}")
    prompt_id = int(doc.get("id", 0))
    if kind == "mask2d":
        masks = {}
        for key, rel in doc.get("masks", {}).items():
            masks[int(key)] = p3dr.read_plane(path.parent / rel) > 0.5
        return RegionPrompt(kind="mask2d", id=prompt_id, per_frame_masks=masks)
    if kind == "box2d":
        rects = {}
        for key, rect in doc.get("rects", {}).items():
            if len(rect) != 4:
                raise ValidationError(f"rect for frame {key} must be [x0, y0, x1, y1]")
            rects[int(key)] = tuple(float(v) for v in rect)
        return RegionPrompt(kind="box2d", id=prompt_id, rects=rects)
    box_doc = doc.get("box")
    if box_doc is None:
        raise ValidationError("box3d prompt requires a 'box' object")
    box = OrientedBox3D(
        center=np.asarray(box_doc["center"], dtype=np.float64),
        size=np.asarray(box_doc["size"], dtype=np.float64),
        yaw=float(box_doc.get("yaw", 0.0)),
        label=str(box_doc.get("label", "region")),
        id=int(box_doc.get("id", prompt_id)),
    )
    return RegionPrompt(kind="box3d", id=prompt_id, box=box)


def save_prompt(prompt: RegionPrompt, path: str | Path) -> Path:
    """Write a prompt JSON (and mask rasters for mask2d prompts)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc: dict = {"kind": prompt.kind, "id": prompt.id}
    if prompt.kind == "mask2d":
        masks = {}
        for index, mask in sorted(prompt.per_frame_masks.items()):
            rel = f"{path.stem}_mask_{index:05d}.p3dr"
            p3dr.write_raster(path.parent / rel, mask.astype(np.float32))
            masks[str(index)] = rel
        doc["masks"] = masks
    elif prompt.kind == "box2d":
        doc["rects"] = {str(i): list(r) for i, r in sorted(prompt.rects.items())}
    else:
        assert prompt.box is not None
        doc["box"] = {
            "id": prompt.box.id,
            "label": prompt.box.label,
            "center": [float(v) for v in prompt.box.center],
            "size": [float(v) for v in prompt.box.size],
            "yaw": float(prompt.box.yaw),
        }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
