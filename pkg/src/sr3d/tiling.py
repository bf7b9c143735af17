"""Dynamic tiling: aspect-ratio selection, fixed-size tiling of rasters,
and stitching per-tile token grids back into one high-resolution grid.

Tiles are 448x448 and the vision patch size is 14, so every tile maps to a
32x32 token grid; a (cols, rows) plan stitches to (rows*32, cols*32).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

TILE_SIZE = 448
PATCH_SIZE = 14
MAX_TILES = 12


@dataclass(frozen=True)
class TilingPlan:
    """A chosen tile grid: ``cols`` x ``rows`` tiles of ``tile_size`` pixels."""

    cols: int
    rows: int
    tile_size: int = TILE_SIZE
    patch_size: int = PATCH_SIZE

    def __post_init__(self):
        if self.cols < 1 or self.rows < 1:
            raise ValidationError(f"tile grid must be >= 1x1, got {self.cols}x{self.rows}")
        if self.tile_size % self.patch_size != 0:
            raise ValidationError(
                f"tile size {self.tile_size} must be divisible by patch size {self.patch_size}"
            )

    @property
    def tile_count(self) -> int:
        return self.cols * self.rows

    @property
    def resize_to(self) -> tuple[int, int]:
        """(width, height) the source raster is resized to before splitting."""
        return (self.cols * self.tile_size, self.rows * self.tile_size)

    @property
    def tokens_per_tile(self) -> int:
        return self.tile_size // self.patch_size

    @property
    def stitched_grid(self) -> tuple[int, int]:
        """(token columns, token rows) of the stitched grid."""
        return (self.cols * self.tokens_per_tile, self.rows * self.tokens_per_tile)

    def to_dict(self) -> dict:
        return {
            "cols": self.cols,
            "rows": self.rows,
            "tile_size": self.tile_size,
            "patch_size": self.patch_size,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TilingPlan":
        return cls(
            cols=int(doc["cols"]),
            rows=int(doc["rows"]),
            tile_size=int(doc.get("tile_size", TILE_SIZE)),
            patch_size=int(doc.get("patch_size", PATCH_SIZE)),
        )


def select_ratio(width: int, height: int, max_tiles: int = MAX_TILES) -> TilingPlan:
    """Pick the tile grid whose aspect ratio is closest to the raster's.

    Candidates are every (cols, rows) with cols*rows <= max_tiles.
    Distortion is measured in log-aspect space so 2:1 and 1:2 are
    symmetric errors. Ties go to the candidate with fewer tiles, then to
    the wider grid, making the choice deterministic and keeping exact
    matches like 448x448 -> (1,1) and 1344x448 -> (3,1) at their minimal
    grids.
    """
    if width < 1 or height < 1:
        raise ValueError(f"raster size must be >= 1, got {width}x{height}")
    if max_tiles < 1:
        raise ValueError(f"max_tiles must be >= 1, got {max_tiles}")
    target = math.log(width / height)
    best = None
    best_key = None
    for cols in range(1, max_tiles + 1):
        for rows in range(1, max_tiles // cols + 1):
            err = abs(target - math.log(cols / rows))
            key = (err, cols * rows, -cols)
            if best_key is None or key < best_key:
                best, best_key = (cols, rows), key
    assert best is not None
    return TilingPlan(cols=best[0], rows=best[1])


def resize_raster(raster: np.ndarray, out_h: int, out_w: int, interpolation: str) -> np.ndarray:
    """Resize a (H, W) or (H, W, C) raster with pixel-center alignment.

    A same-shape call returns the input unchanged, which keeps
    already-sized rasters bit-exact. ``nearest`` preserves the value set
    (and dtype); ``bilinear`` computes in float64.
    """
    if interpolation not in ("bilinear", "nearest"):
        raise ValueError(f"unknown interpolation '{interpolation}'")
    arr = np.asarray(raster)
    if arr.ndim not in (2, 3):
        raise ValueError(f"raster must be 2-D or 3-D, got shape {arr.shape}")
    in_h, in_w = arr.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return arr

    if interpolation == "nearest":
        rows = np.minimum(((np.arange(out_h) + 0.5) * in_h / out_h).astype(np.int64), in_h - 1)
        cols = np.minimum(((np.arange(out_w) + 0.5) * in_w / out_w).astype(np.int64), in_w - 1)
        return arr[np.ix_(rows, cols)]

    values = arr.astype(np.float64)
    src_r = (np.arange(out_h) + 0.5) * in_h / out_h - 0.5
    src_c = (np.arange(out_w) + 0.5) * in_w / out_w - 0.5
    r0 = np.clip(np.floor(src_r).astype(np.int64), 0, in_h - 1)
    c0 = np.clip(np.floor(src_c).astype(np.int64), 0, in_w - 1)
    r1 = np.minimum(r0 + 1, in_h - 1)
    c1 = np.minimum(c0 + 1, in_w - 1)
    wr = np.clip(src_r - r0, 0.0, 1.0)
    wc = np.clip(src_c - c0, 0.0, 1.0)
    if values.ndim == 3:
        wr = wr[:, None, None]
        wc = wc[None, :, None]
    else:
        wr = wr[:, None]
        wc = wc[None, :]
    top = values[r0][:, c0] * (1 - wc) + values[r0][:, c1] * wc
    bottom = values[r1][:, c0] * (1 - wc) + values[r1][:, c1] * wc
    return top * (1 - wr) + bottom * wr


def tile(raster: np.ndarray, plan: TilingPlan, interpolation: str = "bilinear") -> list[np.ndarray]:
    """Resize a raster to the plan's target size and split it into tiles.

    Tiles come back in row-major order (left-to-right, top-to-bottom).
    Use ``nearest`` for masks so the value set is preserved.
    """
    arr = np.asarray(raster)
    if arr.size == 0:
        raise ValueError("cannot tile an empty raster")
    width, height = plan.resize_to
    resized = resize_raster(arr, height, width, interpolation)
    ts = plan.tile_size
    return [
        resized[r * ts : (r + 1) * ts, c * ts : (c + 1) * ts]
        for r in range(plan.rows)
        for c in range(plan.cols)
    ]


def stitch(tile_grids: list[np.ndarray], plan: TilingPlan) -> np.ndarray:
    """Reassemble per-tile token grids into one (rows*g, cols*g, D) grid.

    Grid i lands at tile cell (i // cols, i % cols), mirroring the
    row-major order produced by ``tile``.
    """
    if len(tile_grids) != plan.tile_count:
        raise ValueError(f"expected {plan.tile_count} tile grids, got {len(tile_grids)}")
    grids = [np.asarray(g) for g in tile_grids]
    shape = grids[0].shape
    if any(g.shape != shape for g in grids):
        raise ValueError("tile grids must have uniform shape")
    gh, gw = shape[:2]
    out_shape = (plan.rows * gh, plan.cols * gw) + shape[2:]
    out = np.empty(out_shape, dtype=grids[0].dtype)
    for i, grid in enumerate(grids):
        r, c = divmod(i, plan.cols)
        out[r * gh : (r + 1) * gh, c * gw : (c + 1) * gw] = grid
    return out


def split_grid(grid: np.ndarray, plan: TilingPlan) -> list[np.ndarray]:
    """Split a stitched token grid back into per-tile grids (stitch inverse)."""
    arr = np.asarray(grid)
    h, w = arr.shape[:2]
    if h % plan.rows != 0 or w % plan.cols != 0:
        raise ValueError(f"grid {h}x{w} does not divide into a {plan.cols}x{plan.rows} tile grid")
    gh, gw = h // plan.rows, w // plan.cols
    return [
        arr[r * gh : (r + 1) * gh, c * gw : (c + 1) * gw]
        for r in range(plan.rows)
        for c in range(plan.cols)
    ]


def downsample_to_tokens(raster: np.ndarray, patch_size: int = PATCH_SIZE) -> np.ndarray:
    """Average a pixel raster over non-overlapping patches.

    A (H, W[, C]) raster becomes (H/p, W/p[, C]); for boolean masks the
    result is the per-patch coverage in [0, 1].
    """
    arr = np.asarray(raster)
    h, w = arr.shape[:2]
    if h % patch_size != 0 or w % patch_size != 0:
        raise ValueError(f"raster {h}x{w} sides must be divisible by patch size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    values = arr.astype(np.float64)
    if values.ndim == 3:
        blocks = values.reshape(gh, patch_size, gw, patch_size, -1)
        return blocks.mean(axis=(1, 3))
    blocks = values.reshape(gh, patch_size, gw, patch_size)
    return blocks.mean(axis=(1, 3))
