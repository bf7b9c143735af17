"""End-to-end orchestration: scene -> canonical point maps -> token grids ->
region features, with content-addressed caching.

Cache entries live at ``<cache_root>/<scene-hash>/<config-hash>/`` where
both hashes cover the full serialized inputs (rasters included), so a hit
is only possible for byte-identical inputs. Everything cached goes through
float32 (the on-disk precision), which keeps cold and warm runs
bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import p3dr
from .errors import EmptyRegionError, ValidationError
from .geometry import (
    CanonicalTransform,
    PointMap,
    back_project,
    canonicalize,
    fit_canonicalization,
    resize_point_map,
    to_world,
)
from .pos_embed import PointwiseMlp, SinusoidConfig, TokenGrid, embed_grid, fuse
from .region import RegionFeature, RegionPrompt, extract_multi_view, resolve_prompt
from .scene import Frame, Scene, sample_frames
from .tiling import resize_raster

CACHE_SCHEMA = "sr3d-cache/1"

CACHE_ENV_VAR = "SR3D_CACHE_DIR"


@dataclass(frozen=True)
class PipelineConfig:
    """All knobs for the geometric pipeline, hashable for caching."""

    tile_size: int = 448
    patch_size: int = 14
    max_tiles: int = 12
    frame_count: int = 32
    token_dim: int = 64
    sinusoid: SinusoidConfig = field(default_factory=SinusoidConfig)
    pool_threshold: float = 0.5
    success_delta: float = 1.25
    tie_gap: float = 1.15
    seed: int = 0

    def __post_init__(self):
        if self.tile_size % self.patch_size != 0:
            raise ValidationError(
                f"tile_size {self.tile_size} must be divisible by patch_size {self.patch_size}"
            )
        if self.frame_count < 1:
            raise ValidationError(f"frame_count must be >= 1, got {self.frame_count}")
        if self.max_tiles < 1:
            raise ValidationError(f"max_tiles must be >= 1, got {self.max_tiles}")
        if self.token_dim < 1:
            raise ValidationError(f"token_dim must be >= 1, got {self.token_dim}")

    def to_dict(self) -> dict:
        return {
            "tile_size": self.tile_size,
            "patch_size": self.patch_size,
            "max_tiles": self.max_tiles,
            "frame_count": self.frame_count,
            "token_dim": self.token_dim,
            "sinusoid": self.sinusoid.to_dict(),
            "pool_threshold": self.pool_threshold,
            "success_delta": self.success_delta,
            "tie_gap": self.tie_gap,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        kwargs = dict(doc)
        if "sinusoid" in kwargs and kwargs["sinusoid"] is not None:
            kwargs["sinusoid"] = SinusoidConfig.from_dict(kwargs["sinusoid"])
        return cls(**kwargs)

    def make_mlp(self) -> PointwiseMlp:
        return PointwiseMlp.initialize(self.sinusoid.output_dim, self.token_dim, seed=self.seed)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from exc
    try:
        return PipelineConfig.from_dict(doc)
    except TypeError as exc:
        raise ValidationError(f"bad config field: {exc}") from exc


def scene_content_digest(scene: Scene) -> str:
    """Hash every raster and metadata field of an in-memory scene."""
    h = hashlib.sha256()
    h.update(scene.name.encode())
    for frame in scene.frames:
        meta = {
            "index": frame.index,
            "intrinsics": [
                frame.intrinsics.fx,
                frame.intrinsics.fy,
                frame.intrinsics.cx,
                frame.intrinsics.cy,
                frame.intrinsics.width,
                frame.intrinsics.height,
            ],
            "rotation": frame.pose.rotation.reshape(-1).tolist(),
            "translation": frame.pose.translation.tolist(),
            "timestamp": frame.timestamp,
        }
        h.update(json.dumps(meta, sort_keys=True).encode())
        h.update(frame.image.tobytes())
        h.update(frame.depth.values.astype("<f4").tobytes())
        h.update(np.packbits(frame.depth.validity).tobytes())
    for box in scene.boxes:
        meta = {
            "id": box.id,
            "label": box.label,
            "center": box.center.tolist(),
            "size": box.size.tolist(),
            "yaw": box.yaw,
        }
        h.update(json.dumps(meta, sort_keys=True).encode())
    return h.hexdigest()[:16]


def _pointmaps_digest(pointmaps: dict[int, PointMap] | None) -> str:
    if not pointmaps:
        return "gt-depth"
    h = hashlib.sha256()
    for index in sorted(pointmaps):
        pm = pointmaps[index]
        h.update(str(index).encode())
        h.update(pm.positions.astype("<f4").tobytes())
        h.update(np.packbits(pm.validity).tobytes())
    return h.hexdigest()[:16]


@dataclass
class SceneRepresentation:
    """Per-frame canonical point maps plus position token grids."""

    frame_indices: list[int]
    canonical_maps: dict[int, PointMap]
    position_grids: dict[int, TokenGrid]
    transform: CanonicalTransform
    from_cache: bool = False
    cache_path: Path | None = None


def _f32(values: np.ndarray) -> np.ndarray:
    # round through the on-disk precision so cached and fresh runs agree
    return values.astype(np.float32).astype(np.float64)


def _map(fn, xs, threads: int):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, xs))
    return [fn(x) for x in xs]


def build_scene_representation(
    scene: Scene,
    cfg: PipelineConfig,
    external_pointmaps: dict[int, PointMap] | None = None,
    cache_dir: str | Path | None = None,
    threads: int = 1,
) -> SceneRepresentation:
    """Compute (or load from cache) the canonical representation of a scene.

    With ``external_pointmaps`` (world space, keyed by frame index) the
    ground-truth depth path is bypassed entirely: the supplied maps feed
    canonicalization directly, which is how estimated point maps from
    off-the-shelf reconstruction models slot in.
    """
    frames = sample_frames(scene, cfg.frame_count)

    cache_path = None
    if cache_dir is not None:
        key = f"{scene_content_digest(scene)}"
        run_key = hashlib.sha256(
            (cfg.content_hash() + _pointmaps_digest(external_pointmaps)).encode()
        ).hexdigest()[:16]
        cache_path = Path(cache_dir) / key / run_key
        if (cache_path / "meta.json").is_file():
            rep = _load_representation(cache_path)
            rep.from_cache = True
            return rep

    if external_pointmaps is not None:
        missing = [f.index for f in frames if f.index not in external_pointmaps]
        if missing:
            raise ValidationError(f"external point maps missing for frames {missing}")
        world_maps = {}
        for frame in frames:
            pm = external_pointmaps[frame.index]
            if pm.space != "world":
                raise ValidationError(
                    f"external point map for frame {frame.index} is in '{pm.space}' space, "
                    "expected 'world'"
                )
            expect = (frame.intrinsics.height, frame.intrinsics.width)
            if pm.shape != expect:
                raise ValidationError(
                    f"external point map for frame {frame.index} has shape {pm.shape}, "
                    f"frame raster is {expect}"
                )
            world_maps[frame.index] = pm
    else:

        def lift(frame: Frame) -> PointMap:
            return to_world(back_project(frame.depth, frame.intrinsics), frame.pose)

        world_maps = dict(zip([f.index for f in frames], _map(lift, frames, threads)))

    transform = fit_canonicalization([world_maps[f.index] for f in frames])

    mlp = cfg.make_mlp()

    def finish(frame: Frame) -> tuple[PointMap, TokenGrid]:
        canonical = canonicalize(world_maps[frame.index], transform)
        canonical = PointMap(
            positions=_f32(canonical.positions), space="canonical", validity=canonical.validity
        )
        sized = resize_point_map(canonical, cfg.tile_size, cfg.tile_size)
        grid = embed_grid(sized, cfg.sinusoid, mlp, cfg.patch_size)
        grid = TokenGrid(values=_f32(grid.values), provenance="position")
        return canonical, grid

    results = _map(finish, frames, threads)
    canonical_maps = {f.index: r[0] for f, r in zip(frames, results)}
    position_grids = {f.index: r[1] for f, r in zip(frames, results)}

    rep = SceneRepresentation(
        frame_indices=[f.index for f in frames],
        canonical_maps=canonical_maps,
        position_grids=position_grids,
        transform=transform,
    )
    if cache_path is not None:
        _store_representation(rep, cache_path)
        rep.cache_path = cache_path
    return rep


def write_representation(rep: SceneRepresentation, out_dir: str | Path) -> None:
    """Write canonical maps, validity, position grids, and the transform."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for index in rep.frame_indices:
        pm = rep.canonical_maps[index]
        p3dr.write_raster(out_dir / f"canonical_{index:05d}.p3dr", pm.positions)
        p3dr.write_raster(out_dir / f"validity_{index:05d}.p3dr", pm.validity.astype(np.float32))
        p3dr.write_raster(out_dir / f"posgrid_{index:05d}.p3dr", rep.position_grids[index].values)
    (out_dir / "transform.json").write_text(
        json.dumps(rep.transform.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    meta = {"schema": CACHE_SCHEMA, "frame_indices": rep.frame_indices}
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _store_representation(rep: SceneRepresentation, cache_path: Path) -> None:
    cache_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = cache_path.parent / f".tmp-{uuid.uuid4().hex}"
    write_representation(rep, tmp)
    try:
        os.rename(tmp, cache_path)
    except OSError:
        # another process finished first; its entry is equivalent
        shutil.rmtree(tmp, ignore_errors=True)


def _load_representation(cache_path: Path) -> SceneRepresentation:
    meta = json.loads((cache_path / "meta.json").read_text())
    if meta.get("schema") != CACHE_SCHEMA:
        raise ValidationError(f"unexpected cache schema in {cache_path}")
    transform = CanonicalTransform.from_dict(json.loads((cache_path / "transform.json").read_text()))
    canonical_maps = {}
    position_grids = {}
    for index in meta["frame_indices"]:
        positions = p3dr.read_raster(cache_path / f"canonical_{index:05d}.p3dr").astype(np.float64)
        validity = p3dr.read_plane(cache_path / f"validity_{index:05d}.p3dr") > 0.5
        positions[~validity] = 0.0
        canonical_maps[index] = PointMap(positions=positions, space="canonical", validity=validity)
        grid = p3dr.read_raster(cache_path / f"posgrid_{index:05d}.p3dr").astype(np.float64)
        position_grids[index] = TokenGrid(values=grid, provenance="position")
    return SceneRepresentation(
        frame_indices=list(meta["frame_indices"]),
        canonical_maps=canonical_maps,
        position_grids=position_grids,
        transform=transform,
        cache_path=cache_path,
    )


def load_external_pointmaps(directory: str | Path, frames: list[Frame]) -> dict[int, PointMap]:
    """Read per-frame world point maps from ``pointmap_<index>.p3dr`` files.

    An optional ``pointmap_<index>_validity.p3dr`` raster marks holes;
    otherwise every finite pixel is valid.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"point map directory not found: {directory}")
    maps = {}
    for frame in frames:
        raster_path = directory / f"pointmap_{frame.index:05d}.p3dr"
        if not raster_path.is_file():
            raise ValidationError(f"missing point map for frame {frame.index}: {raster_path}")
        positions = p3dr.read_raster(raster_path).astype(np.float64)
        if positions.shape[2] != 3:
            raise ValidationError(f"{raster_path}: expected 3 channels, got {positions.shape[2]}")
        validity_path = directory / f"pointmap_{frame.index:05d}_validity.p3dr"
        if validity_path.is_file():
            validity = p3dr.read_plane(validity_path) > 0.5
        else:
            validity = np.isfinite(positions).all(axis=2)
        positions[~validity] = 0.0
        maps[frame.index] = PointMap(positions=positions, space="world", validity=validity)
    return maps


def pseudo_vision_grid(
    image: np.ndarray,
    token_dim: int,
    seed: int,
    tile_size: int = 448,
    patch_size: int = 14,
) -> TokenGrid:
    """Deterministic stand-in for vision-encoder tokens.

    Each cell's vector is drawn from a generator seeded by a hash of that
    patch's pixel content plus the pipeline seed. The values carry no
    semantics; they exist so pooling and fusion are testable without any
    neural backbone.
    """
    resized = resize_raster(np.asarray(image, dtype=np.float64), tile_size, tile_size, "bilinear")
    grid_n = tile_size // patch_size
    values = np.empty((grid_n, grid_n, token_dim), dtype=np.float64)
    seed_bytes = int(seed).to_bytes(8, "little", signed=True)
    for r in range(grid_n):
        for c in range(grid_n):
            patch = resized[r * patch_size : (r + 1) * patch_size, c * patch_size : (c + 1) * patch_size]
            digest = hashlib.blake2b(
                patch.astype("<f8").tobytes() + seed_bytes, digest_size=8
            ).digest()
            cell_rng = np.random.default_rng(int.from_bytes(digest, "little"))
            values[r, c] = cell_rng.standard_normal(token_dim)
    return TokenGrid(values=_f32(values), provenance="vision")


@dataclass
class AnswerBundle:
    """Everything an external consumer needs to answer one region query."""

    fused_grids: dict[int, TokenGrid]
    region_feature: RegionFeature
    transform: CanonicalTransform
    frame_indices: list[int]


def answer_context(
    scene: Scene,
    cfg: PipelineConfig,
    prompt: RegionPrompt,
    vision_grids: dict[int, TokenGrid] | None = None,
    external_pointmaps: dict[int, PointMap] | None = None,
    cache_dir: str | Path | None = None,
    threads: int = 1,
) -> AnswerBundle:
    """Resolve a prompt against a scene and pool its region feature.

    When vision grids are not supplied, deterministic pseudo-features
    stand in so the geometric pipeline works standalone.
    """
    rep = build_scene_representation(
        scene, cfg, external_pointmaps=external_pointmaps, cache_dir=cache_dir, threads=threads
    )
    sampled = [scene.frame_by_index(i) for i in rep.frame_indices]
    resolved = resolve_prompt(prompt, scene, sampled)

    sampled_set = set(rep.frame_indices)
    referenced = resolved.nonempty_frames()
    usable = {i: m for i, m in resolved.per_frame_masks.items() if i in sampled_set}
    if referenced and not any(m.any() for m in usable.values()):
        excluded = [i for i in referenced if i not in sampled_set]
        raise EmptyRegionError(
            f"prompt {prompt.id}: frames {excluded} carry the region but are not in the "
            f"sampled frame set {sorted(sampled_set)}"
        )
    resolved = RegionPrompt(kind="mask2d", id=resolved.id, per_frame_masks=usable)

    if vision_grids is None:
        def vision_for(index: int) -> TokenGrid:
            frame = scene.frame_by_index(index)
            return pseudo_vision_grid(
                frame.image, cfg.token_dim, cfg.seed, cfg.tile_size, cfg.patch_size
            )

        vision_grids = {i: v for i, v in zip(rep.frame_indices, _map(vision_for, rep.frame_indices, threads))}
    else:
        missing = [i for i in rep.frame_indices if i not in vision_grids]
        if missing:
            raise ValidationError(f"vision grids missing for frames {missing}")

    fused = {i: fuse(vision_grids[i], rep.position_grids[i]) for i in rep.frame_indices}
    feature = extract_multi_view(fused, resolved, cfg.patch_size, cfg.pool_threshold)
    return AnswerBundle(
        fused_grids=fused,
        region_feature=feature,
        transform=rep.transform,
        frame_indices=rep.frame_indices,
    )


def default_cache_dir(explicit: str | None = None) -> Path | None:
    """Resolve the cache root: explicit flag beats the environment variable."""
    if explicit:
        return Path(explicit)
    env = os.environ.get(CACHE_ENV_VAR)
    return Path(env) if env else None
