"""Scene-level domain types and the on-disk manifest.

A scene is an ordered set of posed RGB-D frames plus metric oriented 3D
boxes. The manifest is a single JSON document per scene; rasters live in
sidecar files (8-bit PNG images, P3DR float32 depth). Poses are
camera-to-world and the manifest must say so explicitly
(``"pose_convention": "camera_to_world"``); the loader rejects anything
else rather than guessing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import p3dr
from .errors import ValidationError

POSE_CONVENTION = "camera_to_world"

ORTHONORMAL_TOL = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels for a width x height raster."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"raster size must be >= 1, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} raster"
            )


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform: x_world = rotation @ x_cam + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if rot.shape != (3, 3) or t.shape != (3,):
            raise ValidationError(f"pose needs a 3x3 rotation and 3-vector, got {rot.shape}, {t.shape}")
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > ORTHONORMAL_TOL:
            raise ValidationError(f"rotation is not orthonormal (max |R'R - I| = {err:.3g})")
        det = np.linalg.det(rot)
        if abs(det - 1.0) > ORTHONORMAL_TOL:
            raise ValidationError(f"rotation determinant is {det:.6f}, expected +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)


@dataclass(frozen=True)
class DepthMap:
    """Metric depth along the optical axis plus a per-pixel validity raster.

    A pixel is valid iff its depth is finite and strictly positive; holes
    (sensor dropouts, max-range cutoffs) are simply invalid.
    """

    values: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        validity = np.asarray(self.validity, dtype=bool)
        if values.ndim != 2 or validity.shape != values.shape:
            raise ValidationError(
                f"depth values/validity must be matching 2-D rasters, got {values.shape}, {validity.shape}"
            )
        valid = values[validity]
        if valid.size and not (np.isfinite(valid).all() and (valid > 0).all()):
            raise ValidationError("valid depth values must be finite and > 0")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "validity", validity)

    @classmethod
    def from_values(cls, values: np.ndarray) -> "DepthMap":
        values = np.asarray(values, dtype=np.float32)
        validity = np.isfinite(values) & (values > 0)
        return cls(values=values, validity=validity)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class Frame:
    """One posed RGB-D observation."""

    image: np.ndarray
    depth: DepthMap
    intrinsics: CameraIntrinsics
    pose: Pose
    index: int
    timestamp: float | None = None

    def __post_init__(self):
        img = np.asarray(self.image)
        if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
            raise ValidationError(f"image must be HxWx3 uint8, got {img.shape} {img.dtype}")
        expect = (self.intrinsics.height, self.intrinsics.width)
        if img.shape[:2] != expect:
            raise ValidationError(
                f"frame {self.index}: image raster {img.shape[:2]} != intrinsics raster {expect}"
            )
        if self.depth.shape != expect:
            raise ValidationError(
                f"frame {self.index}: depth raster {self.depth.shape} != intrinsics raster {expect}"
            )
        if self.index < 0:
            raise ValidationError(f"frame index must be nonnegative, got {self.index}")
        object.__setattr__(self, "image", img)


@dataclass(frozen=True)
class OrientedBox3D:
    """Gravity-aligned oriented box: axis sizes are true extents, yaw about +z."""

    center: np.ndarray
    size: np.ndarray
    yaw: float
    label: str
    id: int

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        size = np.asarray(self.size, dtype=np.float64)
        if center.shape != (3,) or size.shape != (3,):
            raise ValidationError(f"box {self.id}: center/size must be 3-vectors")
        if not (size > 0).all():
            raise ValidationError(f"box {self.id}: all size components must be > 0, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)


@dataclass
class Scene:
    """Ordered frames, metric boxes, and an optional canonicalization record."""

    frames: list[Frame]
    boxes: list[OrientedBox3D] = field(default_factory=list)
    canonicalization: "object | None" = None  # geometry.CanonicalTransform
    name: str = "scene"

    def __post_init__(self):
        if not self.frames:
            raise ValidationError("a scene needs at least one frame")
        indices = [f.index for f in self.frames]
        if len(set(indices)) != len(indices):
            raise ValidationError("frame indices must be unique within a scene")
        ids = [b.id for b in self.boxes]
        if len(set(ids)) != len(ids):
            raise ValidationError("box ids must be unique within a scene")
        self.frames = sorted(self.frames, key=lambda f: f.index)

    def frame_by_index(self, index: int) -> Frame:
        for f in self.frames:
            if f.index == index:
                return f
        raise KeyError(f"no frame with index {index}")

    def box_by_id(self, box_id: int) -> OrientedBox3D:
        for b in self.boxes:
            if b.id == box_id:
                return b
        raise KeyError(f"no box with id {box_id}")


def sample_frames(scene: Scene, k: int) -> list[Frame]:
    """Uniformly sample up to k frames, deterministically.

    With N >= k the i-th sampled frame is the one at position
    floor(i*N/k); with N < k every frame is returned once, in order.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = len(scene.frames)
    if n <= k:
        return list(scene.frames)
    return [scene.frames[(i * n) // k] for i in range(k)]


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ValidationError(f"{where}: missing required key '{key}'")
    return mapping[key]


def _load_image(path: Path) -> np.ndarray:
    if not path.is_file():
        raise ValidationError(f"image file not found: {path}")
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def load_scene(manifest_path: str | Path) -> Scene:
    """Load and validate a scene from its manifest.

    Raster paths in the manifest are resolved relative to the manifest's
    directory. Shape mismatches and non-orthonormal poses are rejected,
    never repaired.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ValidationError(f"manifest not found: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest is not valid JSON: {exc}") from exc
    root = manifest_path.parent

    convention = _require(doc, "pose_convention", "manifest")
    if convention != POSE_CONVENTION:
        raise ValidationError(
            f"manifest declares pose convention '{convention}'; only '{POSE_CONVENTION}' is supported"
        )

    frames = []
    for entry in _require(doc, "frames", "manifest"):
        index = int(_require(entry, "index", "frame"))
        where = f"frame {index}"
        intr = _require(entry, "intrinsics", where)
        intrinsics = CameraIntrinsics(
            fx=float(_require(intr, "fx", where)),
            fy=float(_require(intr, "fy", where)),
            cx=float(_require(intr, "cx", where)),
            cy=float(_require(intr, "cy", where)),
            width=int(_require(intr, "width", where)),
            height=int(_require(intr, "height", where)),
        )
        pose_doc = _require(entry, "pose", where)
        rotation = np.asarray(_require(pose_doc, "rotation", where), dtype=np.float64)
        if rotation.shape != (9,):
            raise ValidationError(f"{where}: pose rotation must be 9 row-major floats")
        pose = Pose(
            rotation=rotation.reshape(3, 3),
            translation=np.asarray(_require(pose_doc, "translation", where), dtype=np.float64),
        )
        depth_values = p3dr.read_plane(root / _require(entry, "depth", where))
        image = _load_image(root / _require(entry, "image", where))
        frames.append(
            Frame(
                image=image,
                depth=DepthMap.from_values(depth_values),
                intrinsics=intrinsics,
                pose=pose,
                index=index,
                timestamp=float(entry["timestamp"]) if "timestamp" in entry else None,
            )
        )

    boxes = []
    for entry in doc.get("boxes", []):
        boxes.append(
            OrientedBox3D(
                center=np.asarray(_require(entry, "center", "box"), dtype=np.float64),
                size=np.asarray(_require(entry, "size", "box"), dtype=np.float64),
                yaw=float(_require(entry, "yaw", "box")),
                label=str(_require(entry, "label", "box")),
                id=int(_require(entry, "id", "box")),
            )
        )

    canonicalization = None
    if doc.get("canonicalization") is not None:
        from .geometry import CanonicalTransform

        canonicalization = CanonicalTransform.from_dict(doc["canonicalization"])

    return Scene(
        frames=frames,
        boxes=boxes,
        canonicalization=canonicalization,
        name=str(doc.get("name", manifest_path.stem)),
    )


def save_scene(scene: Scene, out_dir: str | Path) -> Path:
    """Serialize a scene (manifest + rasters) into a directory.

    Returns the manifest path. Loading the result back yields
    bit-identical rasters and field-identical metadata.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame_docs = []
    for frame in scene.frames:
        image_rel = f"frame_{frame.index:05d}.png"
        depth_rel = f"frame_{frame.index:05d}_depth.p3dr"
        Image.fromarray(frame.image).save(out_dir / image_rel)
        # invalid pixels are written as 0 so validity round-trips exactly
        depth = np.where(frame.depth.validity, frame.depth.values, np.float32(0.0))
        p3dr.write_raster(out_dir / depth_rel, depth)
        entry = {
            "index": frame.index,
            "image": image_rel,
            "depth": depth_rel,
            "intrinsics": {
                "fx": frame.intrinsics.fx,
                "fy": frame.intrinsics.fy,
                "cx": frame.intrinsics.cx,
                "cy": frame.intrinsics.cy,
                "width": frame.intrinsics.width,
                "height": frame.intrinsics.height,
            },
            "pose": {
                "rotation": [float(v) for v in frame.pose.rotation.reshape(-1)],
                "translation": [float(v) for v in frame.pose.translation],
            },
        }
        if frame.timestamp is not None:
            entry["timestamp"] = frame.timestamp
        frame_docs.append(entry)

    doc = {
        "name": scene.name,
        "pose_convention": POSE_CONVENTION,
        "frames": frame_docs,
        "boxes": [
            {
                "id": box.id,
                "label": box.label,
                "center": [float(v) for v in box.center],
                "size": [float(v) for v in box.size],
                "yaw": float(box.yaw),
            }
            for box in scene.boxes
        ],
    }
    if scene.canonicalization is not None:
        doc["canonicalization"] = scene.canonicalization.to_dict()

    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return manifest_path


def scene_summary(scene: Scene) -> dict:
    """JSON-friendly summary of a loaded scene (used by the CLI)."""
    return {
        "name": scene.name,
        "frame_count": len(scene.frames),
        "frames": [
            {
                "index": f.index,
                "width": f.intrinsics.width,
                "height": f.intrinsics.height,
                "valid_depth_fraction": float(f.depth.validity.mean()),
            }
            for f in scene.frames
        ],
        "boxes": [
            {
                "id": b.id,
                "label": b.label,
                "center": [float(v) for v in b.center],
                "size": [float(v) for v in b.size],
                "yaw": float(b.yaw),
            }
            for b in scene.boxes
        ],
        "canonicalization": scene.canonicalization.to_dict() if scene.canonicalization else None,
    }


def _json_compact(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def manifest_content_hash(manifest_path: str | Path) -> str:
    """Content hash of a manifest plus every raster it references.

    Used as the scene part of cache keys; any byte change in the scene's
    inputs changes the hash.
    """
    import hashlib

    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    root = manifest_path.parent
    h = hashlib.sha256()
    h.update(_json_compact(doc).encode())
    for entry in doc.get("frames", []):
        for key in ("image", "depth"):
            if key in entry:
                fp = root / entry[key]
                if fp.is_file():
                    h.update(fp.read_bytes())
    return h.hexdigest()[:16]
