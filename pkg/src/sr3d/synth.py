"""Deterministic synthetic scenes for demos, tests, and golden fixtures.

Cameras sit on a ring looking at the scene center; depth is a smooth
positive field with optional rectangular holes; boxes are scattered near
the origin with varied sizes so comparative QA has usable gaps.
"""

from __future__ import annotations

import numpy as np

from .scene import CameraIntrinsics, DepthMap, Frame, OrientedBox3D, Pose, Scene

_LABELS = ("chair", "table", "lamp", "shelf", "plant", "monitor", "sofa", "crate")


def look_at_pose(eye: np.ndarray, target: np.ndarray) -> Pose:
    """Camera-to-world pose for a camera at ``eye`` looking at ``target``.

    Camera axes follow the usual raster convention: x right, y down,
    z forward; the world's +z is up.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise ValueError("camera cannot look straight along the gravity axis")
    right = right / norm
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward], axis=1)
    return Pose(rotation=rotation, translation=eye)


def make_scene(
    seed: int = 0,
    n_frames: int = 4,
    n_boxes: int = 5,
    width: int = 96,
    height: int = 72,
    with_holes: bool = True,
    name: str | None = None,
) -> Scene:
    """Build a deterministic synthetic multi-view RGB-D scene."""
    rng = np.random.default_rng(seed)
    intrinsics = CameraIntrinsics(
        fx=0.9 * width,
        fy=0.9 * width,
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
    )

    frames = []
    cols = np.arange(width) / width
    rows = np.arange(height) / height
    for i in range(n_frames):
        angle = 2.0 * np.pi * i / max(n_frames, 1) + float(rng.uniform(-0.1, 0.1))
        radius = float(rng.uniform(3.2, 4.0))
        eye = np.array([radius * np.cos(angle), radius * np.sin(angle), 1.6 + float(rng.uniform(-0.2, 0.2))])
        pose = look_at_pose(eye, np.array([0.0, 0.0, 0.7]))

        phase = float(rng.uniform(0, 2 * np.pi))
        depth = 2.5 + 0.8 * np.sin(2 * np.pi * cols[None, :] + phase) * np.cos(np.pi * rows[:, None])
        depth = np.maximum(depth, 0.3).astype(np.float32)
        validity = np.ones((height, width), dtype=bool)
        if with_holes and rng.random() < 0.5:
            r0 = int(rng.integers(0, height // 2))
            c0 = int(rng.integers(0, width // 2))
            validity[r0 : r0 + height // 4, c0 : c0 + width // 4] = False
            depth = np.where(validity, depth, np.float32(0.0))

        shade = (cols[None, :] * 200 + rows[:, None] * 40).astype(np.uint8)
        image = np.stack(
            [shade, np.roll(shade, i + 1, axis=1), rng.integers(0, 255, (height, width), dtype=np.uint8)],
            axis=-1,
        )
        frames.append(
            Frame(
                image=image,
                depth=DepthMap(values=depth, validity=validity),
                intrinsics=intrinsics,
                pose=pose,
                index=i,
            )
        )

    boxes = []
    for b in range(n_boxes):
        size = rng.uniform(0.25, 1.3, size=3)
        center = np.array(
            [float(rng.uniform(-1.5, 1.5)), float(rng.uniform(-1.5, 1.5)), float(size[2] / 2 + rng.uniform(0.0, 0.8))]
        )
        boxes.append(
            OrientedBox3D(
                center=center,
                size=size,
                yaw=float(rng.uniform(-np.pi, np.pi)),
                label=_LABELS[b % len(_LABELS)],
                id=b + 1,
            )
        )

    return Scene(frames=frames, boxes=boxes, name=name or f"synthetic-{seed}")
