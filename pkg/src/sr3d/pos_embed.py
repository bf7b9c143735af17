"""Sinusoidal 3D position features, the learnable pointwise map on top of
them, token-grid alignment, and fusion with vision tokens.

The sinusoid is a per-axis geometric frequency ladder: axis value p and
frequency w_k = base * growth^k contribute sin(w_k*p) and cos(w_k*p).
The pointwise map is a two-layer tanh MLP applied independently per
point; ``grad_check`` verifies its analytic gradients against central
finite differences so the "learnable" contract holds without dragging in
a training framework.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import p3dr
from .errors import ValidationError
from .geometry import PointMap
from .tiling import PATCH_SIZE

PROVENANCES = ("vision", "position", "fused")


@dataclass(frozen=True)
class SinusoidConfig:
    """Frequency ladder configuration; output_dim = 3 * channels_per_axis."""

    channels_per_axis: int = 32
    base_frequency: float = 1.0
    frequency_growth: float | None = None

    def __post_init__(self):
        if self.channels_per_axis <= 0 or self.channels_per_axis % 2 != 0:
            raise ValidationError(
                f"channels_per_axis must be even and positive, got {self.channels_per_axis}"
            )
        if self.base_frequency <= 0:
            raise ValidationError(f"base_frequency must be > 0, got {self.base_frequency}")
        growth = self.frequency_growth
        if growth is None:
            growth = 10000.0 ** (2.0 / self.channels_per_axis)
            object.__setattr__(self, "frequency_growth", growth)
        if growth <= 1.0:
            raise ValidationError(f"frequency_growth must be > 1, got {growth}")

    @property
    def output_dim(self) -> int:
        return 3 * self.channels_per_axis

    def frequencies(self) -> np.ndarray:
        k = np.arange(self.channels_per_axis // 2, dtype=np.float64)
        return self.base_frequency * np.asarray(self.frequency_growth, dtype=np.float64) ** k

    def to_dict(self) -> dict:
        return {
            "channels_per_axis": self.channels_per_axis,
            "base_frequency": self.base_frequency,
            "frequency_growth": self.frequency_growth,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SinusoidConfig":
        return cls(
            channels_per_axis=int(doc.get("channels_per_axis", 32)),
            base_frequency=float(doc.get("base_frequency", 1.0)),
            frequency_growth=(
                float(doc["frequency_growth"]) if doc.get("frequency_growth") is not None else None
            ),
        )


def sinusoid(positions: np.ndarray, cfg: SinusoidConfig) -> np.ndarray:
    """Encode (N, 3) positions as (N, 3 * channels_per_axis) features.

    Per axis the layout is [sin(w_0 p), cos(w_0 p), sin(w_1 p), ...];
    axes are concatenated x, y, z. Output is bounded in [-1, 1].
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ValueError(f"positions must be (N, 3), got {pos.shape}")
    if pos.size and not np.isfinite(pos).all():
        raise ValueError("positions must be finite")
    freqs = cfg.frequencies()
    angles = pos[:, :, None] * freqs[None, None, :]
    feats = np.empty((pos.shape[0], 3, 2 * freqs.size), dtype=np.float64)
    feats[:, :, 0::2] = np.sin(angles)
    feats[:, :, 1::2] = np.cos(angles)
    return feats.reshape(pos.shape[0], cfg.output_dim)


@dataclass(frozen=True)
class PointwiseMlp:
    """Two-layer tanh MLP applied independently to each point's features."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "tanh"
    seed: int | None = None

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        b2 = np.asarray(self.b2, dtype=np.float64)
        if w1.ndim != 2 or w2.ndim != 2:
            raise ValidationError("w1 and w2 must be matrices")
        if b1.shape != (w1.shape[0],) or b2.shape != (w2.shape[0],):
            raise ValidationError("bias shapes do not match weight matrices")
        if w2.shape[1] != w1.shape[0]:
            raise ValidationError(
                f"w2 expects {w2.shape[1]} hidden units but w1 produces {w1.shape[0]}"
            )
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            if not np.isfinite(arr).all():
                raise ValidationError(f"parameter {name} contains non-finite values")
        if self.activation != "tanh":
            raise ValidationError(f"unsupported activation '{self.activation}'")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def token_dim(self) -> int:
        return self.w2.shape[0]

    @classmethod
    def initialize(
        cls,
        input_dim: int,
        token_dim: int,
        hidden_dim: int | None = None,
        seed: int = 0,
    ) -> "PointwiseMlp":
        """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
        hidden_dim = token_dim if hidden_dim is None else hidden_dim
        rng = np.random.default_rng(seed)
        lim1 = 1.0 / np.sqrt(input_dim)
        lim2 = 1.0 / np.sqrt(hidden_dim)
        return cls(
            w1=rng.uniform(-lim1, lim1, size=(hidden_dim, input_dim)),
            b1=rng.uniform(-lim1, lim1, size=hidden_dim),
            w2=rng.uniform(-lim2, lim2, size=(token_dim, hidden_dim)),
            b2=rng.uniform(-lim2, lim2, size=token_dim),
            seed=seed,
        )


def mlp_forward(features: np.ndarray, mlp: PointwiseMlp) -> np.ndarray:
    """out = w2 @ tanh(w1 @ f + b1) + b2, applied row-wise."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != mlp.input_dim:
        raise ValueError(f"features must be (N, {mlp.input_dim}), got {f.shape}")
    hidden = np.tanh(f @ mlp.w1.T + mlp.b1)
    return hidden @ mlp.w2.T + mlp.b2


@dataclass(frozen=True)
class TokenGrid:
    """A (rows, cols, token_dim) grid of token features."""

    values: np.ndarray
    provenance: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ValidationError(f"token grid must be 3-D, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValidationError("token grid contains non-finite values")
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance '{self.provenance}'")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


def embed_grid(
    points: PointMap,
    cfg: SinusoidConfig,
    mlp: PointwiseMlp,
    patch_size: int = PATCH_SIZE,
) -> TokenGrid:
    """Downsample a point map to the token grid and embed each cell.

    Each cell takes the mean of its patch's valid positions; cells with
    no valid pixel get the all-zero embedding instead of an MLP output,
    so holes never leak garbage into the grid.
    """
    h, w = points.shape
    if h % patch_size != 0 or w % patch_size != 0:
        raise ValueError(f"point map {h}x{w} sides must be divisible by patch size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    valid = points.validity.astype(np.float64)
    weighted = points.positions * valid[:, :, None]
    sums = weighted.reshape(gh, patch_size, gw, patch_size, 3).sum(axis=(1, 3))
    counts = valid.reshape(gh, patch_size, gw, patch_size).sum(axis=(1, 3))

    values = np.zeros((gh, gw, mlp.token_dim), dtype=np.float64)
    occupied = counts > 0
    if occupied.any():
        means = sums[occupied] / counts[occupied][:, None]
        values[occupied] = mlp_forward(sinusoid(means, cfg), mlp)
    return TokenGrid(values=values, provenance="position")


def fuse(vision: TokenGrid, position: TokenGrid) -> TokenGrid:
    """Elementwise sum of a vision grid and a position grid."""
    if vision.shape != position.shape:
        raise ValueError(f"grid shapes differ: {vision.shape} vs {position.shape}")
    return TokenGrid(values=vision.values + position.values, provenance="fused")


def _forward_parts(mlp: PointwiseMlp, features: np.ndarray):
    hidden = np.tanh(features @ mlp.w1.T + mlp.b1)
    out = hidden @ mlp.w2.T + mlp.b2
    return hidden, out


def squared_norm_loss(mlp: PointwiseMlp, features: np.ndarray, loss_scale: float = 1.0) -> float:
    """The scalar loss used by gradient verification: scale * ||out||^2."""
    _, out = _forward_parts(mlp, np.asarray(features, dtype=np.float64))
    return float(loss_scale * np.sum(out * out))


def mlp_gradients(
    mlp: PointwiseMlp, features: np.ndarray, loss_scale: float = 1.0
) -> dict[str, np.ndarray]:
    """Analytic parameter gradients of the squared-norm loss."""
    f = np.asarray(features, dtype=np.float64)
    hidden, out = _forward_parts(mlp, f)
    g_out = 2.0 * loss_scale * out
    g_w2 = g_out.T @ hidden
    g_b2 = g_out.sum(axis=0)
    g_hidden = g_out @ mlp.w2
    g_pre = g_hidden * (1.0 - hidden * hidden)
    g_w1 = g_pre.T @ f
    g_b1 = g_pre.sum(axis=0)
    return {"w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2}


def grad_check(mlp: PointwiseMlp, features: np.ndarray, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Error per parameter is |analytic - numeric| / max(1, |numeric|); the
    numeric side perturbs one scalar parameter at a time by +-step.
    """
    if np.asarray(features).shape[0] < 1:
        raise ValueError("grad_check needs at least one feature row")
    analytic = mlp_gradients(mlp, features)
    params = {
        "w1": mlp.w1.copy(),
        "b1": mlp.b1.copy(),
        "w2": mlp.w2.copy(),
        "b2": mlp.b2.copy(),
    }

    def loss_with(params_now: dict[str, np.ndarray]) -> float:
        probe = PointwiseMlp(
            w1=params_now["w1"], b1=params_now["b1"], w2=params_now["w2"], b2=params_now["b2"]
        )
        return squared_norm_loss(probe, features)

    worst = 0.0
    for name, base in params.items():
        flat = base.reshape(-1)
        grads = analytic[name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            hi = loss_with(params)
            flat[i] = original - step
            lo = loss_with(params)
            flat[i] = original
            numeric = (hi - lo) / (2.0 * step)
            err = abs(grads[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst


def save_mlp(mlp: PointwiseMlp, out_dir: str | Path) -> Path:
    """Persist MLP parameters as a P3DR raster bundle plus a JSON header."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    p3dr.write_raster(out_dir / "w1.p3dr", mlp.w1[:, :, None])
    p3dr.write_raster(out_dir / "b1.p3dr", mlp.b1[None, :, None])
    p3dr.write_raster(out_dir / "w2.p3dr", mlp.w2[:, :, None])
    p3dr.write_raster(out_dir / "b2.p3dr", mlp.b2[None, :, None])
    header = {
        "input_dim": mlp.input_dim,
        "hidden_dim": mlp.hidden_dim,
        "token_dim": mlp.token_dim,
        "activation": mlp.activation,
        "seed": mlp.seed,
    }
    header_path = out_dir / "mlp.json"
    header_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return header_path


def load_mlp(bundle_dir: str | Path) -> PointwiseMlp:
    """Load an MLP bundle written by ``save_mlp`` (float32 precision)."""
    bundle_dir = Path(bundle_dir)
    header_path = bundle_dir / "mlp.json"
    if not header_path.is_file():
        raise ValidationError(f"MLP header not found: {header_path}")
    header = json.loads(header_path.read_text())
    mlp = PointwiseMlp(
        w1=p3dr.read_raster(bundle_dir / "w1.p3dr")[:, :, 0],
        b1=p3dr.read_raster(bundle_dir / "b1.p3dr")[0, :, 0],
        w2=p3dr.read_raster(bundle_dir / "w2.p3dr")[:, :, 0],
        b2=p3dr.read_raster(bundle_dir / "b2.p3dr")[0, :, 0],
        activation=str(header.get("activation", "tanh")),
        seed=header.get("seed"),
    )
    expect = (header["input_dim"], header["hidden_dim"], header["token_dim"])
    actual = (mlp.input_dim, mlp.hidden_dim, mlp.token_dim)
    if expect != actual:
        raise ValidationError(f"MLP bundle header dims {expect} do not match rasters {actual}")
    return mlp
