import numpy as np
import pytest

from sr3d.errors import ValidationError
from sr3d.geometry import PointMap
from sr3d.pos_embed import (
    PointwiseMlp,
    SinusoidConfig,
    TokenGrid,
    embed_grid,
    fuse,
    grad_check,
    load_mlp,
    mlp_forward,
    mlp_gradients,
    save_mlp,
    sinusoid,
    squared_norm_loss,
)


def _cfg(**kw):
    return SinusoidConfig(channels_per_axis=8, **kw)


def _mlp(seed=0, input_dim=24, token_dim=6):
    return PointwiseMlp.initialize(input_dim=input_dim, token_dim=token_dim, seed=seed)


class TestSinusoid:
    def test_origin(self):
        feats = sinusoid(np.zeros((1, 3)), _cfg())
        np.testing.assert_array_equal(feats[0, 0::2], 0.0)  # sin channels
        np.testing.assert_array_equal(feats[0, 1::2], 1.0)  # cos channels

    def test_odd_even_symmetry(self, rng):
        cfg = _cfg()
        pos = rng.standard_normal((5, 3))
        plus = sinusoid(pos, cfg)
        minus = sinusoid(-pos, cfg)
        np.testing.assert_allclose(minus[:, 0::2], -plus[:, 0::2], atol=1e-12)
        np.testing.assert_allclose(minus[:, 1::2], plus[:, 1::2], atol=1e-12)

    def test_pi_over_base_frequency(self):
        cfg = _cfg(base_frequency=2.0)
        feats = sinusoid(np.array([[np.pi / 2.0, 0.0, 0.0]]), cfg)
        assert abs(feats[0, 0]) < 1e-6  # sin(pi)
        assert feats[0, 1] == pytest.approx(-1.0, abs=1e-6)  # cos(pi)

    def test_bounded(self, rng):
        feats = sinusoid(rng.standard_normal((100, 3)) * 50, _cfg())
        assert feats.min() >= -1.0 and feats.max() <= 1.0

    def test_default_growth_follows_channel_count(self):
        cfg = SinusoidConfig(channels_per_axis=32)
        assert cfg.frequency_growth == pytest.approx(10000.0 ** (2.0 / 32))
        assert cfg.output_dim == 96
        assert cfg.output_dim % 6 == 0

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            sinusoid(np.array([[np.nan, 0.0, 0.0]]), _cfg())


class TestMlp:
    def test_all_zero_parameters(self):
        mlp = PointwiseMlp(w1=np.zeros((4, 3)), b1=np.zeros(4), w2=np.zeros((2, 4)), b2=np.zeros(2))
        out = mlp_forward(np.ones((5, 3)), mlp)
        np.testing.assert_array_equal(out, 0.0)

    def test_identity_construction_near_zero(self):
        # w1 = w2 = I, tanh(eps) = eps - eps^3/3 + ...
        mlp = PointwiseMlp(w1=np.eye(4), b1=np.zeros(4), w2=np.eye(4), b2=np.zeros(4))
        eps = 1e-2
        out = mlp_forward(np.full((1, 4), eps), mlp)
        np.testing.assert_allclose(out, eps, atol=2 * eps**3)

    def test_pointwise_permutation(self, rng):
        mlp = _mlp()
        feats = rng.standard_normal((7, mlp.input_dim))
        perm = rng.permutation(7)
        np.testing.assert_array_equal(mlp_forward(feats, mlp)[perm], mlp_forward(feats[perm], mlp))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mlp_forward(np.zeros((2, 5)), _mlp(input_dim=24))

    def test_seeded_init_is_bit_identical(self):
        a, b = _mlp(seed=11), _mlp(seed=11)
        for name in ("w1", "b1", "w2", "b2"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        c = _mlp(seed=12)
        assert not np.array_equal(a.w1, c.w1)

    def test_inconsistent_shapes_rejected(self):
        with pytest.raises(ValidationError):
            PointwiseMlp(w1=np.zeros((4, 3)), b1=np.zeros(4), w2=np.zeros((2, 5)), b2=np.zeros(2))


class TestEmbedGrid:
    def _points(self, positions, validity=None):
        positions = np.asarray(positions, dtype=np.float64)
        if validity is None:
            validity = np.ones(positions.shape[:2], dtype=bool)
        return PointMap(positions=positions, space="canonical", validity=validity)

    def test_constant_map_constant_grid(self):
        pm = self._points(np.tile([0.3, -0.2, 0.9], (28, 28, 1)))
        grid = embed_grid(pm, _cfg(), _mlp(), patch_size=14)
        assert grid.shape == (2, 2, 6)
        np.testing.assert_allclose(
            grid.values, np.broadcast_to(grid.values[0, 0], (2, 2, 6)), atol=1e-12
        )

    def test_fully_invalid_gives_zero_grid(self):
        pm = self._points(np.zeros((28, 28, 3)), validity=np.zeros((28, 28), dtype=bool))
        grid = embed_grid(pm, _cfg(), _mlp(), patch_size=14)
        np.testing.assert_array_equal(grid.values, 0.0)

    def test_448_map_gives_32_grid(self):
        pm = self._points(np.zeros((448, 448, 3)))
        grid = embed_grid(pm, _cfg(), _mlp())
        assert grid.shape == (32, 32, 6)

    def test_flip_equivariance(self, rng):
        positions = rng.uniform(-1, 1, (28, 42, 3))
        validity = rng.random((28, 42)) > 0.3
        pm = self._points(np.where(validity[..., None], positions, 0), validity)
        flipped = self._points(
            np.where(validity[:, ::-1, None], positions[:, ::-1], 0), validity[:, ::-1]
        )
        a = embed_grid(pm, _cfg(), _mlp(), patch_size=14)
        b = embed_grid(flipped, _cfg(), _mlp(), patch_size=14)
        np.testing.assert_allclose(b.values, a.values[:, ::-1], atol=1e-12)

    def test_partial_patch_uses_valid_mean(self):
        positions = np.zeros((14, 14, 3))
        validity = np.zeros((14, 14), dtype=bool)
        positions[0, 0] = [0.5, 0.5, 0.5]
        positions[0, 1] = [0.1, 0.1, 0.1]
        validity[0, :2] = True
        pm = self._points(positions, validity)
        grid = embed_grid(pm, _cfg(), _mlp(), patch_size=14)
        mean = np.array([[0.3, 0.3, 0.3]])
        expect = mlp_forward(sinusoid(mean, _cfg()), _mlp())
        np.testing.assert_allclose(grid.values[0, 0], expect[0], atol=1e-12)


class TestFuse:
    def test_zero_position_is_identity(self, rng):
        vision = TokenGrid(values=rng.standard_normal((4, 4, 3)), provenance="vision")
        zero = TokenGrid(values=np.zeros((4, 4, 3)), provenance="position")
        np.testing.assert_array_equal(fuse(vision, zero).values, vision.values)

    def test_commutative(self, rng):
        a = TokenGrid(values=rng.standard_normal((4, 4, 3)), provenance="vision")
        b = TokenGrid(values=rng.standard_normal((4, 4, 3)), provenance="position")
        np.testing.assert_array_equal(fuse(a, b).values, fuse(b, a).values)

    def test_difference_recovers_position(self, rng):
        a = TokenGrid(values=rng.standard_normal((4, 4, 3)), provenance="vision")
        b = TokenGrid(values=rng.standard_normal((4, 4, 3)), provenance="position")
        fused = fuse(a, b)
        assert fused.provenance == "fused"
        np.testing.assert_allclose(fused.values - a.values, b.values, atol=1e-7)

    def test_shape_mismatch(self, rng):
        a = TokenGrid(values=np.zeros((4, 4, 3)), provenance="vision")
        b = TokenGrid(values=np.zeros((4, 5, 3)), provenance="position")
        with pytest.raises(ValueError):
            fuse(a, b)


class TestGradCheck:
    def test_small_random_mlp(self, rng):
        mlp = PointwiseMlp.initialize(input_dim=12, token_dim=8, hidden_dim=8, seed=42)
        feats = np.random.default_rng(43).standard_normal((16, 12))
        assert grad_check(mlp, feats) < 1e-4

    def test_zero_network_gradients(self):
        b2 = np.array([0.5, -1.0])
        mlp = PointwiseMlp(w1=np.zeros((3, 4)), b1=np.zeros(3), w2=np.zeros((2, 3)), b2=b2)
        feats = np.zeros((5, 4))
        grads = mlp_gradients(mlp, feats)
        # hidden activations are zero, so every w2-path gradient vanishes
        np.testing.assert_array_equal(grads["w1"], 0.0)
        np.testing.assert_array_equal(grads["b1"], 0.0)
        np.testing.assert_array_equal(grads["w2"], 0.0)
        np.testing.assert_allclose(grads["b2"], 2 * 5 * b2, atol=1e-12)
        assert grad_check(mlp, feats) < 1e-6

    def test_loss_scaling_doubles_gradients(self, rng):
        mlp = _mlp(seed=9)
        feats = rng.standard_normal((6, mlp.input_dim))
        g1 = mlp_gradients(mlp, feats, loss_scale=1.0)
        g2 = mlp_gradients(mlp, feats, loss_scale=2.0)
        for name in g1:
            np.testing.assert_allclose(g2[name], 2.0 * g1[name], rtol=1e-12)
        assert squared_norm_loss(mlp, feats, 2.0) == pytest.approx(
            2 * squared_norm_loss(mlp, feats), rel=1e-12
        )


class TestSerialization:
    def test_round_trip_float32(self, tmp_path):
        mlp = _mlp(seed=31)
        save_mlp(mlp, tmp_path / "bundle")
        loaded = load_mlp(tmp_path / "bundle")
        for name in ("w1", "b1", "w2", "b2"):
            np.testing.assert_array_equal(
                getattr(loaded, name), getattr(mlp, name).astype(np.float32).astype(np.float64)
            )
        assert loaded.seed == 31

    def test_reload_is_stable(self, tmp_path):
        mlp = _mlp(seed=31)
        save_mlp(mlp, tmp_path / "a")
        first = load_mlp(tmp_path / "a")
        save_mlp(first, tmp_path / "b")
        second = load_mlp(tmp_path / "b")
        for name in ("w1", "b1", "w2", "b2"):
            np.testing.assert_array_equal(getattr(first, name), getattr(second, name))

    def test_header_mismatch_rejected(self, tmp_path):
        import json

        save_mlp(_mlp(seed=1), tmp_path / "bundle")
        header_path = tmp_path / "bundle" / "mlp.json"
        header = json.loads(header_path.read_text())
        header["hidden_dim"] += 1
        header_path.write_text(json.dumps(header))
        with pytest.raises(ValidationError):
            load_mlp(tmp_path / "bundle")
