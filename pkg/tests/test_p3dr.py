import numpy as np
import pytest

from sr3d import p3dr
from sr3d.errors import ValidationError


def test_round_trip_3d(tmp_path, rng):
    arr = rng.standard_normal((7, 5, 3)).astype(np.float32)
    path = tmp_path / "map.p3dr"
    p3dr.write_raster(path, arr)
    back = p3dr.read_raster(path)
    assert back.shape == (7, 5, 3)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, arr)


def test_round_trip_2d_becomes_single_channel(tmp_path):
    arr = np.arange(12, dtype=np.float32).reshape(3, 4)
    path = tmp_path / "depth.p3dr"
    p3dr.write_raster(path, arr)
    back = p3dr.read_raster(path)
    assert back.shape == (3, 4, 1)
    np.testing.assert_array_equal(back[:, :, 0], arr)
    np.testing.assert_array_equal(p3dr.read_plane(path), arr)


def test_header_layout(tmp_path):
    arr = np.zeros((2, 3, 1), dtype=np.float32)
    path = tmp_path / "x.p3dr"
    p3dr.write_raster(path, arr)
    data = path.read_bytes()
    assert data[:4] == b"P3DR"
    assert int.from_bytes(data[4:8], "little") == 2
    assert int.from_bytes(data[8:12], "little") == 3
    assert int.from_bytes(data[12:16], "little") == 1
    assert len(data) == 16 + 2 * 3 * 4


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.p3dr"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValidationError):
        p3dr.read_raster(path)


def test_truncated_payload_rejected(tmp_path):
    arr = np.zeros((4, 4, 2), dtype=np.float32)
    path = tmp_path / "x.p3dr"
    p3dr.write_raster(path, arr)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValidationError):
        p3dr.read_raster(path)


def test_missing_file(tmp_path):
    with pytest.raises(ValidationError):
        p3dr.read_raster(tmp_path / "absent.p3dr")


def test_plane_requires_single_channel(tmp_path):
    p3dr.write_raster(tmp_path / "x.p3dr", np.zeros((2, 2, 3), dtype=np.float32))
    with pytest.raises(ValidationError):
        p3dr.read_plane(tmp_path / "x.p3dr")
