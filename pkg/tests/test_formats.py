import json
import math
import struct

import numpy as np
import pytest

from core.errors import FormatError, InvalidInputError
from core.formats import (
    decode_ply,
    decode_scm,
    encode_ply,
    encode_scm,
    read_color_png,
    read_depth_png,
    read_metrics_csv,
    read_ply,
    read_scm,
    read_semantic_png,
    write_color_png,
    write_depth_png,
    write_metrics_csv,
    write_semantic_png,
    write_summary_json,
)
from core.maps import SceneCoordMap
from core.warp import GlobalPointCloud


def test_scm_layout_and_round_trip():
    rng = np.random.default_rng(0)
    mask = rng.random((3, 5)) > 0.3
    scm = SceneCoordMap(rng.normal(size=(3, 5, 3)), mask)
    data = encode_scm(scm)
    assert data[:4] == b"SCM1"
    assert struct.unpack("<III", data[4:16]) == (5, 3, 3)
    assert len(data) == 16 + 4 * 45 + 15
    restored = decode_scm(data)
    assert np.array_equal(restored.mask, mask)
    assert np.allclose(restored.points, scm.points, atol=1e-6)


@pytest.mark.parametrize("data", [b"XXXX" + bytes(12), b"SCM1" + struct.pack("<III", 2, 2, 3) + bytes(5)])
def test_scm_rejects_bad_data(data):
    with pytest.raises(InvalidInputError):
        decode_scm(data)


def test_ply_header_and_values():
    cloud = GlobalPointCloud(
        positions=[[0.5, -1.0, 2.0], [1.0, 1.0, 1.0]],
        colors=[[1.0, 0.0, 0.0], [0.0, 0.5, 1.0]],
        semantics=[6, 67],
        confidence=[1.5, 3.25],
        source_view=[0, 7],
    )
    data = encode_ply(cloud)
    header = data[: data.index(b"end_header")].decode("ascii")
    assert "format binary_little_endian 1.0" in header
    assert "element vertex 2" in header
    assert "property ushort semantic" in header
    assert "property int source_view" in header
    restored = decode_ply(data)
    assert np.array_equal(restored.positions, cloud.positions)
    assert np.array_equal(restored.semantics, [6, 67])
    assert np.array_equal(restored.source_view, [0, 7])
    assert np.array_equal(restored.confidence, [1.5, 3.25])
    assert np.array_equal(restored.colors[0], [1.0, 0.0, 0.0])


def test_ply_rejects_garbage():
    with pytest.raises(InvalidInputError):
        decode_ply(b"not a ply")


def test_depth_png_is_millimetres(tmp_path):
    depth = np.array([[0.0, 1.2344], [2.5, 70.0]])
    write_depth_png(tmp_path / "d.png", depth)
    restored = read_depth_png(tmp_path / "d.png")
    assert restored[0, 1] == pytest.approx(1.234)
    assert restored[1, 0] == pytest.approx(2.5)
    assert restored[1, 1] == pytest.approx(65.535)


def test_semantic_png_keeps_ids(tmp_path):
    ids = np.arange(64).reshape(8, 8) % 68
    write_semantic_png(tmp_path / "s.png", ids)
    assert np.array_equal(read_semantic_png(tmp_path / "s.png"), ids)
    with pytest.raises(InvalidInputError):
        write_semantic_png(tmp_path / "bad.png", np.full((2, 2), 300))


def test_color_png_quantizes(tmp_path):
    color = np.linspace(0.0, 1.0, 48).reshape(4, 4, 3)
    write_color_png(tmp_path / "c.png", color)
    assert np.abs(read_color_png(tmp_path / "c.png") - color).max() <= 0.5 / 255 + 1e-12


def test_metrics_csv_writes_inf(tmp_path):
    write_metrics_csv(tmp_path / "m.csv", [(3, math.inf, 1.0), (4, 31.5, 0.9)])
    text = (tmp_path / "m.csv").read_text()
    assert text.splitlines()[0] == "view_id,psnr,ssim"
    assert "3,inf,1.0" in text
    rows = read_metrics_csv(tmp_path / "m.csv")
    assert rows[0]["psnr"] == math.inf
    assert rows[1]["ssim"] == 0.9


def test_summary_json_is_standard(tmp_path):
    write_summary_json(tmp_path / "s.json", {"psnr": math.inf, "chamfer": 0.01})
    data = json.loads((tmp_path / "s.json").read_text())
    assert data == {"chamfer": 0.01, "psnr": "inf"}


def test_truncated_png_raises_format_error(tmp_path):
    path = tmp_path / "c.png"
    write_color_png(path, np.zeros((8, 8, 3)))
    path.write_bytes(path.read_bytes()[:20])
    for reader in (read_color_png, read_semantic_png, read_depth_png):
        with pytest.raises(FormatError) as info:
            reader(path)
        assert info.value.details == {"path": str(path)}
        assert info.value.code == "format-error"


def test_missing_files_raise_format_error(tmp_path):
    for reader in (read_scm, read_ply, read_metrics_csv, read_color_png):
        with pytest.raises(FormatError):
            reader(tmp_path / "absent")
    with pytest.raises(FormatError):
        write_color_png(tmp_path / "no" / "such" / "dir.png", np.zeros((2, 2, 3)))


def test_truncated_ply_raises_format_error(tmp_path):
    cloud = GlobalPointCloud(
        positions=[[0.0, 0.0, 0.0]], colors=[[1.0, 1.0, 1.0]], semantics=[1], confidence=[1.0], source_view=[0]
    )
    data = encode_ply(cloud)
    path = tmp_path / "cloud.ply"
    path.write_bytes(data[:-4])
    with pytest.raises(FormatError):
        read_ply(path)
