#!/usr/bin/env python3
"""
Файловые форматы: PNG (цвет, индексированная семантика, 16-бит глубина),
бинарный SCM1, бинарный PLY, CSV метрик и журналов обучения.
"""

from __future__ import annotations

import csv
import json
import math
import functools
import struct
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from PIL import Image

from core.errors import FormatError, InvalidInputError
from core.maps import SceneCoordMap
from core.palette import CategoryPalette, default_palette
from core.warp import GlobalPointCloud

SCM_MAGIC = b"SCM1"
DEPTH_SCALE = 1000.0
DEPTH_CAP_M = 65.535

PLY_DTYPE = np.dtype(
    [
        ("x", "<f4"),
        ("y", "<f4"),
        ("z", "<f4"),
        ("red", "u1"),
        ("green", "u1"),
        ("blue", "u1"),
        ("semantic", "<u2"),
        ("confidence", "<f4"),
        ("source_view", "<i4"),
    ]
)
_PLY_TYPES = {"f4": "float", "u1": "uchar", "u2": "ushort", "i4": "int"}

_F = TypeVar("_F", bound=Callable[..., Any])


def _file_io(func: _F) -> _F:
    """Ошибки файловой системы и PIL на границе ввода-вывода становятся FormatError."""

    @functools.wraps(func)
    def wrapper(path, *args, **kwargs):
        try:
            return func(path, *args, **kwargs)
        except (OSError, SyntaxError, struct.error) as exc:
            raise FormatError(str(exc) or type(exc).__name__, str(path)) from exc
        except (KeyError, ValueError) as exc:
            raise FormatError(f"malformed content: {exc}", str(path)) from exc

    return wrapper  # type: ignore[return-value]


def to_uint8(color: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(color, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


@_file_io
def write_color_png(path: Path, color: np.ndarray) -> None:
    Image.fromarray(to_uint8(color)).save(path)


@_file_io
def read_color_png(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


@_file_io
def write_semantic_png(path: Path, semantic: np.ndarray, palette: Optional[CategoryPalette] = None) -> None:
    """8-битный индексированный PNG; палитра: цвета категорий."""
    palette = palette or default_palette()
    ids = np.asarray(semantic)
    if ids.min(initial=0) < 0 or ids.max(initial=0) > 255:
        raise InvalidInputError("semantic ids must fit in 8 bits")
    height, width = ids.shape
    img = Image.frombytes("P", (width, height), ids.astype(np.uint8).tobytes())
    img.putpalette(palette.colors().reshape(-1).tolist())
    img.save(path)


@_file_io
def read_semantic_png(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img, dtype=np.int64)


@_file_io
def write_depth_png(path: Path, depth: np.ndarray) -> None:
    """16-битный grayscale PNG в миллиметрах; всё дальше 65.535 м обрезается."""
    mm = np.clip(np.rint(np.asarray(depth, dtype=np.float64) * DEPTH_SCALE), 0, 65535).astype(np.uint16)
    Image.fromarray(mm).save(path)


@_file_io
def read_depth_png(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img, dtype=np.float64) / DEPTH_SCALE


def encode_scm(scm: SceneCoordMap) -> bytes:
    """"SCM1" + u32 width, height, channels + float32 LE построчно + маска (width*height байт)."""
    height, width = scm.shape
    header = SCM_MAGIC + struct.pack("<III", width, height, 3)
    body = scm.points.astype("<f4").tobytes(order="C")
    return header + body + scm.mask.astype(np.uint8).tobytes(order="C")


def decode_scm(data: bytes) -> SceneCoordMap:
    if data[:4] != SCM_MAGIC:
        raise InvalidInputError("not an SCM1 file")
    width, height, channels = struct.unpack("<III", data[4:16])
    if channels != 3:
        raise InvalidInputError(f"unsupported SCM channel count {channels}")
    count = width * height * channels
    expected = 16 + 4 * count + width * height
    if len(data) != expected:
        raise InvalidInputError(f"SCM1 size mismatch: expected {expected} bytes, got {len(data)}")
    points = np.frombuffer(data, dtype="<f4", count=count, offset=16).reshape(height, width, channels)
    mask = np.frombuffer(data, dtype=np.uint8, offset=16 + 4 * count).reshape(height, width).astype(bool)
    return SceneCoordMap(points.astype(np.float64), mask)


@_file_io
def write_scm(path: Path, scm: SceneCoordMap) -> None:
    Path(path).write_bytes(encode_scm(scm))


@_file_io
def read_scm(path: Path) -> SceneCoordMap:
    return decode_scm(Path(path).read_bytes())


def encode_ply(cloud: GlobalPointCloud) -> bytes:
    records = np.zeros(len(cloud), dtype=PLY_DTYPE)
    records["x"], records["y"], records["z"] = cloud.positions.T
    rgb = to_uint8(cloud.colors)
    records["red"], records["green"], records["blue"] = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    records["semantic"] = cloud.semantics
    records["confidence"] = cloud.confidence
    records["source_view"] = cloud.source_view
    lines = ["ply", "format binary_little_endian 1.0", f"element vertex {len(cloud)}"]
    for name in PLY_DTYPE.names:
        kind = PLY_DTYPE.fields[name][0].str.lstrip("<|")
        lines.append(f"property {_PLY_TYPES[kind]} {name}")
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii") + records.tobytes()


def decode_ply(data: bytes) -> GlobalPointCloud:
    marker = b"end_header\n"
    end = data.find(marker)
    if not data.startswith(b"ply\n") or end < 0:
        raise InvalidInputError("not a binary PLY file")
    header = data[:end].decode("ascii").splitlines()
    count = next((int(line.split()[2]) for line in header if line.startswith("element vertex")), None)
    if count is None or "format binary_little_endian 1.0" not in header:
        raise InvalidInputError("unsupported PLY header")
    records = np.frombuffer(data, dtype=PLY_DTYPE, count=count, offset=end + len(marker))
    return GlobalPointCloud(
        positions=np.stack([records["x"], records["y"], records["z"]], axis=-1).astype(np.float64),
        colors=np.stack([records["red"], records["green"], records["blue"]], axis=-1) / 255.0,
        semantics=records["semantic"].astype(np.int64),
        confidence=records["confidence"].astype(np.float64),
        source_view=records["source_view"].astype(np.int64),
    )


@_file_io
def write_ply(path: Path, cloud: GlobalPointCloud) -> None:
    Path(path).write_bytes(encode_ply(cloud))


@_file_io
def read_ply(path: Path) -> GlobalPointCloud:
    return decode_ply(Path(path).read_bytes())


def json_number(value: float) -> Any:
    """inf/nan как строки, чтобы JSON оставался стандартным."""
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


@_file_io
def write_metrics_csv(path: Path, rows: Iterable[Tuple[Any, float, float]]) -> None:
    """CSV (view_id, psnr, ssim); PSNR бесконечность пишется как inf."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["view_id", "psnr", "ssim"])
        for view_id, psnr_value, ssim_value in rows:
            writer.writerow([view_id, repr(float(psnr_value)), repr(float(ssim_value))])


@_file_io
def read_metrics_csv(path: Path) -> List[Dict[str, Any]]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        return [
            {"view_id": row["view_id"], "psnr": float(row["psnr"]), "ssim": float(row["ssim"])}
            for row in csv.DictReader(fh)
        ]


@_file_io
def write_summary_json(path: Path, summary: Dict[str, Any]) -> None:
    cleaned = {key: json_number(value) for key, value in summary.items()}
    Path(path).write_text(json.dumps(cleaned, indent=2, sort_keys=True), encoding="utf-8")


@_file_io
def write_log_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow(list(row))
