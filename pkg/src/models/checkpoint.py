#!/usr/bin/env python3
"""
Контейнер весов "SGCK".

    magic "SGCK" | u32 version | u32 len | JSON-дескриптор (len байт, UTF-8)
    | для каждого тензора из дескриптора: float32 little-endian, row-major

Дескриптор хранит архитектуру каждой секции и список тензоров (имя, форма).
Имена тензоров несут префикс секции: "codec." или "denoiser.".
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
import structlog
import torch

from core.config import CodecConfig, DiffusionConfig
from core.errors import InvalidInputError
from models.codec import SCMCodec
from models.denoiser import MultiViewDenoiser
from models.latents import LatentLayout

logger = structlog.get_logger(__name__)

MAGIC = b"SGCK"
VERSION = 1


def encode_checkpoint(sections: Mapping[str, Tuple[Dict[str, Any], Mapping[str, torch.Tensor]]]) -> bytes:
    """sections: имя секции → (архитектура, state_dict)."""
    descriptor: Dict[str, Any] = {"sections": {}, "tensors": []}
    blobs = []
    for section, (architecture, state) in sections.items():
        descriptor["sections"][section] = architecture
        for name, tensor in state.items():
            array = tensor.detach().cpu().to(torch.float32).numpy()
            descriptor["tensors"].append({"name": f"{section}.{name}", "shape": list(array.shape)})
            blobs.append(array.astype("<f4").tobytes(order="C"))
    header = json.dumps(descriptor, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<II", VERSION, len(header)) + header + b"".join(blobs)


def decode_checkpoint(data: bytes) -> Tuple[Dict[str, Any], "OrderedDict[str, np.ndarray]"]:
    if data[:4] != MAGIC:
        raise InvalidInputError("not an SGCK checkpoint")
    version, length = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise InvalidInputError(f"unsupported SGCK version {version}")
    descriptor = json.loads(data[12 : 12 + length].decode("utf-8"))
    offset = 12 + length
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for entry in descriptor["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        if offset + 4 * count > len(data):
            raise InvalidInputError(f"truncated tensor {entry['name']}")
        array = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(entry["shape"])
        tensors[entry["name"]] = array.astype(np.float32)
        offset += 4 * count
    if offset != len(data):
        raise InvalidInputError("trailing bytes after last tensor")
    return descriptor, tensors


def section_state(tensors: Mapping[str, np.ndarray], section: str) -> "OrderedDict[str, torch.Tensor]":
    prefix = section + "."
    return OrderedDict(
        (name[len(prefix) :], torch.from_numpy(array.copy())) for name, array in tensors.items() if name.startswith(prefix)
    )


def save_checkpoint(path: Path, sections: Mapping[str, Tuple[Dict[str, Any], Mapping[str, torch.Tensor]]]) -> None:
    Path(path).write_bytes(encode_checkpoint(sections))
    logger.info("checkpoint.saved", path=str(path), sections=list(sections))


def load_checkpoint(path: Path) -> Tuple[Dict[str, Any], "OrderedDict[str, np.ndarray]"]:
    return decode_checkpoint(Path(path).read_bytes())


def save_models(path: Path, codec: Optional[SCMCodec] = None, denoiser: Optional[MultiViewDenoiser] = None) -> None:
    """Сохраняет кодек и/или денойзер в один SGCK-файл."""
    sections = {}
    if codec is not None:
        sections["codec"] = (codec.descriptor(), codec.state_dict())
    if denoiser is not None:
        sections["denoiser"] = (denoiser.descriptor(), denoiser.state_dict())
    if not sections:
        raise InvalidInputError("nothing to save")
    save_checkpoint(path, sections)


def load_codec(path: Path) -> SCMCodec:
    descriptor, tensors = load_checkpoint(path)
    architecture = descriptor["sections"].get("codec")
    if architecture is None:
        raise InvalidInputError(f"{path} holds no codec section")
    config = CodecConfig(
        in_channels=architecture["in_channels"],
        latent_channels=architecture["latent_channels"],
        hidden=tuple(architecture["hidden"]),
        downsample=architecture["downsample"],
    )
    codec = SCMCodec(config)
    codec.load_state_dict(section_state(tensors, "codec"))
    if architecture.get("encoder_frozen", True):
        codec.freeze_encoder()
    codec.eval()
    return codec


def load_denoiser(path: Path) -> MultiViewDenoiser:
    descriptor, tensors = load_checkpoint(path)
    architecture = descriptor["sections"].get("denoiser")
    if architecture is None:
        raise InvalidInputError(f"{path} holds no denoiser section")
    config = DiffusionConfig(
        image_size=architecture["image_size"],
        patch=architecture["patch"],
        width=architecture["width"],
        depth=architecture["depth"],
        heads=architecture["heads"],
        ff_mult=architecture["ff_mult"],
        use_layout=architecture["use_layout"],
    )
    latent = LatentLayout(config.image_size, config.patch, architecture["classes"], architecture["p_channels"])
    model = MultiViewDenoiser(config, latent)
    model.load_state_dict(section_state(tensors, "denoiser"))
    model.eval()
    return model
