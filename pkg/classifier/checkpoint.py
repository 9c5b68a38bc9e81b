"""FTNN checkpoint files and their AdaptConfig sidecars.

Little-endian. Magic ``FTNN``, version u32, image size u32, then until end of file one
record per tensor: name length u16, UTF-8 name, rank u8, rank x u32 extents, f32 values.
"""

import logging
import struct
from pathlib import Path

import numpy as np
import torch

from classifier.network import TrailNet
from models.models import AdaptConfig

logger = logging.getLogger(__name__)

MAGIC = b"FTNN"
VERSION = 1
_PREAMBLE = struct.Struct("<4sII")


class CheckpointFormatError(ValueError):
    """Malformed FTNN file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def write_checkpoint(net: TrailNet, path: str | Path) -> None:
    chunks = [_PREAMBLE.pack(MAGIC, VERSION, net.image_size)]
    for name, tensor in net.state_dict().items():
        encoded = name.encode("utf-8")
        values = tensor.detach().cpu().numpy().astype("<f4")
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack(f"<B{values.ndim}I", values.ndim, *values.shape))
        chunks.append(values.tobytes())
    Path(path).write_bytes(b"".join(chunks))
    logger.debug(f"Wrote checkpoint {path}")


def _take(data: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(data):
        raise CheckpointFormatError(f"truncated {what}", offset)
    return data[offset : offset + size]


def read_tensors(path: str | Path) -> tuple[int, dict[str, np.ndarray]]:
    """(image size, name -> float32 array) in file order."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", 0)
    _, version, image_size = _PREAMBLE.unpack(_take(data, 0, _PREAMBLE.size, "header"))
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version}", 4)

    tensors: dict[str, np.ndarray] = {}
    offset = _PREAMBLE.size
    while offset < len(data):
        start = offset
        (name_len,) = struct.unpack("<H", _take(data, offset, 2, "name length"))
        offset += 2
        name = _take(data, offset, name_len, "tensor name").decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack("<B", _take(data, offset, 1, "rank"))
        offset += 1
        shape = struct.unpack(f"<{rank}I", _take(data, offset, 4 * rank, "extents"))
        offset += 4 * rank
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(_take(data, offset, 4 * count, f"values of {name}"), dtype="<f4")
        offset += 4 * count
        if name in tensors:
            raise CheckpointFormatError(f"duplicate tensor {name}", start)
        tensors[name] = values.reshape(shape).astype(np.float32)
    return image_size, tensors


def read_checkpoint(path: str | Path) -> TrailNet:
    image_size, tensors = read_tensors(path)
    heads = {name.split(".")[1] for name in tensors if name.startswith("heads.")}
    try:
        net = TrailNet(image_size, max(len(heads), 1))
        net.load_state_dict({name: torch.from_numpy(v) for name, v in tensors.items()})
    except (RuntimeError, ValueError) as e:
        raise CheckpointFormatError(f"tensors do not fit the network: {e}", _PREAMBLE.size) from e
    return net


def sidecar_path(checkpoint: str | Path) -> Path:
    return Path(checkpoint).with_suffix(".cfg")


def write_sidecar(cfg: AdaptConfig, checkpoint: str | Path) -> Path:
    path = sidecar_path(checkpoint)
    lines = []
    for key, value in cfg.model_dump(mode="json", by_alias=True).items():
        if isinstance(value, list):
            value = ",".join(value)
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{key}={value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_sidecar(checkpoint: str | Path) -> AdaptConfig:
    path = sidecar_path(checkpoint)
    values: dict[str, object] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    if "adapted_layers" in values:
        values["adapted_layers"] = tuple(v for v in str(values["adapted_layers"]).split(",") if v)
    return AdaptConfig.model_validate(values)
