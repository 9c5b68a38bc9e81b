"""FTDS binary dataset container.

Little-endian. Header: magic ``FTDS``, version u32, count u64, width u16, height u16,
channels u8. Then ``count`` records: label u8, domain_id u16, s f32, lateral f32,
yaw_jitter f32, width*height*channels u8 pixels (row-major, channel last).
"""

from pathlib import Path

import numpy as np

from data.capture import Dataset

MAGIC = b"FTDS"
VERSION = 1

HEADER = np.dtype(
    [("magic", "S4"), ("version", "<u4"), ("count", "<u8"), ("width", "<u2"), ("height", "<u2"), ("channels", "u1")]
)


class DatasetFormatError(ValueError):
    """Malformed FTDS file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def record_dtype(width: int, height: int, channels: int) -> np.dtype:
    return np.dtype(
        [
            ("label", "u1"),
            ("domain_id", "<u2"),
            ("s", "<f4"),
            ("lateral", "<f4"),
            ("yaw_jitter", "<f4"),
            ("pixels", "u1", (height, width, channels)),
        ]
    )


def write_dataset(ds: Dataset, path: str | Path) -> None:
    header = np.zeros(1, dtype=HEADER)
    header["magic"] = MAGIC
    header["version"] = VERSION
    header["count"] = len(ds)
    header["width"] = ds.width
    header["height"] = ds.height
    header["channels"] = ds.channels

    records = np.zeros(len(ds), dtype=record_dtype(ds.width, ds.height, ds.channels))
    records["label"] = ds.labels
    records["domain_id"] = ds.domain_ids
    records["s"] = ds.pose_meta[:, 0]
    records["lateral"] = ds.pose_meta[:, 1]
    records["yaw_jitter"] = ds.pose_meta[:, 2]
    records["pixels"] = ds.pixels

    with open(path, "wb") as file:
        file.write(header.tobytes())
        file.write(records.tobytes())


def read_dataset(path: str | Path) -> Dataset:
    data = Path(path).read_bytes()

    if len(data) < 4 or data[:4] != MAGIC:
        raise DatasetFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", 0)
    if len(data) < HEADER.itemsize:
        raise DatasetFormatError("truncated header", len(data))

    header = np.frombuffer(data, dtype=HEADER, count=1)[0]
    if int(header["version"]) != VERSION:
        raise DatasetFormatError(f"unsupported version {int(header['version'])}", 4)
    if int(header["channels"]) != 3:
        raise DatasetFormatError(f"expected 3 channels, got {int(header['channels'])}", 20)

    count = int(header["count"])
    records_type = record_dtype(int(header["width"]), int(header["height"]), int(header["channels"]))
    expected = HEADER.itemsize + count * records_type.itemsize
    if len(data) < expected:
        complete = (len(data) - HEADER.itemsize) // records_type.itemsize
        offset = HEADER.itemsize + complete * records_type.itemsize
        raise DatasetFormatError(
            f"truncated: header declares {count} samples, file holds {complete}", offset
        )
    if len(data) > expected:
        raise DatasetFormatError(f"{len(data) - expected} trailing bytes after {count} samples", expected)

    records = np.frombuffer(data, dtype=records_type, count=count, offset=HEADER.itemsize)
    bad = np.nonzero(records["label"] > 2)[0]
    if len(bad):
        raise DatasetFormatError(
            f"invalid label {int(records['label'][bad[0]])}", HEADER.itemsize + int(bad[0]) * records_type.itemsize
        )
    return Dataset(
        pixels=records["pixels"].copy(),
        labels=records["label"].copy(),
        domain_ids=records["domain_id"].copy(),
        pose_meta=np.stack([records["s"], records["lateral"], records["yaw_jitter"]], axis=1).astype(
            np.float32
        ),
    )
