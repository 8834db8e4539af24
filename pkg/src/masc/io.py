"""Binary dataset (MASCDS01) and checkpoint (MASCCK01) formats.

Both are little-endian throughout.

MASCDS01::

    magic[8] | u32 count | u32 H | u32 W |
    count x ( clean k-space: H*W interleaved f32 re/im
            | metal k-space: same
            | implant mask: H*W u8
            | subject: u32 )

MASCCK01::

    magic[8] | u32 tensor count |
    count x ( u16 name length | UTF-8 name | u8 rank | rank x u32 dims | f32 data )
"""
from __future__ import annotations

import os
import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fourier
from .metalsim import PairedSample

DATASET_MAGIC = b"MASCDS01"
CHECKPOINT_MAGIC = b"MASCCK01"


class FormatError(ValueError):
    pass


@dataclass
class Dataset:
    clean_k: np.ndarray      # (N, H, W) complex64, DC-centred
    metal_k: np.ndarray
    implant_mask: np.ndarray  # (N, H, W) bool
    subjects: np.ndarray     # (N,) uint32

    def __post_init__(self):
        self.clean_k = np.ascontiguousarray(self.clean_k, dtype=np.complex64)
        self.metal_k = np.ascontiguousarray(self.metal_k, dtype=np.complex64)
        self.implant_mask = np.ascontiguousarray(self.implant_mask, dtype=bool)
        self.subjects = np.ascontiguousarray(self.subjects, dtype=np.uint32)
        n = self.clean_k.shape[0]
        if not (self.metal_k.shape == self.clean_k.shape == self.implant_mask.shape and self.subjects.shape == (n,)):
            raise FormatError("dataset arrays disagree in shape")
        full = np.ones(self.width, dtype=bool)
        self.clean_images = fourier.reconstruct(self.clean_k, full).astype(np.float32) if n else \
            np.zeros(self.clean_k.shape, np.float32)
        self.metal_images = fourier.reconstruct(self.metal_k, full).astype(np.float32) if n else \
            np.zeros(self.clean_k.shape, np.float32)

    def __len__(self) -> int:
        return self.clean_k.shape[0]

    @property
    def height(self) -> int:
        return self.clean_k.shape[1]

    @property
    def width(self) -> int:
        return self.clean_k.shape[2]

    def sample(self, i: int) -> PairedSample:
        return PairedSample(self.clean_k[i], self.metal_k[i], self.implant_mask[i],
                            self.clean_images[i], self.metal_images[i], int(self.subjects[i]))

    def normalized_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """(metal, clean) images divided per sample by the clean maximum."""
        scale = self.clean_images.reshape(len(self), -1).max(axis=1)[:, None, None]
        return self.metal_images / scale, self.clean_images / scale

    @classmethod
    def from_samples(cls, samples: list[PairedSample]) -> "Dataset":
        if not samples:
            raise FormatError("cannot build a dataset from zero samples; shape is unknown")
        return cls(np.stack([s.clean_k for s in samples]), np.stack([s.metal_k for s in samples]),
                   np.stack([s.implant_mask for s in samples]), np.array([s.subject for s in samples]))


def _interleave(k: np.ndarray) -> bytes:
    return np.ascontiguousarray(k, dtype="<c8").view("<f4").tobytes()


def dataset_bytes(ds: Dataset) -> bytes:
    n, h, w = ds.clean_k.shape
    parts = [DATASET_MAGIC, struct.pack("<III", n, h, w)]
    for i in range(n):
        parts.append(_interleave(ds.clean_k[i]))
        parts.append(_interleave(ds.metal_k[i]))
        parts.append(ds.implant_mask[i].astype(np.uint8).tobytes())
        parts.append(struct.pack("<I", int(ds.subjects[i])))
    return b"".join(parts)


def write_dataset(path, ds: Dataset) -> None:
    Path(path).write_bytes(dataset_bytes(ds))


def read_dataset(path) -> Dataset:
    buf = Path(path).read_bytes()
    if buf[:8] != DATASET_MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:8]!r}, expected {DATASET_MAGIC!r}")
    if len(buf) < 20:
        raise FormatError(f"{path}: truncated header")
    n, h, w = struct.unpack_from("<III", buf, 8)
    hw = h * w
    rec = 16 * hw + hw + 4
    if len(buf) != 20 + n * rec:
        raise FormatError(f"{path}: length {len(buf)} does not match header ({n} x {h} x {w})")
    dtype = np.dtype([("clean", "<c8", (h, w)), ("metal", "<c8", (h, w)), ("mask", "u1", (h, w)), ("subject", "<u4")])
    recs = np.frombuffer(buf, dtype=dtype, count=n, offset=20)
    return Dataset(recs["clean"].astype(np.complex64), recs["metal"].astype(np.complex64),
                   recs["mask"].astype(bool), recs["subject"].astype(np.uint32))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------
def checkpoint_bytes(tensors: dict) -> bytes:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise FormatError(f"tensor {name!r} cannot be encoded")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(path, tensors: dict) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(checkpoint_bytes(tensors))
    os.replace(tmp, path)


def parse_checkpoint(buf: bytes, origin: str = "<bytes>") -> "OrderedDict[str, np.ndarray]":
    if buf[:8] != CHECKPOINT_MAGIC:
        raise FormatError(f"{origin}: bad magic {buf[:8]!r}, expected {CHECKPOINT_MAGIC!r}")
    try:
        (count,) = struct.unpack_from("<I", buf, 8)
        pos = 12
        out = OrderedDict()
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + ln].decode("utf-8")
            pos += ln
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * size > len(buf):
                raise FormatError(f"{origin}: tensor {name!r} runs past end of file")
            out[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * size
    except struct.error as exc:
        raise FormatError(f"{origin}: truncated checkpoint") from exc
    if pos != len(buf):
        raise FormatError(f"{origin}: {len(buf) - pos} trailing bytes")
    return out


def load_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    return parse_checkpoint(Path(path).read_bytes(), str(path))
