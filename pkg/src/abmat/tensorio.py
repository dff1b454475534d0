"""Raw float tensor files and checkpoint bundles.

Tensor file layout (little endian): magic ``ABMF``, u32 rank, u32 dims...,
then the float32 payload, row-major.

A checkpoint is a plain-text manifest followed by concatenated tensor
records::

    ABMC 1
    <count>
    <name> <byte offset> <byte length>
    ...
    END

Offsets are relative to the first byte after the ``END`` line. Reading a
checkpoint and writing it again reproduces the file byte for byte.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .errors import InputError

MAGIC = b"ABMF"

__all__ = ["write_abmf", "read_abmf", "abmf_bytes", "save_checkpoint", "load_checkpoint"]


def abmf_bytes(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype=np.float32)
    header = MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return header + a.astype("<f4").tobytes()


def write_abmf(path: str, a: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(abmf_bytes(a))


def _read_abmf_stream(f) -> np.ndarray:
    magic = f.read(4)
    if magic != MAGIC:
        raise InputError(f"bad tensor magic {magic!r}")
    (rank,) = struct.unpack("<I", f.read(4))
    shape = struct.unpack(f"<{rank}I", f.read(4 * rank))
    count = int(np.prod(shape)) if rank else 1
    data = np.frombuffer(f.read(4 * count), dtype="<f4").astype(np.float64)
    return data.reshape(shape)


def read_abmf(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        return _read_abmf_stream(f)


def save_checkpoint(params: dict, path: str) -> None:
    """Write named arrays as a manifest + concatenated ABMF records."""
    records = []
    offset = 0
    blobs = []
    for name in params:
        blob = abmf_bytes(params[name])
        records.append((name, offset, len(blob)))
        blobs.append(blob)
        offset += len(blob)
    lines = ["ABMC 1", str(len(records))]
    lines += [f"{name} {off} {length}" for name, off, length in records]
    lines.append("END")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("ascii"))
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path: str) -> dict:
    with open(path, "rb") as f:
        if f.readline().strip() != b"ABMC 1":
            raise InputError(f"not a checkpoint file: {path}")
        count = int(f.readline())
        records = []
        for _ in range(count):
            name, off, length = f.readline().decode("ascii").split()
            records.append((name, int(off), int(length)))
        if f.readline().strip() != b"END":
            raise InputError(f"corrupt checkpoint manifest: {path}")
        base = f.tell()
        params = {}
        for name, off, length in records:
            f.seek(base + off)
            params[name] = _read_abmf_stream(io.BytesIO(f.read(length)))
    return params
