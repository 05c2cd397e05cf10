"""Binary field snapshots.

Layout (all little-endian)::

    offset  size      field
    0       4         magic b"PKS1"
    4       4         version, u32 = 1
    8       4         dim, u32
    12      4*dim     sizes, u32 each
    ...     8         A, f64
    ...     8         tau, f64
    ...     8*N       field values, f64, row-major (x slowest)
    end-4   4         CRC32 of every preceding byte

Reading is bit-exact: the values come back with identical bytes.
"""

from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from ..solver import SimState
from ..spectral import Grid

MAGIC = b"PKS1"
VERSION = 1


class SnapshotError(ValueError):
    def __init__(self, kind: str, offset: int, message: str):
        self.kind = kind
        self.offset = offset
        super().__init__(f"{kind} error at byte {offset}: {message}")


def encode_snapshot(state: SimState) -> bytes:
    sizes = state.grid.sizes
    head = MAGIC + struct.pack("<II", VERSION, len(sizes)) + struct.pack(f"<{len(sizes)}I", *sizes)
    head += struct.pack("<dd", float(state.A), float(state.tau))
    body = np.ascontiguousarray(state.n, dtype="<f8").tobytes(order="C")
    payload = head + body
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def decode_snapshot(data: bytes) -> SimState:
    if len(data) < 12 or data[:4] != MAGIC:
        raise SnapshotError("magic", 0, f"expected {MAGIC!r}, got {bytes(data[:4])!r}")
    version, dim = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise SnapshotError("version", 4, f"unsupported version {version}")
    if dim not in (1, 2, 3):
        raise SnapshotError("header", 8, f"bad dimension {dim}")
    off = 12
    if len(data) < off + 4 * dim + 16:
        raise SnapshotError("crc", len(data), "file truncated inside the header")
    sizes = struct.unpack_from(f"<{dim}I", data, off)
    off += 4 * dim
    A, tau = struct.unpack_from("<dd", data, off)
    off += 16
    npts = int(np.prod(sizes))
    end = off + 8 * npts
    if len(data) != end + 4:
        where = min(len(data), end)
        raise SnapshotError("crc", where, f"expected {end + 4} bytes, file has {len(data)}")
    stored = struct.unpack_from("<I", data, end)[0]
    actual = zlib.crc32(data[:end]) & 0xFFFFFFFF
    if stored != actual:
        raise SnapshotError("crc", end, f"checksum mismatch (stored {stored:08x}, computed {actual:08x})")
    values = np.frombuffer(data, dtype="<f8", count=npts, offset=off).reshape(sizes).astype(np.float64)
    return SimState(Grid(sizes), tau, values, 0, A)


def write_snapshot(state: SimState, path: str) -> str:
    data = encode_snapshot(state)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return path


def read_snapshot(path: str) -> SimState:
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read())
