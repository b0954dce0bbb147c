"""Binary field files.

Layout (little-endian): magic ``b"GFE1"``, u8 kind, u8 reserved, u16 version,
u32 N, u64 seed, i32 k_lo, i32 k_hi, then ``N*N`` float64 values row-major.
GFF fields carry ``k_lo = k_hi = -1``.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..samplers import Field, FieldKind

MAGIC = b"GFE1"
VERSION = 1
HEADER = struct.Struct("<4sBBHIQii")


class FieldFormatError(ValueError):
    pass


class BadMagicError(FieldFormatError):
    pass


class VersionMismatchError(FieldFormatError):
    pass


class TruncatedPayloadError(FieldFormatError):
    pass


def encode_field(f: Field) -> bytes:
    lo, hi = f.level_range if f.level_range is not None else (-1, -1)
    head = HEADER.pack(MAGIC, int(f.kind), 0, VERSION, f.N, f.seed & ((1 << 64) - 1), lo, hi)
    return head + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def decode_field(buf: bytes) -> Field:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError("bad magic: not a GFE1 field file")
    if len(buf) < HEADER.size:
        raise TruncatedPayloadError("truncated payload: header incomplete")
    magic, kind, _, version, N, seed, lo, hi = HEADER.unpack_from(buf)
    if version != VERSION:
        raise VersionMismatchError(f"version mismatch: file has {version}, expected {VERSION}")
    need = HEADER.size + 8 * N * N
    if len(buf) < need:
        raise TruncatedPayloadError(f"truncated payload: {len(buf)} bytes, expected {need}")
    if len(buf) > need:
        raise FieldFormatError(f"trailing data: {len(buf) - need} extra bytes")
    values = np.frombuffer(buf, dtype="<f8", count=N * N, offset=HEADER.size).reshape(N, N).astype(np.float64)
    level_range = None if (lo, hi) == (-1, -1) else (lo, hi)
    return Field(FieldKind(kind), N, values, seed, level_range)


def write_field(path, f: Field) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(encode_field(f))
    os.replace(tmp, path)


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        return decode_field(fh.read())
