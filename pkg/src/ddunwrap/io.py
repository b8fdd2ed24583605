"""Binary wrapped-field files and atomic result writing.

Layout (little endian)::

    offset  size  field
    0       4     magic b"PHWR"
    4       2     version (u16, currently 1)
    6       4     rows (u32)
    10      4     cols (u32)
    14      2     flags (u16); bit 0 set when truth_n follows psi
    16      4*R*C psi as float32, row-major
    ...     4*R*C truth_n as int32, row-major (only with flag bit 0)
    ...     rest  UTF-8 JSON metadata trailer (noise_variance, shape, seed, ...)
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .phase import WrappedField

MAGIC = b"PHWR"
VERSION = 1
HEADER = struct.Struct("<4sHIIH")
FLAG_TRUTH = 1


class FieldFormatError(ValueError):
    """Malformed field file; the message names the byte offset of the problem."""


def encode_field(f: WrappedField) -> bytes:
    psi32 = f.psi.astype("<f4")
    if not np.array_equal(psi32.astype(np.float64), f.psi):
        raise ValueError("psi is not exactly representable as float32")
    flags = FLAG_TRUTH if f.truth_n is not None else 0
    parts = [HEADER.pack(MAGIC, VERSION, f.rows, f.cols, flags), psi32.tobytes()]
    if f.truth_n is not None:
        parts.append(f.truth_n.astype("<i4").tobytes())
    meta = dict(f.meta)
    meta["noise_variance"] = f.noise_variance
    parts.append(json.dumps(meta, sort_keys=True).encode("utf-8"))
    return b"".join(parts)


def decode_field(data: bytes) -> WrappedField:
    if len(data) < HEADER.size:
        raise FieldFormatError(f"offset 0: file has {len(data)} bytes, header needs {HEADER.size}")
    magic, version, rows, cols, flags = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FieldFormatError(f"offset 0: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FieldFormatError(f"offset 4: unsupported version {version}")
    if rows < 2 or cols < 2:
        raise FieldFormatError(f"offset 6: grid {rows}x{cols} is smaller than 2x2")
    if flags & ~FLAG_TRUTH:
        raise FieldFormatError(f"offset 14: unknown flag bits {flags:#06x}")
    n = rows * cols
    off = HEADER.size
    need = off + 4 * n * (2 if flags & FLAG_TRUTH else 1)
    if len(data) < need:
        raise FieldFormatError(f"offset {len(data)}: truncated payload, expected at least {need} bytes")
    psi = np.frombuffer(data, "<f4", n, off).astype(np.float64).reshape(rows, cols)
    off += 4 * n
    truth = None
    if flags & FLAG_TRUTH:
        truth = np.frombuffer(data, "<i4", n, off).astype(np.int64).reshape(rows, cols)
        off += 4 * n
    try:
        meta = json.loads(data[off:].decode("utf-8")) if off < len(data) else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FieldFormatError(f"offset {off}: metadata trailer is not valid JSON ({exc})") from exc
    if not isinstance(meta, dict):
        raise FieldFormatError(f"offset {off}: metadata trailer must be a JSON object")
    bad = np.flatnonzero(~((psi >= -np.pi) & (psi < np.pi)))
    if len(bad):
        raise FieldFormatError(f"offset {HEADER.size + 4 * int(bad[0])}: psi value outside [-pi, pi)")
    noise = float(meta.pop("noise_variance", 0.0))
    return WrappedField(psi, truth, noise, meta)


def atomic_write(path, data) -> Path:
    """Write bytes or text to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_field(path, f: WrappedField) -> Path:
    return atomic_write(path, encode_field(f))


def read_field(path) -> WrappedField:
    with open(path, "rb") as fh:
        return decode_field(fh.read())
