"""Binary container for datasets, models and trajectories.

Layout, all integers little-endian::

    b"PDEF" | u32 version | u32 header length | header (UTF-8 JSON)
    | zero padding to a 64-byte boundary | payload | u32 CRC32(payload)

The header lists every array as ``{name, dtype, shape, offset, nbytes}``
with offsets relative to the start of the payload, each a multiple of 64.
Keys are sorted and no timestamps are stored, so writing the same content
twice gives identical bytes.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

MAGIC = b"PDEF"
VERSION = 1
ALIGN = 64
DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


class ContainerError(ValueError):
    pass


@dataclass
class Container:
    arrays: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.arrays[name]


def _dtype_tag(a: np.ndarray) -> str:
    if a.dtype == np.float32:
        return "f32"
    if a.dtype == np.float64:
        return "f64"
    raise ContainerError(f"unsupported dtype {a.dtype}; containers hold f32 or f64 arrays")


def _pad(n: int) -> int:
    return (-n) % ALIGN


def to_bytes(c: Container) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name in sorted(c.arrays):
        a = np.asarray(c.arrays[name])
        if a.dtype.kind in "iub":
            a = a.astype(np.float64)
        tag = _dtype_tag(a)
        raw = np.ascontiguousarray(a, dtype=DTYPES[tag]).tobytes()
        entries.append({"name": name, "dtype": tag, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw + b"\0" * _pad(len(raw)))
        offset += len(raw) + _pad(len(raw))
    payload = b"".join(chunks)
    header = json.dumps({"arrays": entries, "meta": c.meta}, sort_keys=True, separators=(",", ":"),
                        allow_nan=True).encode("utf-8")
    head = MAGIC + struct.pack("<II", VERSION, len(header)) + header
    head += b"\0" * _pad(len(head))
    return head + payload + struct.pack("<I", zlib.crc32(payload))


def from_bytes(data: bytes) -> Container:
    if len(data) < 16 or data[:4] != MAGIC:
        raise ContainerError("not a PDEF container (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    start = 12
    if start + hlen > len(data):
        raise ContainerError("truncated header")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"malformed header: {exc}") from None
    body = start + hlen + _pad(start + hlen)
    payload = data[body:-4]
    if len(data) < body + 4:
        raise ContainerError("truncated payload")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != crc:
        raise ContainerError("payload CRC32 mismatch")
    arrays = {}
    end = 0
    for e in header.get("arrays", []):
        name = e.get("name", "?")
        if e.get("dtype") not in DTYPES:
            raise ContainerError(f"array {name!r}: unsupported dtype {e.get('dtype')!r}")
        dt = DTYPES[e["dtype"]]
        shape = tuple(int(s) for s in e["shape"])
        off, nbytes = int(e["offset"]), int(e["nbytes"])
        if off % ALIGN or off < end:
            raise ContainerError(f"array {name!r}: offset {off} misaligned or overlapping")
        if nbytes != dt.itemsize * int(np.prod(shape, dtype=np.int64)):
            raise ContainerError(f"array {name!r}: byte count {nbytes} does not match shape {list(shape)}")
        if off + nbytes > len(payload):
            raise ContainerError(f"array {name!r}: extends past the payload")
        arrays[name] = np.frombuffer(payload, dtype=dt, count=nbytes // dt.itemsize, offset=off).reshape(shape).astype(dt.newbyteorder("="))
        end = off + nbytes
    return Container(arrays, header.get("meta", {}))


def write(path: Union[str, Path], c: Container) -> None:
    Path(path).write_bytes(to_bytes(c))


def read(path: Union[str, Path]) -> Container:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ContainerError(f"cannot read {path}: {exc.strerror}") from None
    return from_bytes(data)
