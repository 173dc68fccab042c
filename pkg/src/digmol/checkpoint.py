"""Little-endian binary container used for checkpoints and fine-tuned models.

Layout::

    b"DIGM"  u32 format_version
    repeated sections:
        u32 name_length, name (utf-8), u64 payload_length, payload

Tensor payloads are ``u32 ndim``, ``ndim x u64`` dims, then raw float64 data.
Text payloads are utf-8 ``key=value`` lines in sorted key order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DIGM"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def pack_tensor(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype="<f8")
    head = struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + np.ascontiguousarray(arr).tobytes()


def unpack_tensor(payload: bytes) -> np.ndarray:
    (ndim,) = struct.unpack_from("<I", payload, 0)
    shape = struct.unpack_from(f"<{ndim}Q", payload, 4)
    offset = 4 + 8 * ndim
    count = int(np.prod(shape)) if ndim else 1
    if len(payload) - offset != 8 * count:
        raise CheckpointError("tensor payload length does not match its shape")
    return np.frombuffer(payload, dtype="<f8", offset=offset).reshape(shape).astype(np.float64)


def pack_text(fields: dict) -> bytes:
    return "".join(f"{k}={fields[k]}\n" for k in sorted(fields)).encode()


def unpack_text(payload: bytes) -> dict[str, str]:
    out = {}
    for line in payload.decode().splitlines():
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed text line {line!r}")
        out[key] = value
    return out


def encode_sections(sections: list[tuple[str, bytes]]) -> bytes:
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    for name, payload in sections:
        raw = name.encode()
        parts += [struct.pack("<I", len(raw)), raw, struct.pack("<Q", len(payload)), payload]
    return b"".join(parts)


def decode_sections(data: bytes) -> list[tuple[str, bytes]]:
    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"format version {version}, expected {FORMAT_VERSION}")
    pos = 8
    sections = []
    try:
        while pos < len(data):
            (n,) = struct.unpack_from("<I", data, pos)
            name = data[pos + 4 : pos + 4 + n].decode()
            pos += 4 + n
            (size,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            if pos + size > len(data):
                raise CheckpointError(f"section {name!r} is truncated")
            sections.append((name, data[pos : pos + size]))
            pos += size
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint") from exc
    return sections


def write_file(path, sections) -> None:
    Path(path).write_bytes(encode_sections(sections))


def read_file(path) -> list[tuple[str, bytes]]:
    return decode_sections(Path(path).read_bytes())
