"""Deterministic on-disk artifact format.

A file is: magic, 8-byte little-endian header length, UTF-8 JSON header,
then the raw float64/int64 payload of every array concatenated in header
order.  The header carries a sha256 digest of the payload so truncated or
corrupted files are rejected on load.  Re-saving identical content yields
byte-identical files (no timestamps), which the determinism checks rely on.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Any

import numpy as np

MAGIC = b"LEPUS\x01"
FORMAT_VERSION = 1


class ArtifactError(Exception):
    """Raised when an artifact file is missing, corrupt, or mismatched."""


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_of(obj) -> str:
    """Stable digest of a JSON-serializable object (configs, metadata)."""
    return sha256_hex(_canonical_json(obj))


def arrays_digest(arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        h.update(name.encode())
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def save_artifact(path, kind: str, arrays: dict[str, np.ndarray],
                  meta: dict[str, Any] | None = None) -> None:
    names = list(arrays)
    payload = b"".join(np.ascontiguousarray(arrays[n]).tobytes() for n in names)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "arrays": [
            {"name": n, "dtype": str(arrays[n].dtype), "shape": list(arrays[n].shape)}
            for n in names
        ],
        "meta": meta or {},
        "payload_sha256": sha256_hex(payload),
    }
    hbytes = _canonical_json(header)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(len(hbytes).to_bytes(8, "little"))
        f.write(hbytes)
        f.write(payload)
    os.replace(tmp, path)


def load_artifact(path, expect_kind: str | None = None):
    """Returns (arrays, meta). Verifies magic, digest, and optionally kind."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise ArtifactError(f"cannot read artifact {path}: {e}") from e
    if raw[: len(MAGIC)] != MAGIC:
        raise ArtifactError(f"{path}: not an artifact file (bad magic)")
    off = len(MAGIC)
    hlen = int.from_bytes(raw[off:off + 8], "little")
    off += 8
    if off + hlen > len(raw):
        raise ArtifactError(f"{path}: truncated header")
    try:
        header = json.loads(raw[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArtifactError(f"{path}: corrupt header: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise ArtifactError(f"{path}: unsupported format version "
                            f"{header.get('format_version')}")
    if expect_kind is not None and header.get("kind") != expect_kind:
        raise ArtifactError(f"{path}: expected kind {expect_kind!r}, "
                            f"found {header.get('kind')!r}")
    payload = raw[off + hlen:]
    if sha256_hex(payload) != header["payload_sha256"]:
        raise ArtifactError(f"{path}: payload digest mismatch (truncated or corrupt)")
    arrays = {}
    pos = 0
    for spec in header["arrays"]:
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape)) if shape else dtype.itemsize
        n = int(np.prod(shape)) if shape else 1
        nbytes = dtype.itemsize * n
        if pos + nbytes > len(payload):
            raise ArtifactError(f"{path}: truncated payload at array {spec['name']}")
        arrays[spec["name"]] = np.frombuffer(
            payload[pos:pos + nbytes], dtype=dtype).reshape(shape).copy()
        pos += nbytes
    if pos != len(payload):
        raise ArtifactError(f"{path}: trailing bytes in payload")
    return arrays, header["meta"]


def file_digest(path) -> str:
    with open(path, "rb") as f:
        return sha256_hex(f.read())
