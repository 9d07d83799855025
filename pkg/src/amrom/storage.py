"""Deterministic single-file container for arrays plus JSON metadata.

``np.savez`` embeds zip timestamps, so identical inputs produce different
bytes on different days; datasets and checkpoints here must instead be
byte-identical under identical inputs.  The format is a magic string, a
length-prefixed canonical JSON header (sorted keys), and the raw C-order
array buffers in header order.  All writes are atomic (temp file + rename).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

_MAGIC = b"AMROMBIN"
_FORMAT_VERSION = 1
_DTYPES = {"float64": "<f8", "int64": "<i8", "complex128": "<c16", "uint8": "|u1"}


class ContainerFormatError(ValueError):
    """File is not a valid container or uses an unsupported format version."""


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write ``payload`` to ``path`` via a temp file so readers never see partial files."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_container(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Serialize ``arrays`` (by sorted name) with a metadata dict to one file."""
    entries = []
    buffers = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ContainerFormatError(f"unsupported dtype {dtype!r} for array {name!r}")
        raw = arr.astype(_DTYPES[dtype], copy=False).tobytes(order="C")
        entries.append(
            {"name": name, "dtype": dtype, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        buffers.append(raw)
        offset += len(raw)
    header = {"format_version": _FORMAT_VERSION, "meta": meta, "arrays": entries}
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = _MAGIC + struct.pack("<Q", len(header_bytes)) + header_bytes + b"".join(buffers)
    atomic_write_bytes(path, payload)


def load_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back (meta, arrays) written by :func:`save_container`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ContainerFormatError(f"{path} is not a container file (bad magic)")
    (header_len,) = struct.unpack("<Q", blob[len(_MAGIC) : len(_MAGIC) + 8])
    header_start = len(_MAGIC) + 8
    try:
        header = json.loads(blob[header_start : header_start + header_len])
    except json.JSONDecodeError as exc:
        raise ContainerFormatError(f"corrupt container header in {path}") from exc
    if header.get("format_version") != _FORMAT_VERSION:
        raise ContainerFormatError(
            f"container format version {header.get('format_version')} is not supported "
            f"(expected {_FORMAT_VERSION})"
        )
    data_start = header_start + header_len
    arrays = {}
    for entry in header["arrays"]:
        start = data_start + entry["offset"]
        raw = blob[start : start + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
    return header["meta"], arrays
