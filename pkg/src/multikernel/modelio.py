"""Deterministic single-file container for model-like artifacts.

Layout: a magic line, a JSON metadata line (sorted keys), then each named
array in sorted-name order in NPY format. Bytes are a pure function of the
content, so identical runs produce identical files, and float64 payloads
round-trip exactly.
"""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import numpy as np

__all__ = ["pack", "unpack", "save", "load", "fingerprint"]

MAGIC = b"multikernel-artifact v1\n"


def pack(meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    header = {"meta": meta, "array_names": sorted(arrays)}
    buf.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
    for name in sorted(arrays):
        np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]))
    return buf.getvalue()


def unpack(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    buf = io.BytesIO(blob)
    if buf.readline() != MAGIC:
        raise ValueError("not a multikernel artifact file")
    header = json.loads(buf.readline().decode("utf-8"))
    arrays = {name: np.lib.format.read_array(buf) for name in header["array_names"]}
    return header["meta"], arrays


def save(path: Path | str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(pack(meta, arrays))


def load(path: Path | str) -> tuple[dict, dict[str, np.ndarray]]:
    return unpack(Path(path).read_bytes())


def fingerprint(meta: dict, arrays: dict[str, np.ndarray]) -> str:
    return hashlib.sha256(pack(meta, arrays)).hexdigest()[:16]
