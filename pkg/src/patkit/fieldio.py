"""Binary field container with a JSON sidecar.

Layout (all little-endian): magic ``PATF``, u32 version, u8 dtype code
(1 = binary32, 2 = binary64), u8 ndim, ndim u64 dims, then the raw payload in
row-major order (last index fastest).  A sidecar ``<path>.json`` carries
spacing, units and provenance; the payload stays byte-reproducible.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PATF"
VERSION = 1

_DTYPE_TO_CODE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_CODE_TO_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


class FieldFileError(ValueError):
    pass


def write_field(path, array: np.ndarray, spacing=None, units: str | None = None,
                provenance: dict | None = None) -> Path:
    """Write an array as a field file; returns the path written."""
    path = Path(path)
    array = np.asarray(array)
    if array.dtype not in _DTYPE_TO_CODE:
        raise FieldFileError(
            f"unsupported dtype {array.dtype}; use float32 or float64"
        )
    code = _DTYPE_TO_CODE[array.dtype]
    header = struct.pack("<4sIBB", MAGIC, VERSION, code, array.ndim)
    dims = np.asarray(array.shape, dtype="<u8").tobytes()
    payload = np.ascontiguousarray(array).astype(_CODE_TO_DTYPE[code]).tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(payload)
    sidecar = {}
    if spacing is not None:
        sidecar["spacing"] = list(spacing)
    if units is not None:
        sidecar["units"] = units
    if provenance is not None:
        sidecar["provenance"] = provenance
    if sidecar:
        with open(path.with_name(path.name + ".json"), "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return path


def read_field(path) -> tuple[np.ndarray, dict]:
    """Read a field file; returns (array, sidecar metadata dict)."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(10)
        if len(head) < 10:
            raise FieldFileError(f"{path}: truncated header")
        magic, version, code, ndim = struct.unpack("<4sIBB", head)
        if magic != MAGIC:
            raise FieldFileError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise FieldFileError(f"{path}: unsupported version {version}")
        if code not in _CODE_TO_DTYPE:
            raise FieldFileError(f"{path}: unknown dtype code {code}")
        dims_raw = fh.read(8 * ndim)
        if len(dims_raw) < 8 * ndim:
            raise FieldFileError(f"{path}: truncated dims")
        dims = tuple(int(d) for d in np.frombuffer(dims_raw, dtype="<u8"))
        dtype = _CODE_TO_DTYPE[code]
        expected = int(np.prod(dims)) * dtype.itemsize
        payload = fh.read()
        if len(payload) != expected:
            raise FieldFileError(
                f"{path}: payload is {len(payload)} bytes, expected {expected}"
            )
    array = np.frombuffer(payload, dtype=dtype).reshape(dims)
    array = array.astype(dtype.newbyteorder("="))
    meta = {}
    sidecar = path.with_name(path.name + ".json")
    if sidecar.exists():
        with open(sidecar) as fh:
            meta = json.load(fh)
    return array, meta


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
