"""Flat matrix files: one JSON header line, then raw little-endian IEEE-754.

The header carries exactly rows, cols, dtype ("f64" or "f32") and order
("row-major").  Payload length must match the header; round-trips are
bit-exact because values are never re-encoded through text.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import QmxFormatError, ShapeError

_DTYPES = {"f64": np.dtype("<f8"), "f32": np.dtype("<f4")}
_NAMES = {np.dtype(np.float64): "f64", np.dtype(np.float32): "f32"}


def write_qmx(path, arr: np.ndarray, dtype: str | None = None) -> None:
    """Write a 2-D array; dtype defaults to the array's own precision."""
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ShapeError(f"qmx stores 2-D matrices, got shape {arr.shape}")
    if dtype is None:
        dtype = _NAMES.get(arr.dtype, "f64")
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r} (use 'f64' or 'f32')")
    header = {
        "rows": int(arr.shape[0]),
        "cols": int(arr.shape[1]),
        "dtype": dtype,
        "order": "row-major",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("ascii"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes())


def read_qmx(path) -> np.ndarray:
    """Read a matrix back; the dtype is whatever the file declares."""
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise QmxFormatError(f"{path}: no header line")
    try:
        header = json.loads(raw[:nl].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise QmxFormatError(f"{path}: malformed header ({exc})") from exc
    if not isinstance(header, dict) or set(header) != {"rows", "cols", "dtype", "order"}:
        raise QmxFormatError(f"{path}: header must carry exactly rows/cols/dtype/order")
    if header["order"] != "row-major":
        raise QmxFormatError(f"{path}: unsupported order {header['order']!r}")
    if header["dtype"] not in _DTYPES:
        raise QmxFormatError(f"{path}: unsupported dtype {header['dtype']!r}")
    rows, cols = header["rows"], header["cols"]
    if not (isinstance(rows, int) and isinstance(cols, int)) or rows < 0 or cols < 0:
        raise QmxFormatError(f"{path}: bad dimensions {rows!r} x {cols!r}")
    dt = _DTYPES[header["dtype"]]
    payload = raw[nl + 1 :]
    expect = rows * cols * dt.itemsize
    if len(payload) != expect:
        raise QmxFormatError(
            f"{path}: payload is {len(payload)} bytes, header {rows}x{cols} {header['dtype']} needs {expect}"
        )
    data = np.frombuffer(payload, dtype=dt).reshape(rows, cols)
    return data.astype(dt.newbyteorder("="), copy=True)
