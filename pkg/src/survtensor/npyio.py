"""Hand-rolled npy v1.0 writer/reader for the supported output dtypes.

Layout: magic 0x93 "NUMPY", version (1, 0), little-endian uint16 header
length, then an ASCII dict header (descr, fortran_order=False, shape) padded
with spaces and a trailing newline so the data payload starts on a 64-byte
boundary, followed by raw little-endian C-order data.
"""

from __future__ import annotations

import ast
from pathlib import Path

import numpy as np

from .errors import SerializeOverflow

MAGIC = b"\x93NUMPY"

DTYPES = {
    "f32": "<f4",
    "f64": "<f8",
    "u8": "|u1",
    "i64": "<i8",
}

_INT_RANGES = {
    "u8": (0, 255),
    "i64": (-(2 ** 63), 2 ** 63 - 1),
}


def _check_castable(arr: np.ndarray, dtype: str) -> None:
    if arr.size == 0:
        return
    if dtype in ("f32", "f64"):
        finite = arr[np.isfinite(arr)] if np.issubdtype(arr.dtype, np.floating) else arr
        limit = float(np.finfo(DTYPES[dtype]).max)
        if finite.size and float(np.max(np.abs(finite))) > limit:
            raise SerializeOverflow(
                f"value exceeds {dtype} range (max magnitude {float(np.max(np.abs(finite)))!r})")
    else:
        lo, hi = _INT_RANGES[dtype]
        if np.issubdtype(arr.dtype, np.floating):
            if not np.all(np.isfinite(arr)):
                raise SerializeOverflow(f"non-finite value cannot be cast to {dtype}")
            if not np.all(arr == np.trunc(arr)):
                raise SerializeOverflow(f"fractional value cannot be cast to {dtype}")
        amin, amax = float(np.min(arr)), float(np.max(arr))
        if amin < lo or amax > hi:
            raise SerializeOverflow(f"value outside {dtype} range [{lo}, {hi}]")


def npy_bytes(array, dtype: str) -> bytes:
    """Serialise an array as npy v1.0 with the requested on-disk dtype."""
    if dtype not in DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}; expected one of {sorted(DTYPES)}")
    arr = np.asarray(array)
    _check_castable(arr, dtype)
    cast = np.ascontiguousarray(arr.astype(DTYPES[dtype], copy=False))

    header = ("{'descr': '%s', 'fortran_order': False, 'shape': %s, }"
              % (DTYPES[dtype], repr(tuple(int(d) for d in cast.shape))))
    base = len(MAGIC) + 2 + 2  # magic + version + header-length field
    pad = 64 - ((base + len(header) + 1) % 64)
    if pad == 64:
        pad = 0
    header = header + " " * pad + "\n"
    out = bytearray()
    out += MAGIC
    out += bytes((1, 0))
    out += len(header).to_bytes(2, "little")
    out += header.encode("latin1")
    assert len(out) % 64 == 0
    out += cast.tobytes()
    return bytes(out)


def write_npy(array, dtype: str, path) -> Path:
    path = Path(path)
    data = npy_bytes(array, dtype)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def read_npy(path) -> np.ndarray:
    """Read an npy v1.0 file written by write_npy (or numpy itself)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not an npy file (bad magic)")
        version = fh.read(2)
        if len(version) != 2 or version[0] != 1:
            raise ValueError(f"{path}: unsupported npy version {tuple(version)}")
        raw_len = fh.read(2)
        if len(raw_len) != 2:
            raise ValueError(f"{path}: truncated header length")
        header_len = int.from_bytes(raw_len, "little")
        header = fh.read(header_len)
        if len(header) != header_len:
            raise ValueError(f"{path}: truncated header")
        meta = ast.literal_eval(header.decode("latin1"))
        if meta.get("fortran_order"):
            raise ValueError(f"{path}: fortran-ordered arrays are not supported")
        dtype = np.dtype(meta["descr"])
        shape = tuple(meta["shape"])
        expected = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
        data = fh.read()
        if len(data) != expected:
            raise ValueError(f"{path}: payload is {len(data)} bytes, expected {expected}")
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()
