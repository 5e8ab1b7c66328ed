"""Array-file reader/writer (NPY v1.0, little-endian, C-order).

Only two element types are accepted: '<f4' for tensors and '|u1' for masks.
Files with fortran_order=True, other dtypes, or other format versions are
rejected with distinct error kinds so callers can tell header problems,
element-type problems, and short payloads apart.
"""

from __future__ import annotations

import ast
import struct
from pathlib import Path

import numpy as np

from .errors import (
    ArrayFileError,
    MalformedHeaderError,
    TruncatedPayloadError,
    UnsupportedElementTypeError,
)
from .tensor import BinaryMask, Tensor

_MAGIC = b"\x93NUMPY"
_VERSION = (1, 0)
_TENSOR_DESCR = "<f4"
_MASK_DESCR = "|u1"
_HEADER_ALIGN = 64


def _format_header(descr: str, shape: tuple[int, ...]) -> bytes:
    text = "{'descr': %r, 'fortran_order': False, 'shape': %r, }" % (descr, shape)
    base = len(_MAGIC) + 2 + 2  # magic + version + header-length field
    pad = -(base + len(text) + 1) % _HEADER_ALIGN
    return (text + " " * pad + "\n").encode("latin1")


def _write_npy(path: str | Path, arr: np.ndarray, descr: str) -> None:
    header = _format_header(descr, arr.shape)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(bytes(_VERSION))
        fh.write(struct.pack("<H", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(arr, dtype=np.dtype(descr)).tobytes(order="C"))


def _read_npy(path: str | Path) -> tuple[str, np.ndarray]:
    """Parse an array file, returning (descr, array). Strictly validating."""
    raw = Path(path).read_bytes()
    if raw[:6] != _MAGIC:
        raise MalformedHeaderError(f"{path}: not an array file (bad magic bytes)")
    if len(raw) < 10:
        raise MalformedHeaderError(f"{path}: header cut short")
    version = (raw[6], raw[7])
    if version != _VERSION:
        raise MalformedHeaderError(f"{path}: unsupported format version {version}")
    (hlen,) = struct.unpack_from("<H", raw, 8)
    if len(raw) < 10 + hlen:
        raise MalformedHeaderError(f"{path}: header cut short")
    try:
        header = ast.literal_eval(raw[10 : 10 + hlen].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise MalformedHeaderError(f"{path}: header is not a dict literal: {exc}") from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise MalformedHeaderError(f"{path}: header keys must be descr/fortran_order/shape")
    if header["fortran_order"] is not False:
        raise MalformedHeaderError(f"{path}: fortran_order must be False")
    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(n, int) and n >= 0 for n in shape):
        raise MalformedHeaderError(f"{path}: bad shape entry {shape!r}")
    descr = header["descr"]
    if descr not in (_TENSOR_DESCR, _MASK_DESCR):
        raise UnsupportedElementTypeError(f"{path}: element type {descr!r} not supported")
    dtype = np.dtype(descr)
    need = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = raw[10 + hlen :]
    if len(payload) < need:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload)} bytes, shape {shape} requires {need}"
        )
    if len(payload) > need:
        raise ArrayFileError(f"{path}: {len(payload) - need} trailing bytes after payload")
    return descr, np.frombuffer(payload, dtype=dtype).reshape(shape)


def write_array_file(path: str | Path, t: Tensor) -> None:
    """Write a tensor as a float32 array file."""
    _write_npy(path, t.data, _TENSOR_DESCR)


def read_array_file(path: str | Path) -> Tensor:
    """Read a float32 array file written by :func:`write_array_file`.

    Round-trips bit-exactly. Mask files ('|u1') are rejected; use
    :func:`read_mask_file` for those.
    """
    descr, arr = _read_npy(path)
    if descr != _TENSOR_DESCR:
        raise UnsupportedElementTypeError(
            f"{path}: holds {descr!r} data, not a float tensor (read_mask_file reads masks)"
        )
    return Tensor(arr)


def write_mask_file(path: str | Path, mask: BinaryMask) -> None:
    """Write a binary mask as a '|u1' array file."""
    _write_npy(path, mask.data, _MASK_DESCR)


def read_mask_file(path: str | Path) -> BinaryMask:
    """Read a binary mask file; values must be exactly 0 or 1."""
    descr, arr = _read_npy(path)
    if descr != _MASK_DESCR:
        raise UnsupportedElementTypeError(
            f"{path}: holds {descr!r} data, not a mask (read_array_file reads tensors)"
        )
    return BinaryMask(arr)
