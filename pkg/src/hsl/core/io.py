"""On-disk formats.

Tensor files (``.hslt``)::

    offset  size      field
    0       4         magic b"HSLT"
    4       2         version, u16 little-endian, = 1
    6       1         dtype code: 0 = float64, 1 = uint32
    7       1         ndim
    8       8*ndim    dims, u64 little-endian each
    8+8*nd  ...       row-major payload, little-endian

Images are binary PPM (P6, maxval 255); masks and heatmaps are binary PGM
(P5, maxval 255).  Values in ``[0, 1]`` are quantized as
``round(255 * v)`` on write and read back as ``q / 255``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"HSLT"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<u4")}
_CODES = {np.dtype("float64"): 0, np.dtype("uint32"): 1}


def encode_tensor(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype not in _CODES:
        if np.issubdtype(arr.dtype, np.integer) and (arr.size == 0 or arr.min() >= 0):
            arr = arr.astype(np.uint32)
        else:
            arr = arr.astype(np.float64)
    code = _CODES[arr.dtype]
    if arr.ndim > 255:
        raise FormatError("too many dimensions")
    header = MAGIC + struct.pack("<HBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError("not an HSLT tensor (bad magic)")
    version, code, ndim = struct.unpack_from("<HBB", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported tensor version {version}")
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    end = 8 + 8 * ndim
    if len(buf) < end:
        raise FormatError("truncated tensor header")
    dims = struct.unpack_from(f"<{ndim}Q", buf, 8)
    dtype = _DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    if len(buf) != end + count * dtype.itemsize:
        raise FormatError(
            f"payload is {len(buf) - end} bytes, expected {count * dtype.itemsize}")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=end).reshape(dims)
    return arr.astype(dtype.newbyteorder("="))


def write_tensor(path: str | Path, arr: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(arr))


def read_tensor(path: str | Path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def quantize(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255).astype(np.uint8)


def _netpbm_bytes(magic: bytes, pixels: np.ndarray, width: int, height: int) -> bytes:
    return magic + f"\n{width} {height}\n255\n".encode() + pixels.tobytes()


def _parse_netpbm(buf: bytes, magic: bytes, channels: int) -> np.ndarray:
    if buf[:2] != magic:
        raise FormatError(f"expected {magic.decode()} netpbm file")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed netpbm header")
        fields.append(int(buf[start:pos]))
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FormatError("malformed netpbm header")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    n = width * height * channels
    if len(buf) - pos < n:
        raise FormatError("truncated netpbm payload")
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=pos).reshape(height, width, channels)


def encode_ppm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise FormatError(f"PPM needs a (3, H, W) image, got {img.shape}")
    q = quantize(img).transpose(1, 2, 0)
    return _netpbm_bytes(b"P6", np.ascontiguousarray(q), img.shape[2], img.shape[1])


def decode_ppm(buf: bytes) -> np.ndarray:
    return _parse_netpbm(buf, b"P6", 3).transpose(2, 0, 1).astype(np.float64) / 255.0


def encode_pgm(mask: np.ndarray) -> bytes:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise FormatError(f"PGM needs a 2-D mask, got {mask.shape}")
    return _netpbm_bytes(b"P5", quantize(mask), mask.shape[1], mask.shape[0])


def decode_pgm(buf: bytes) -> np.ndarray:
    return _parse_netpbm(buf, b"P5", 1)[:, :, 0].astype(np.float64) / 255.0


def write_image(path: str | Path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(img))


def read_image(path: str | Path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(mask))


def read_mask(path: str | Path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())
