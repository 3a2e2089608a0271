"""File codecs: the UET tensor container, binary PGM and sweep CSV.

UET layout (all little-endian)::

    b"UET1" | dtype u8 | rank u8 | rank x u32 dims | row-major payload

dtype codes: 0 = u8, 1 = i32, 2 = f32, 3 = f64.
"""
from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .patch_eval import CONVENTIONS, PatchConfusion, PatchMetrics, SweepCurve, SweepPoint
from .tensors import ClassMap, InvariantError, ProbStack, ScalarMap, check

MAGIC = b"UET1"
DTYPES = {0: np.dtype("<u1"), 1: np.dtype("<i4"), 2: np.dtype("<f4"), 3: np.dtype("<f8")}
DTYPE_CODES = {dt: code for code, dt in DTYPES.items()}
DTYPE_NAMES = {"u8": 0, "i32": 1, "f32": 2, "f64": 3}


class TensorFormatError(ValueError):
    """Base class for malformed tensor files."""


class BadMagicError(TensorFormatError):
    pass


class TruncatedError(TensorFormatError):
    pass


class DtypeError(TensorFormatError):
    pass


class ShapeError(TensorFormatError):
    pass


# -- UET ----------------------------------------------------------------------

def encode_uet(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    dtype = array.dtype.newbyteorder("<")
    if dtype not in DTYPE_CODES:
        raise DtypeError(f"dtype {array.dtype} has no UET code")
    if array.ndim > 255 or array.size == 0:
        raise ShapeError(f"cannot encode array of shape {array.shape}")
    header = MAGIC + struct.pack("<BB", DTYPE_CODES[dtype], array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array, dtype=dtype).tobytes()


def decode_uet(data: bytes) -> np.ndarray:
    """Parse a UET byte string into a new array of the stored dtype."""
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r} at byte 0 (expected {MAGIC!r})")
    if len(data) < 6:
        raise TruncatedError(f"header truncated at byte {len(data)}")
    code, rank = data[4], data[5]
    if code not in DTYPES:
        raise DtypeError(f"unknown dtype code {code} at byte 4")
    dims_end = 6 + 4 * rank
    if len(data) < dims_end:
        raise TruncatedError(f"dimension list truncated at byte {len(data)} (needs {dims_end})")
    shape = struct.unpack(f"<{rank}I", data[6:dims_end])
    dtype = DTYPES[code]
    expected = dims_end + int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(data) < expected:
        raise TruncatedError(
            f"payload truncated at byte {len(data)} (shape {shape} needs {expected} bytes)")
    if len(data) > expected:
        raise ShapeError(
            f"{len(data) - expected} trailing bytes after byte {expected} for shape {shape}")
    return np.frombuffer(data, dtype=dtype, offset=dims_end).reshape(shape).copy()


def write_uet(array: np.ndarray, path) -> None:
    Path(path).write_bytes(encode_uet(array))


def read_uet(path) -> np.ndarray:
    return decode_uet(Path(path).read_bytes())


# -- PGM ----------------------------------------------------------------------

def encode_pgm(array: np.ndarray, maxval: int = 255) -> bytes:
    array = np.asarray(array)
    if array.ndim != 2 or array.size == 0:
        raise ShapeError(f"PGM needs a non-empty 2-D array, got shape {array.shape}")
    if not 1 <= maxval <= 65535:
        raise ValueError(f"maxval must lie in [1, 65535], got {maxval}")
    if array.min() < 0 or array.max() > maxval:
        raise ValueError(f"pixel values must lie in [0, {maxval}]")
    dtype = ">u1" if maxval < 256 else ">u2"
    h, w = array.shape
    return f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + array.astype(dtype).tobytes()


def decode_pgm(data: bytes):
    """Return ``(pixels, maxval)`` from a binary (P5) PGM."""
    if data[:2] != b"P5":
        raise BadMagicError(f"bad magic {data[:2]!r} at byte 0 (expected b'P5')")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise TruncatedError(f"PGM header malformed at byte {pos}")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace byte before the raster
    width, height, maxval = fields
    if not 1 <= maxval <= 65535 or width < 1 or height < 1:
        raise ShapeError(f"invalid PGM header {width}x{height} maxval {maxval}")
    dtype = np.dtype(">u1" if maxval < 256 else ">u2")
    expected = pos + width * height * dtype.itemsize
    if len(data) < expected:
        raise TruncatedError(f"PGM raster truncated at byte {len(data)} (needs {expected})")
    pixels = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return pixels.reshape(height, width).astype(np.int64), maxval


def write_grid_pgm(grid: np.ndarray, path) -> None:
    """Binary patch grid as a PGM: white (255) for True cells, black otherwise."""
    Path(path).write_bytes(encode_pgm(np.where(np.asarray(grid, dtype=bool), 255, 0)))


# -- typed tensors ------------------------------------------------------------

KINDS = ("class", "prob", "scalar")


def _is_pgm(data: bytes) -> bool:
    return data[:2] == b"P5"


def read_tensor(path, kind: str = None, class_count: int = None, ignore_id: int = None):
    """Load a ClassMap, ProbStack or ScalarMap from a UET or P5 PGM file.

    ``kind`` is inferred when omitted: rank-4 -> ProbStack, integer rank-2 ->
    ClassMap, float rank-2 -> ScalarMap; PGM defaults to ClassMap. ClassMaps
    without an explicit ``class_count`` take ``max(non-ignored id) + 1``.
    The loaded value is validated; failures raise ``InvariantError``.
    """
    data = Path(path).read_bytes()
    if kind is not None and kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if _is_pgm(data):
        pixels, maxval = decode_pgm(data)
        kind = kind or "class"
        if kind == "prob":
            raise DtypeError("a PGM cannot hold a probability stack")
        if kind == "scalar":
            return check(ScalarMap(pixels / maxval))
        return _class_map(pixels, class_count, ignore_id)
    array = decode_uet(data)
    is_int = np.issubdtype(array.dtype, np.integer)
    if kind is None:
        kind = "prob" if array.ndim == 4 else ("class" if is_int else "scalar")
    if kind == "prob":
        if array.ndim not in (3, 4):
            raise ShapeError(f"probability stack needs rank 4, file has shape {array.shape}")
        if is_int:
            raise DtypeError(f"probability stack needs a float dtype, file has {array.dtype}")
        return check(ProbStack(array))
    if array.ndim != 2:
        raise ShapeError(f"{kind} map needs rank 2, file has shape {array.shape}")
    if kind == "scalar":
        if is_int:
            raise DtypeError(f"scalar map needs a float dtype, file has {array.dtype}")
        return check(ScalarMap(array))
    if not is_int:
        raise DtypeError(f"class map needs an integer dtype, file has {array.dtype}")
    return _class_map(array, class_count, ignore_id)


def _class_map(values, class_count, ignore_id) -> ClassMap:
    values = np.asarray(values, dtype=np.int64)
    if class_count is None:
        kept = values if ignore_id is None else values[values != ignore_id]
        class_count = max(2, int(kept.max()) + 1) if kept.size else 2
    return check(ClassMap(values, class_count, ignore_id))


def write_tensor(value, path, dtype: str = None) -> None:
    """Write a ClassMap, ProbStack or ScalarMap as UET.

    ClassMaps use u8 when every value fits, else i32; real-valued tensors use
    f64 unless ``dtype="f32"``.
    """
    if isinstance(value, ClassMap):
        v = value.values
        if v.size == 0:
            raise ShapeError(f"refusing to write empty class map {v.shape}")
        if dtype is None:
            dtype = "u8" if v.min() >= 0 and v.max() <= 255 else "i32"
        if dtype not in ("u8", "i32"):
            raise DtypeError(f"class map cannot be stored as {dtype}")
    elif isinstance(value, (ProbStack, ScalarMap)):
        v = value.values
        if v.size == 0:
            raise ShapeError(f"refusing to write empty tensor {v.shape}")
        dtype = dtype or "f64"
        if dtype not in ("f32", "f64"):
            raise DtypeError(f"real tensor cannot be stored as {dtype}")
    else:
        raise TypeError(f"cannot write {type(value).__name__}")
    write_uet(np.asarray(v).astype(DTYPES[DTYPE_NAMES[dtype]]), path)


# -- sweep CSV ----------------------------------------------------------------

CSV_HEADER = ("t", "u_th", "n_ac", "n_au", "n_ic", "n_iu",
              "p_acc_given_cert", "p_unc_given_inacc", "pavpu")


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def sweep_to_csv(curve: SweepCurve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for p in curve:
        writer.writerow([_fmt(p.t), _fmt(p.u_th), *p.confusion.counts,
                         *(_fmt(m) for m in p.metrics)])
    return buf.getvalue()


def sweep_from_csv(text: str) -> SweepCurve:
    """Parse CSV written by :func:`sweep_to_csv`; empty metric fields become ``None``."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"sweep CSV must start with header {','.join(CSV_HEADER)}")
    points = []
    for row in rows[1:]:
        t, u_th, *counts = row[:6]
        metrics = PatchMetrics(*(float(x) if x else None for x in row[6:9]))
        points.append(SweepPoint(float(t), float(u_th),
                                 PatchConfusion(*(int(n) for n in counts)), metrics))
    return SweepCurve(tuple(points), dict(CONVENTIONS))


__all__ = [
    "BadMagicError", "DtypeError", "InvariantError", "ShapeError", "TensorFormatError",
    "TruncatedError", "decode_pgm", "decode_uet", "encode_pgm", "encode_uet", "read_tensor",
    "read_uet", "sweep_from_csv", "sweep_to_csv", "write_grid_pgm", "write_tensor", "write_uet",
]
