"""Minimal reader for MAT version-5 files: real numeric arrays, plain or zlib-compressed."""
from __future__ import annotations

import re
import struct
import zlib
from dataclasses import dataclass

import numpy as np


class MatFormatError(ValueError):
    """Malformed or truncated MAT container."""


class MatVariableError(KeyError):
    """Requested variable is not in the file."""


class MatUnsupportedError(ValueError):
    """The variable uses a MAT feature this reader does not cover."""


MI_INT8, MI_UINT8, MI_INT16, MI_UINT16, MI_INT32, MI_UINT32 = 1, 2, 3, 4, 5, 6
MI_SINGLE, MI_DOUBLE, MI_INT64, MI_UINT64 = 7, 9, 12, 13
MI_MATRIX, MI_COMPRESSED = 14, 15
MI_UTF8, MI_UTF16, MI_UTF32 = 16, 17, 18

_NUMERIC = {
    MI_INT8: "i1", MI_UINT8: "u1", MI_INT16: "i2", MI_UINT16: "u2",
    MI_INT32: "i4", MI_UINT32: "u4", MI_SINGLE: "f4", MI_DOUBLE: "f8",
    MI_INT64: "i8", MI_UINT64: "u8",
}

MX_CELL, MX_STRUCT, MX_OBJECT, MX_CHAR, MX_SPARSE = 1, 2, 3, 4, 5
_MX_NUMERIC = set(range(6, 16))
_MX_NAMES = {MX_CELL: "cell", MX_STRUCT: "struct", MX_OBJECT: "object",
             MX_CHAR: "char", MX_SPARSE: "sparse"}
_COMPLEX_FLAG = 0x0800


@dataclass
class MatVariable:
    name: str
    mx_class: int
    dims: tuple
    data: np.ndarray | None = None
    complex: bool = False

    @property
    def supported(self) -> bool:
        return self.data is not None


class _Reader:
    def __init__(self, buf: bytes, endian: str, where: str):
        self.buf = buf
        self.pos = 0
        self.e = endian
        self.where = where

    def at_end(self) -> bool:
        return self.pos >= len(self.buf)

    def tag(self):
        if self.pos + 8 > len(self.buf):
            raise MatFormatError(f"{self.where}: truncated element tag at byte {self.pos}")
        w0, w1 = struct.unpack_from(self.e + "II", self.buf, self.pos)
        if w0 >> 16:
            # small data element: type and size share the first word
            dtype, nbytes = w0 & 0xFFFF, w0 >> 16
            data = self.buf[self.pos + 4:self.pos + 4 + nbytes]
            self.pos += 8
            return dtype, data
        dtype, nbytes = w0, w1
        start = self.pos + 8
        end = start + nbytes
        if end > len(self.buf):
            raise MatFormatError(f"{self.where}: element of {nbytes} bytes runs past end of data")
        data = self.buf[start:end]
        self.pos = end if dtype == MI_COMPRESSED else start + ((nbytes + 7) // 8) * 8
        return dtype, data

    def numeric(self):
        dtype, data = self.tag()
        if dtype not in _NUMERIC:
            raise MatFormatError(f"{self.where}: expected numeric subelement, got type {dtype}")
        return np.frombuffer(data, dtype=np.dtype(_NUMERIC[dtype]).newbyteorder(self.e))


def _parse_matrix(payload: bytes, endian: str, where: str) -> MatVariable | None:
    if not payload:
        return None
    r = _Reader(payload, endian, where)
    flags = r.numeric()
    if flags.size < 2:
        raise MatFormatError(f"{where}: bad array flags")
    mx_class = int(flags[0]) & 0xFF
    is_complex = bool(int(flags[0]) & _COMPLEX_FLAG)
    dims = tuple(int(d) for d in r.numeric())
    dtype, name_bytes = r.tag()
    name = bytes(name_bytes).decode("latin-1")
    var = MatVariable(name, mx_class, dims, complex=is_complex)
    if mx_class not in _MX_NUMERIC:
        return var
    real = r.numeric().astype(np.float64)
    count = int(np.prod(dims)) if dims else 0
    if real.size != count:
        raise MatFormatError(f"{where}: variable {name!r} holds {real.size} values, dims say {count}")
    if is_complex:
        return var
    var.data = real.reshape(dims, order="F") if dims else real
    return var


def _elements(buf: bytes, endian: str, where: str):
    r = _Reader(buf, endian, where)
    while not r.at_end():
        if len(buf) - r.pos < 8:
            raise MatFormatError(f"{where}: trailing {len(buf) - r.pos} bytes")
        dtype, data = r.tag()
        if dtype == MI_COMPRESSED:
            try:
                inner = zlib.decompress(bytes(data))
            except zlib.error as exc:
                raise MatFormatError(f"{where}: corrupt compressed element ({exc})") from exc
            yield from _elements(inner, endian, where)
        elif dtype == MI_MATRIX:
            var = _parse_matrix(data, endian, where)
            if var is not None:
                yield var


def load_variables(path) -> dict:
    """Parse every top-level variable; unsupported ones keep ``data=None``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    where = str(path)
    if len(buf) < 128:
        raise MatFormatError(f"{where}: file shorter than the 128-byte MAT header")
    indicator = buf[126:128]
    if indicator == b"IM":
        endian = "<"
    elif indicator == b"MI":
        endian = ">"
    else:
        raise MatFormatError(f"{where}: missing MAT-5 endian indicator")
    (version,) = struct.unpack_from(endian + "H", buf, 124)
    if version != 0x0100:
        raise MatFormatError(f"{where}: unsupported MAT version 0x{version:04x}")
    out = {}
    for var in _elements(buf[128:], endian, where):
        out.setdefault(var.name, var)
    return out


def read_vector(path, pattern: str) -> tuple:
    """First variable whose name matches regex ``pattern``, as a float64 vector."""
    variables = load_variables(path)
    rx = re.compile(pattern)
    matches = [v for v in variables.values() if rx.search(v.name)]
    if not matches:
        raise MatVariableError(f"{path}: no variable matches {pattern!r} "
                               f"(have {sorted(variables)})")
    var = matches[0]
    if var.data is None:
        kind = _MX_NAMES.get(var.mx_class, "complex" if var.complex else f"class {var.mx_class}")
        raise MatUnsupportedError(f"{path}: variable {var.name!r} is {kind}, not a real numeric array")
    dims = [d for d in var.data.shape if d != 1]
    if len(dims) > 1:
        raise MatUnsupportedError(f"{path}: variable {var.name!r} has shape {var.data.shape}, not a vector")
    return var.name, var.data.ravel(order="F")
