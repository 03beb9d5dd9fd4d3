"""Little-endian binary primitives for the .afpe/.afpw/.afpi/.afph file formats."""

from __future__ import annotations

import os
import struct
from typing import BinaryIO

import numpy as np

from .errors import ParseError


def open_for_read(path: str | os.PathLike) -> BinaryIO:
    """Open a binary artifact for reading, mapping OS errors to ParseError."""
    try:
        return open(path, "rb")
    except OSError as exc:
        raise ParseError(f"{path}: cannot read: {exc}") from exc


def write_u16(fh: BinaryIO, value: int) -> None:
    fh.write(struct.pack("<H", value))


def write_u32(fh: BinaryIO, value: int) -> None:
    fh.write(struct.pack("<I", value))


def write_u64(fh: BinaryIO, value: int) -> None:
    fh.write(struct.pack("<Q", value))


def write_f32(fh: BinaryIO, value: float) -> None:
    fh.write(struct.pack("<f", value))


def write_f32_array(fh: BinaryIO, arr: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ParseError(f"truncated file: expected {n} bytes for {what}, got {len(buf)}")
    return buf


def read_u16(fh: BinaryIO, what: str = "u16") -> int:
    return struct.unpack("<H", _read_exact(fh, 2, what))[0]


def read_u32(fh: BinaryIO, what: str = "u32") -> int:
    return struct.unpack("<I", _read_exact(fh, 4, what))[0]


def read_u64(fh: BinaryIO, what: str = "u64") -> int:
    return struct.unpack("<Q", _read_exact(fh, 8, what))[0]


def read_f32(fh: BinaryIO, what: str = "f32") -> float:
    return struct.unpack("<f", _read_exact(fh, 4, what))[0]


def read_f32_array(fh: BinaryIO, count: int, what: str = "f32 payload") -> np.ndarray:
    buf = _read_exact(fh, count * 4, what)
    return np.frombuffer(buf, dtype="<f4").copy()


def check_magic(fh: BinaryIO, magic: bytes) -> None:
    got = fh.read(len(magic))
    if got != magic:
        raise ParseError(f"bad magic: expected {magic!r}, got {got!r}")


def check_version(fh: BinaryIO, expected: int) -> None:
    got = read_u16(fh, "version")
    if got != expected:
        raise ParseError(f"unsupported format version {got} (expected {expected})")


def write_string(fh: BinaryIO, text: str) -> None:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ParseError(f"string too long for u16 length prefix ({len(raw)} bytes)")
    write_u16(fh, len(raw))
    fh.write(raw)


def read_string(fh: BinaryIO, what: str = "string") -> str:
    n = read_u16(fh, f"{what} length")
    raw = _read_exact(fh, n, what)
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"invalid UTF-8 in {what}") from exc


def write_string_table(fh: BinaryIO, strings: list[str]) -> None:
    write_u32(fh, len(strings))
    for s in strings:
        write_string(fh, s)


def read_string_table(fh: BinaryIO) -> list[str]:
    n = read_u32(fh, "string table size")
    return [read_string(fh, f"string table entry {i}") for i in range(n)]
