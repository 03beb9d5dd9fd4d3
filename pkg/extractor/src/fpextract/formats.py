"""Writers and readers for the .afpe / .afpw binary interchange formats.

These are the only artifacts this package shares with the downstream matching
engine, so the byte layouts are load-bearing:

.afpe (frame embeddings), little-endian throughout:
    bytes 0-3   magic ASCII "AFPE"
    bytes 4-5   version u16 (= 1)
    bytes 6-9   dim u32
    bytes 10-13 frame_count u32
    bytes 14-17 hop_seconds f32
    bytes 18-21 window_seconds f32
    bytes 22-23 track_id byte length u16, then track_id UTF-8
    then frame_count x dim f32, row-major

.afpw (projection weights):
    magic "AFPW", version u16, d_in/d_h/d_out u32,
    then W1 (d_h x d_in, row-major), b1, W2 (d_out x d_h, row-major), b2 as f32.

Writes are atomic: content goes to a temp file in the destination directory
which is then renamed over the target, so a concurrent reader never sees a
partial file.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

AFPE_MAGIC = b"AFPE"
AFPW_MAGIC = b"AFPW"
FORMAT_VERSION = 1


@dataclass
class EmbeddingFile:
    """Decoded .afpe payload."""

    track_id: str
    hop_seconds: float
    window_seconds: float
    data: np.ndarray  # [frame_count, dim] float32


@dataclass
class WeightsFile:
    """Decoded .afpw payload: z = W2 @ elu(W1 @ x + b1) + b2."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def d_in(self) -> int:
        return self.W1.shape[1]

    @property
    def d_h(self) -> int:
        return self.W1.shape[0]

    @property
    def d_out(self) -> int:
        return self.W2.shape[0]


def _atomic_write(path: str | os.PathLike, payload: bytes) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp_name, target)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def write_embeddings_file(path: str | os.PathLike, track_id: str, data: np.ndarray,
                          hop_seconds: float, window_seconds: float) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2:
        raise FormatError(f"embedding data must be 2-D, got shape {data.shape}")
    if not np.isfinite(data).all():
        raise FormatError("embedding data contains non-finite values")
    if hop_seconds <= 0 or window_seconds <= 0:
        raise FormatError("hop_seconds and window_seconds must be positive")
    raw_id = track_id.encode("utf-8")
    if len(raw_id) > 0xFFFF:
        raise FormatError(f"track_id longer than u16 length prefix ({len(raw_id)} bytes)")
    frame_count, dim = data.shape
    header = (
        AFPE_MAGIC
        + struct.pack("<H", FORMAT_VERSION)
        + struct.pack("<II", dim, frame_count)
        + struct.pack("<ff", hop_seconds, window_seconds)
        + struct.pack("<H", len(raw_id))
        + raw_id
    )
    _atomic_write(path, header + data.tobytes())


def read_embeddings_file(path: str | os.PathLike) -> EmbeddingFile:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read: {exc}") from exc
    if blob[:4] != AFPE_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {AFPE_MAGIC!r}")
    if len(blob) < 24:
        raise FormatError(f"{path}: truncated header")
    version, = struct.unpack_from("<H", blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    dim, frame_count = struct.unpack_from("<II", blob, 6)
    hop_seconds, window_seconds = struct.unpack_from("<ff", blob, 14)
    id_len, = struct.unpack_from("<H", blob, 22)
    id_end = 24 + id_len
    track_id = blob[24:id_end].decode("utf-8")
    payload = blob[id_end:]
    expected = frame_count * dim * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} "
            f"({frame_count} frames x {dim} dims)"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(frame_count, dim).copy()
    return EmbeddingFile(track_id, hop_seconds, window_seconds, data)


def write_weights_file(path: str | os.PathLike, W1: np.ndarray, b1: np.ndarray,
                       W2: np.ndarray, b2: np.ndarray) -> None:
    W1 = np.ascontiguousarray(W1, dtype="<f4")
    b1 = np.ascontiguousarray(b1, dtype="<f4")
    W2 = np.ascontiguousarray(W2, dtype="<f4")
    b2 = np.ascontiguousarray(b2, dtype="<f4")
    if W1.ndim != 2 or W2.ndim != 2 or b1.ndim != 1 or b2.ndim != 1:
        raise FormatError("weights must be 2-D matrices and 1-D biases")
    d_h, d_in = W1.shape
    d_out = W2.shape[0]
    if W2.shape[1] != d_h or b1.shape[0] != d_h or b2.shape[0] != d_out:
        raise FormatError(
            f"inconsistent shapes: W1 {W1.shape}, b1 {b1.shape}, W2 {W2.shape}, b2 {b2.shape}"
        )
    for name, arr in (("W1", W1), ("b1", b1), ("W2", W2), ("b2", b2)):
        if not np.isfinite(arr).all():
            raise FormatError(f"{name} contains non-finite values")
    payload = (
        AFPW_MAGIC
        + struct.pack("<H", FORMAT_VERSION)
        + struct.pack("<III", d_in, d_h, d_out)
        + W1.tobytes() + b1.tobytes() + W2.tobytes() + b2.tobytes()
    )
    _atomic_write(path, payload)


def read_weights_file(path: str | os.PathLike) -> WeightsFile:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read: {exc}") from exc
    if blob[:4] != AFPW_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {AFPW_MAGIC!r}")
    if len(blob) < 18:
        raise FormatError(f"{path}: truncated header")
    version, = struct.unpack_from("<H", blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    d_in, d_h, d_out = struct.unpack_from("<III", blob, 6)
    sizes = (d_h * d_in, d_h, d_out * d_h, d_out)
    expected = 18 + 4 * sum(sizes)
    if len(blob) != expected:
        raise FormatError(f"{path}: file is {len(blob)} bytes, expected {expected}")
    offset = 18
    arrays = []
    for count in sizes:
        arrays.append(np.frombuffer(blob, dtype="<f4", count=count, offset=offset).copy())
        offset += count * 4
    return WeightsFile(
        W1=arrays[0].reshape(d_h, d_in),
        b1=arrays[1],
        W2=arrays[2].reshape(d_out, d_h),
        b2=arrays[3],
    )
