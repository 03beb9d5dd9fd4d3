"""Frame-level embedding storage, projection head, and fingerprint production.

An :class:`EmbeddingMatrix` holds one track's sequence of frame embeddings
together with its timing geometry.  :func:`fingerprint_frames` pushes every
frame through a two-layer ELU MLP (:func:`apply_projection`) and L2-normalizes
the result, yielding the unit vectors that all retrieval and alignment code
operates on.

File formats (bit-exact, little-endian):

``.afpe``  magic "AFPE", version u16 (=1), dim u32, frame_count u32,
           hop_seconds f32, window_seconds f32, track_id (u16 length + UTF-8),
           then frame_count*dim float32 row-major.

``.afpw``  magic "AFPW", version u16 (=1), d_in/d_h/d_out u32,
           then W1 row-major, b1, W2 row-major, b2 as float32.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from . import _binio
from .errors import DegenerateVectorError, ParseError, ShapeError

logger = logging.getLogger(__name__)

AFPE_MAGIC = b"AFPE"
AFPW_MAGIC = b"AFPW"
FORMAT_VERSION = 1

DEFAULT_WINDOW_SECONDS = 1.0
DEFAULT_HOP_SECONDS = 0.5


@dataclass
class EmbeddingMatrix:
    """One track's frame embeddings plus timing metadata.

    ``data`` is a float32 array of shape (frame_count, dim); frame ``i``
    summarizes ``window_seconds`` of audio starting at ``i * hop_seconds``.
    """

    track_id: str
    dim: int
    frame_count: int
    hop_seconds: float
    window_seconds: float
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ShapeError(f"dim must be positive, got {self.dim}")
        if self.frame_count < 0:
            raise ShapeError(f"frame_count must be non-negative, got {self.frame_count}")
        if self.hop_seconds <= 0 or self.window_seconds <= 0:
            raise ShapeError("hop_seconds and window_seconds must be positive")
        self.data = np.asarray(self.data, dtype=np.float32).reshape(self.frame_count, self.dim)
        if self.data.size and not np.isfinite(self.data).all():
            raise ShapeError(f"embedding matrix for {self.track_id!r} contains non-finite values")

    def frame_start(self, frame_index: int) -> float:
        return frame_index * self.hop_seconds


@dataclass
class ProjectionWeights:
    """Two-layer MLP weights mapping d_in-dim embeddings to d_out-dim space."""

    d_in: int
    d_h: int
    d_out: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        if min(self.d_in, self.d_h, self.d_out) <= 0:
            raise ShapeError("all projection dimensions must be positive")
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        expected = {
            "W1": (self.d_h, self.d_in),
            "b1": (self.d_h,),
            "W2": (self.d_out, self.d_h),
            "b2": (self.d_out,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise ShapeError(f"{name} contains non-finite values")


@dataclass
class Fingerprint:
    """A unit-norm projected frame vector with its provenance and timing."""

    vector: np.ndarray
    track_id: str
    frame_index: int
    t_start: float

    def __post_init__(self) -> None:
        self.vector = np.asarray(self.vector, dtype=np.float64)


def elu(u: float, alpha: float = 1.0) -> float:
    """Exponential linear unit: u for u > 0, alpha*(exp(u)-1) otherwise."""
    if u > 0:
        return float(u)
    return float(alpha * (np.exp(u) - 1.0))


def _elu_array(u: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    return np.where(u > 0, u, alpha * np.expm1(np.minimum(u, 0.0)))


def apply_projection(x: np.ndarray, w: ProjectionWeights) -> np.ndarray:
    """Evaluate the two-layer projection head on one embedding vector.

    Computed in float64 for run-to-run and cross-implementation stability.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != w.d_in:
        raise ShapeError(f"input has shape {x.shape}, expected ({w.d_in},)")
    if not np.isfinite(x).all():
        raise ShapeError("projection input contains non-finite values")
    hidden = _elu_array(w.W1 @ x + w.b1)
    return w.W2 @ hidden + w.b2


def l2_normalize(v: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Scale v to unit L2 norm; raise if v is (near-)zero."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm < eps:
        raise DegenerateVectorError(f"cannot normalize vector with norm {norm:.3e}")
    return v / norm


def fingerprint_frames(
    m: EmbeddingMatrix,
    w: ProjectionWeights,
    strict: bool = False,
) -> list[Fingerprint]:
    """Project and normalize every frame of an embedding matrix.

    Degenerate (near-zero) projection outputs are skipped with a warning in
    batch mode; with ``strict=True`` they raise, naming the frame index.
    """
    if m.dim != w.d_in:
        raise ShapeError(f"matrix dim {m.dim} does not match projection d_in {w.d_in}")
    if m.frame_count == 0:
        return []
    # Batched forward pass, same math as apply_projection per row.
    data = m.data.astype(np.float64)
    hidden = _elu_array(data @ w.W1.T + w.b1)
    projected = hidden @ w.W2.T + w.b2
    out: list[Fingerprint] = []
    for i in range(m.frame_count):
        try:
            vec = l2_normalize(projected[i])
        except DegenerateVectorError as exc:
            if strict:
                raise DegenerateVectorError(
                    f"frame {i} of {m.track_id!r} projects to a degenerate vector"
                ) from exc
            logger.warning("skipping frame %d of %r: degenerate projection", i, m.track_id)
            continue
        out.append(Fingerprint(vec, m.track_id, i, m.frame_start(i)))
    return out


def random_projection_weights(
    d_in: int = 1024,
    d_h: int = 4096,
    d_out: int = 256,
    seed: int = 0,
) -> ProjectionWeights:
    """Gaussian-initialized weights (1/sqrt(fan_in) scale), stored as float32 values.

    Casting through float32 keeps in-memory weights identical to what a
    .afpw roundtrip would produce.
    """
    rng = np.random.default_rng(seed)
    w1 = (rng.standard_normal((d_h, d_in)) / np.sqrt(d_in)).astype(np.float32)
    b1 = np.zeros(d_h, dtype=np.float32)
    w2 = (rng.standard_normal((d_out, d_h)) / np.sqrt(d_h)).astype(np.float32)
    b2 = np.zeros(d_out, dtype=np.float32)
    return ProjectionWeights(d_in, d_h, d_out, w1, b1, w2, b2)


def write_embeddings(m: EmbeddingMatrix, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(AFPE_MAGIC)
        _binio.write_u16(fh, FORMAT_VERSION)
        _binio.write_u32(fh, m.dim)
        _binio.write_u32(fh, m.frame_count)
        _binio.write_f32(fh, m.hop_seconds)
        _binio.write_f32(fh, m.window_seconds)
        _binio.write_string(fh, m.track_id)
        _binio.write_f32_array(fh, m.data)


def read_embeddings(path: str | os.PathLike) -> EmbeddingMatrix:
    """Parse an .afpe file, validating magic, version, payload size, finiteness."""
    with _binio.open_for_read(path) as fh:
        _binio.check_magic(fh, AFPE_MAGIC)
        _binio.check_version(fh, FORMAT_VERSION)
        dim = _binio.read_u32(fh, "dim")
        frame_count = _binio.read_u32(fh, "frame_count")
        hop_seconds = _binio.read_f32(fh, "hop_seconds")
        window_seconds = _binio.read_f32(fh, "window_seconds")
        track_id = _binio.read_string(fh, "track_id")
        payload = fh.read()
    expected = frame_count * dim * 4
    if len(payload) != expected:
        raise ParseError(
            f"payload size mismatch in {path}: expected {expected} bytes "
            f"({frame_count} frames x {dim} dims), got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(frame_count, dim).copy()
    if data.size and not np.isfinite(data).all():
        raise ParseError(f"non-finite values in embedding payload of {path}")
    return EmbeddingMatrix(track_id, dim, frame_count, hop_seconds, window_seconds, data)


def write_projection_weights(w: ProjectionWeights, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(AFPW_MAGIC)
        _binio.write_u16(fh, FORMAT_VERSION)
        _binio.write_u32(fh, w.d_in)
        _binio.write_u32(fh, w.d_h)
        _binio.write_u32(fh, w.d_out)
        _binio.write_f32_array(fh, w.W1)
        _binio.write_f32_array(fh, w.b1)
        _binio.write_f32_array(fh, w.W2)
        _binio.write_f32_array(fh, w.b2)


def read_projection_weights(path: str | os.PathLike) -> ProjectionWeights:
    with _binio.open_for_read(path) as fh:
        _binio.check_magic(fh, AFPW_MAGIC)
        _binio.check_version(fh, FORMAT_VERSION)
        d_in = _binio.read_u32(fh, "d_in")
        d_h = _binio.read_u32(fh, "d_h")
        d_out = _binio.read_u32(fh, "d_out")
        w1 = _binio.read_f32_array(fh, d_h * d_in, "W1").reshape(d_h, d_in)
        b1 = _binio.read_f32_array(fh, d_h, "b1")
        w2 = _binio.read_f32_array(fh, d_out * d_h, "W2").reshape(d_out, d_h)
        b2 = _binio.read_f32_array(fh, d_out, "b2")
        trailing = fh.read(1)
    if trailing:
        raise ParseError(f"trailing bytes after weight payload in {path}")
    return ProjectionWeights(d_in, d_h, d_out, w1, b1, w2, b2)
