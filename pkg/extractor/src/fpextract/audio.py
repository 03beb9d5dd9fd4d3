"""WAV decoding for the extractor.

Reads PCM16/PCM32 and float32/float64 WAV files via scipy, mixing multi-channel
audio down to mono and normalizing integer formats to [-1, 1] floats.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import DecodeError

_INT_SCALE = {
    np.dtype(np.int16): 32768.0,
    np.dtype(np.int32): 2147483648.0,
    np.dtype(np.uint8): 128.0,  # unsigned, offset binary
}


@dataclass
class AudioClip:
    """Mono audio samples plus their sample rate."""

    samples: np.ndarray  # float64, 1-D
    sample_rate: int

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


def read_wav(path: str | os.PathLike) -> AudioClip:
    """Decode one WAV file to mono float64; raises DecodeError on any failure."""
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise DecodeError(f"{path}: cannot decode WAV: {exc}") from exc
    if data.ndim == 2:
        data = data.mean(axis=1)
    elif data.ndim != 1:
        raise DecodeError(f"{path}: unsupported channel layout {data.shape}")
    if data.dtype in _INT_SCALE:
        scale = _INT_SCALE[data.dtype]
        offset = scale if data.dtype == np.dtype(np.uint8) else 0.0
        samples = (data.astype(np.float64) - offset) / scale
    else:
        samples = data.astype(np.float64)
    if samples.size == 0:
        raise DecodeError(f"{path}: empty audio stream")
    if not np.isfinite(samples).all():
        raise DecodeError(f"{path}: non-finite samples")
    return AudioClip(samples, int(rate))
