"""Shared fixtures: synthetic WAV files and embedding matrices."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.io import wavfile

SR = 16_000


def synth_track(seed: int, seconds: float = 10.0, sr: int = SR) -> np.ndarray:
    """A distinct multi-partial tone with slow amplitude modulation."""
    rng = np.random.default_rng([2024, seed])
    t = np.arange(int(seconds * sr)) / sr
    sig = np.zeros_like(t)
    for freq in rng.uniform(150, 3800, 6):
        sig += rng.uniform(0.05, 0.15) * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    sig *= 0.5 + 0.5 * np.abs(np.sin(2 * np.pi * rng.uniform(0.3, 1.1) * t))
    return sig.astype(np.float32)


def write_track(path, seed: int, seconds: float = 10.0, sr: int = SR) -> None:
    wavfile.write(path, sr, synth_track(seed, seconds, sr))


@pytest.fixture(scope="session")
def audio_dir(tmp_path_factory):
    """Three 10-second WAV tracks."""
    root = tmp_path_factory.mktemp("audio")
    for i in range(3):
        write_track(root / f"track{i}.wav", seed=i)
    return root


@pytest.fixture(scope="session")
def embedding_dir(tmp_path_factory, audio_dir):
    """The audio_dir tracks embedded with the debug backbone at hop 0.5 / window 1.0."""
    from fpextract import ExtractorConfig, extract

    out = tmp_path_factory.mktemp("embeddings")
    extract(ExtractorConfig(out_dir=out), sorted(audio_dir.glob("*.wav")))
    return out
