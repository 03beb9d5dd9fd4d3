"""Shared synthetic fixtures: unit vectors, note-event audio, embedding files."""

from __future__ import annotations

import numpy as np
import pytest

from fpalign.embedding import EmbeddingMatrix, ProjectionWeights

SR = 16000


def random_unit_vectors(n: int, dim: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def synth_note_track(seed: int, seconds: float = 30.0, sr: int = SR,
                     notes_per_second: float = 25.0) -> np.ndarray:
    """Random note events at bin-centered frequencies (n_fft=1024 grid).

    Constant-frequency tones keep their spectral peak in the same FFT bin
    under any analysis-window offset, while random onsets make every stretch
    of frames temporally distinctive — good material for landmark matching.
    """
    rng = np.random.default_rng(seed)
    n = int(seconds * sr)
    x = np.zeros(n)
    edge = int(0.01 * sr)
    for _ in range(int(seconds * notes_per_second)):
        bin_idx = int(rng.integers(8, 256))
        freq = bin_idx * sr / 1024
        dur = float(rng.uniform(0.15, 0.5))
        m = int(dur * sr)
        start = int(rng.integers(0, n - m))
        amp = float(rng.uniform(0.04, 0.2))
        phase = float(rng.uniform(0, 2 * np.pi))
        t = np.arange(m) / sr
        env = np.ones(m)
        env[:edge] = np.linspace(0.0, 1.0, edge)
        env[-edge:] = np.linspace(1.0, 0.0, edge)
        x[start : start + m] += amp * np.sin(2 * np.pi * freq * t + phase) * env
    return np.clip(x, -1.0, 1.0)


def identityish_weights(dim: int = 16, seed: int = 7) -> ProjectionWeights:
    """Small random projection head for tests that need real weight matrices."""
    from fpalign.embedding import random_projection_weights

    return random_projection_weights(d_in=dim, d_h=2 * dim, d_out=dim, seed=seed)


def embedding_matrix(track_id: str, data: np.ndarray, hop: float = 0.5,
                     window: float = 1.0) -> EmbeddingMatrix:
    data = np.asarray(data)
    return EmbeddingMatrix(
        track_id=track_id,
        dim=data.shape[1],
        frame_count=data.shape[0],
        hop_seconds=hop,
        window_seconds=window,
        data=data,
    )


@pytest.fixture(scope="session")
def note_tracks_small() -> dict[str, np.ndarray]:
    """Ten 30-second note-event tracks shared across peak tests."""
    return {f"trk{i:03d}": synth_note_track(i) for i in range(10)}


_acceptance_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance_outcomes[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance check, in execution order."""
    if not _acceptance_outcomes:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for nodeid, outcome in _acceptance_outcomes.items():
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {nodeid.split('::')[-1]}")
