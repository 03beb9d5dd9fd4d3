"""Hand-rolled log-mel spectrogram with statistics pooling.

This is the signal-processing core of the ``identity-mel-debug`` backbone: a
Hann-windowed power spectrogram mapped through a triangular mel filterbank,
log-compressed, then pooled over fixed-duration windows.  Each pooled window
yields eight statistics per mel band (mean, std, min, max, median, lower and
upper quartile, RMS), so 128 bands produce the 1024-dimensional frame vectors
the downstream fingerprinting pipeline expects.  Everything is plain numpy;
there are no learned weights.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

N_FFT = 2048
STFT_HOP = 512
N_MELS = 128
N_STATS = 8
LOG_FLOOR = 1e-10


def hz_to_mel(hz: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int = N_FFT, n_mels: int = N_MELS) -> np.ndarray:
    """Triangular filters (n_mels x n_bins) spanning 0 Hz to Nyquist."""
    n_bins = n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * sample_rate / n_fft
    edges_hz = mel_to_hz(np.linspace(0.0, float(hz_to_mel(sample_rate / 2)), n_mels + 2))
    bank = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, mid, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rising = (bin_hz - lo) / (mid - lo)
        falling = (hi - bin_hz) / (hi - mid)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def log_mel_spectrogram(samples: np.ndarray, sample_rate: int,
                        filterbank: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return (log-mel frames [n_frames, n_mels], frame-center times in seconds).

    Frames are taken without padding: frame k covers samples
    [k*STFT_HOP, k*STFT_HOP + N_FFT).  Audio shorter than one analysis window
    yields zero frames.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if filterbank is None:
        filterbank = mel_filterbank(sample_rate)
    n = len(samples)
    if n < N_FFT:
        return np.zeros((0, filterbank.shape[0])), np.zeros(0)
    n_frames = 1 + (n - N_FFT) // STFT_HOP
    window = np.hanning(N_FFT)
    idx = np.arange(N_FFT)[None, :] + STFT_HOP * np.arange(n_frames)[:, None]
    spectra = np.abs(np.fft.rfft(samples[idx] * window, axis=1)) ** 2
    mel = spectra @ filterbank.T
    centers = (STFT_HOP * np.arange(n_frames) + N_FFT / 2) / sample_rate
    return np.log10(np.maximum(mel, LOG_FLOOR)), centers


def pooled_frame_count(duration_seconds: float, hop_seconds: float,
                       window_seconds: float) -> int:
    """Number of full pooling windows that fit in the clip."""
    if duration_seconds + 1e-9 < window_seconds:
        return 0
    return int(np.floor((duration_seconds - window_seconds) / hop_seconds + 1e-9)) + 1


def pooled_statistics(samples: np.ndarray, sample_rate: int, hop_seconds: float,
                      window_seconds: float,
                      filterbank: np.ndarray | None = None) -> np.ndarray:
    """Pool the log-mel spectrogram into [n_pooled, N_MELS * N_STATS] vectors.

    Pooled window i covers [i*hop, i*hop + window); a mel frame belongs to the
    windows containing its center time.  Windows that catch no mel frame
    (possible only for sub-window clips, which yield zero rows) never occur for
    window_seconds >= N_FFT / sample_rate.
    """
    if hop_seconds <= 0 or window_seconds <= 0:
        raise ParameterError(
            f"hop and window must be positive, got hop={hop_seconds}, window={window_seconds}"
        )
    if window_seconds * sample_rate < N_FFT:
        raise ParameterError(
            f"window of {window_seconds} s holds no {N_FFT}-sample analysis frame "
            f"at {sample_rate} Hz"
        )
    mel, centers = log_mel_spectrogram(samples, sample_rate, filterbank)
    n_pooled = pooled_frame_count(len(samples) / sample_rate, hop_seconds, window_seconds)
    out = np.zeros((n_pooled, mel.shape[1] * N_STATS), dtype=np.float64)
    for i in range(n_pooled):
        start = i * hop_seconds
        rows = mel[(centers >= start) & (centers < start + window_seconds)]
        if rows.size == 0:
            continue  # defensive; unreachable once the window-length check passed
        stats = np.concatenate([
            rows.mean(axis=0),
            rows.std(axis=0),
            rows.min(axis=0),
            rows.max(axis=0),
            np.median(rows, axis=0),
            np.percentile(rows, 25, axis=0),
            np.percentile(rows, 75, axis=0),
            np.sqrt((rows ** 2).mean(axis=0)),
        ])
        out[i] = stats
    return out
