"""Spectral-peak landmark fingerprinting and offset-vote matching.

A magnitude spectrogram is reduced to a constellation of local maxima; pairs
of nearby peaks are packed into 32-bit hash keys (anchor bin, target bin,
frame delta).  Matching a query against the database votes on the frame
offset between query and reference occurrences of each shared key: a real
match concentrates votes at a single offset, noise spreads them out.

Database files (``.afph``) are little-endian: magic ``AFPH``, version u16,
sample rate u32, n_fft u32, hop u32, count u64, then ``count`` rows of
(key u32, track_ref u32, t1 u32) sorted by key, then a string table mapping
track_ref to track id.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from . import _binio
from .errors import ParameterError, ParseError, ShapeError

logger = logging.getLogger(__name__)

AFPH_MAGIC = b"AFPH"
FORMAT_VERSION = 1

_KEY_F1_SHIFT = 22
_KEY_F2_SHIFT = 12
_KEY_FREQ_MASK = 0x3FF  # 10 bits per frequency bin
_KEY_DT_MASK = 0xFFF  # 12 bits of frame delta


@dataclass
class PeakParams:
    """Spectrogram, peak-picking, and pairing settings."""

    n_fft: int = 1024
    hop: int = 512
    neighborhood_frames: int = 7
    neighborhood_bins: int = 15
    threshold_quantile: float = 0.7
    max_peaks_per_frame: int = 5
    fan_out: int = 5
    min_dt: int = 1
    max_dt: int = 63

    def __post_init__(self) -> None:
        if self.n_fft < 2 or self.hop < 1:
            raise ParameterError(f"invalid n_fft={self.n_fft}, hop={self.hop}")
        if self.neighborhood_frames < 1 or self.neighborhood_bins < 1:
            raise ParameterError("peak neighborhood must be at least 1x1")
        if not 0.0 <= self.threshold_quantile < 1.0:
            raise ParameterError(
                f"threshold_quantile must be in [0, 1), got {self.threshold_quantile}"
            )
        if self.max_peaks_per_frame < 1 or self.fan_out < 1:
            raise ParameterError("max_peaks_per_frame and fan_out must be >= 1")
        if not 1 <= self.min_dt <= self.max_dt <= _KEY_DT_MASK:
            raise ParameterError(f"need 1 <= min_dt <= max_dt <= {_KEY_DT_MASK}")


@dataclass
class Landmark:
    key: int
    t1: int


@dataclass
class PeakMatch:
    track_id: str
    votes: int
    offset_frames: int
    offset_seconds: float


def stft_magnitude(x: np.ndarray, params: PeakParams | None = None) -> np.ndarray:
    """Hann-windowed magnitude spectrogram, one row per fully-covered frame.

    Frame ``f`` spans samples ``[f * hop, f * hop + n_fft)``; partial frames
    at the tail are dropped.  Returns shape (n_frames, n_fft // 2 + 1).
    """
    params = params or PeakParams()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected mono 1-D signal, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ShapeError("signal contains non-finite samples")
    if x.size < params.n_fft:
        raise ParameterError(
            f"signal too short: {x.size} samples, need at least n_fft={params.n_fft}"
        )
    n_frames = 1 + (x.size - params.n_fft) // params.hop
    window = np.hanning(params.n_fft)
    idx = np.arange(params.n_fft)[None, :] + params.hop * np.arange(n_frames)[:, None]
    frames = x[idx] * window
    return np.abs(np.fft.rfft(frames, axis=1))


def pick_peaks(spec: np.ndarray, params: PeakParams | None = None) -> list[tuple[int, int]]:
    """Constellation peaks as (frame, bin) pairs, sorted by frame then bin.

    A peak must equal the maximum over its (frames x bins) neighborhood and
    strictly exceed the global magnitude quantile; at most
    ``max_peaks_per_frame`` strongest peaks survive per frame.  A flat
    spectrogram therefore yields no peaks.
    """
    params = params or PeakParams()
    spec = np.asarray(spec, dtype=np.float64)
    if spec.ndim != 2:
        raise ShapeError(f"expected 2-D spectrogram, got shape {spec.shape}")
    if spec.size == 0:
        return []
    threshold = float(np.quantile(spec, params.threshold_quantile))
    # Tiny relative floor so numerically-zero bins never tie their own noise.
    floor = max(threshold, 1e-5 * float(spec.max()))
    local_max = maximum_filter(
        spec,
        size=(params.neighborhood_frames, params.neighborhood_bins),
        mode="constant",
        cval=0.0,
    )
    cand_frames, cand_bins = np.nonzero((spec == local_max) & (spec > floor))
    peaks: list[tuple[int, int]] = []
    for frame in np.unique(cand_frames):
        sel = cand_frames == frame
        bins = cand_bins[sel]
        mags = spec[frame, bins]
        order = np.lexsort((bins, -mags))[: params.max_peaks_per_frame]
        peaks.extend((int(frame), int(bins[i])) for i in order)
    peaks.sort()
    return peaks


def _landmark_arrays(
    peaks: list[tuple[int, int]], params: PeakParams
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized pairing; returns (keys u32, anchor frames u32)."""
    if len(peaks) < 2:
        return np.empty(0, np.uint32), np.empty(0, np.uint32)
    arr = np.asarray(peaks, dtype=np.int64)
    t, f = arr[:, 0], arr[:, 1]
    lo = np.searchsorted(t, t + params.min_dt, side="left")
    hi = np.searchsorted(t, t + params.max_dt, side="right")
    counts = np.minimum(hi - lo, params.fan_out)
    counts = np.maximum(counts, 0)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, np.uint32), np.empty(0, np.uint32)
    anchors = np.repeat(np.arange(t.size), counts)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    targets = lo[anchors] + (np.arange(total) - np.repeat(starts, counts))
    dt = t[targets] - t[anchors]
    keys = (
        ((f[anchors] & _KEY_FREQ_MASK) << _KEY_F1_SHIFT)
        | ((f[targets] & _KEY_FREQ_MASK) << _KEY_F2_SHIFT)
        | (dt & _KEY_DT_MASK)
    )
    return keys.astype(np.uint32), t[anchors].astype(np.uint32)


def make_landmarks(
    peaks: list[tuple[int, int]], params: PeakParams | None = None
) -> list[Landmark]:
    """Pair each anchor peak with its next ``fan_out`` peaks within the dt window.

    Targets must lie ``min_dt``..``max_dt`` frames after the anchor (same-frame
    pairs are excluded) and are taken in (frame, bin) order.  The 32-bit key
    packs anchor bin (10 bits), target bin (10 bits), and frame delta (12 bits).
    """
    params = params or PeakParams()
    keys, t1s = _landmark_arrays(sorted(peaks), params)
    return [Landmark(int(k), int(t)) for k, t in zip(keys, t1s)]


def fingerprint_signal(x: np.ndarray, params: PeakParams | None = None) -> list[Landmark]:
    """Signal straight to landmarks: spectrogram, peaks, pairing."""
    params = params or PeakParams()
    return make_landmarks(pick_peaks(stft_magnitude(x, params), params), params)


@dataclass
class PeakDB:
    """Sorted landmark store over a set of reference tracks."""

    sample_rate: int
    params: PeakParams
    keys: np.ndarray = field(repr=False)  # u32, sorted ascending
    track_refs: np.ndarray = field(repr=False)  # u32 into track_ids
    t1s: np.ndarray = field(repr=False)  # u32 anchor frames
    track_ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.keys.size)


def build_peak_db(
    tracks: dict[str, np.ndarray],
    sample_rate: int,
    params: PeakParams | None = None,
) -> PeakDB:
    """Fingerprint every track (in sorted id order) into one sorted key table."""
    params = params or PeakParams()
    if sample_rate < 1:
        raise ParameterError(f"sample_rate must be positive, got {sample_rate}")
    if not tracks:
        return PeakDB(
            sample_rate=sample_rate,
            params=params,
            keys=np.empty(0, np.uint32),
            track_refs=np.empty(0, np.uint32),
            t1s=np.empty(0, np.uint32),
            track_ids=[],
        )
    track_ids = sorted(tracks)
    all_keys, all_refs, all_t1s = [], [], []
    for ref, track_id in enumerate(track_ids):
        spec = stft_magnitude(tracks[track_id], params)
        keys, t1s = _landmark_arrays(pick_peaks(spec, params), params)
        if keys.size == 0:
            logger.warning("track %r produced no landmarks", track_id)
        all_keys.append(keys)
        all_refs.append(np.full(keys.size, ref, np.uint32))
        all_t1s.append(t1s)
    keys = np.concatenate(all_keys)
    refs = np.concatenate(all_refs)
    t1s = np.concatenate(all_t1s)
    order = np.lexsort((t1s, refs, keys))
    return PeakDB(
        sample_rate=sample_rate,
        params=params,
        keys=keys[order],
        track_refs=refs[order],
        t1s=t1s[order],
        track_ids=track_ids,
    )


def match_peaks(landmarks: list[Landmark], db: PeakDB) -> list[PeakMatch]:
    """Vote on (track, frame-offset) pairs; ranked by best single-offset count.

    Each query landmark key is looked up in the database; every occurrence
    votes for its track at offset ``t1_db - t1_qry``.  A track's score is the
    height of its tallest offset bin.  Results are sorted by votes descending,
    ties broken by track id ascending; the winning offset (smallest on a tie)
    is also reported in seconds via ``offset * hop / sample_rate``.
    """
    if not landmarks or len(db) == 0:
        return []
    qkeys = np.array([lm.key for lm in landmarks], dtype=np.uint32)
    qt1s = np.array([lm.t1 for lm in landmarks], dtype=np.int64)
    lo = np.searchsorted(db.keys, qkeys, side="left")
    hi = np.searchsorted(db.keys, qkeys, side="right")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return []
    anchors = np.repeat(np.arange(qkeys.size), counts)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    rows = lo[anchors] + (np.arange(total) - np.repeat(starts, counts))
    offsets = db.t1s[rows].astype(np.int64) - qt1s[anchors]
    refs = db.track_refs[rows].astype(np.int64)

    # Compose (track, offset) into one sortable key for a single unique pass.
    span = int(offsets.max() - offsets.min()) + 1
    composite = refs * span + (offsets - int(offsets.min()))
    uniq, votes = np.unique(composite, return_counts=True)
    best: dict[int, tuple[int, int]] = {}
    for comp, n in zip(uniq.tolist(), votes.tolist()):
        ref, off = divmod(comp, span)
        off += int(offsets.min())
        if ref not in best or (n, -off) > (best[ref][0], -best[ref][1]):
            best[ref] = (n, off)
    results = [
        PeakMatch(
            track_id=db.track_ids[ref],
            votes=n,
            offset_frames=off,
            offset_seconds=off * db.params.hop / db.sample_rate,
        )
        for ref, (n, off) in best.items()
    ]
    results.sort(key=lambda m: (-m.votes, m.track_id))
    return results


def match_query(db: PeakDB, samples: np.ndarray, sample_rate: int) -> list[PeakMatch]:
    """Fingerprint raw query samples and match them against ``db``.

    The query must already be at the database sample rate; callers with
    differently-rated audio resample before calling (see the retrieval layer).
    """
    if sample_rate != db.sample_rate:
        raise ParameterError(
            f"query sample rate {sample_rate} != database rate {db.sample_rate}"
        )
    return match_peaks(fingerprint_signal(samples, db.params), db)


def write_peak_db(db: PeakDB, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(AFPH_MAGIC)
        _binio.write_u16(fh, FORMAT_VERSION)
        _binio.write_u32(fh, db.sample_rate)
        _binio.write_u32(fh, db.params.n_fft)
        _binio.write_u32(fh, db.params.hop)
        _binio.write_u64(fh, len(db))
        rows = np.column_stack(
            (db.keys, db.track_refs, db.t1s)
        ).astype("<u4")
        fh.write(rows.tobytes())
        _binio.write_string_table(fh, db.track_ids)


def read_peak_db(path: str | os.PathLike) -> PeakDB:
    with _binio.open_for_read(path) as fh:
        _binio.check_magic(fh, AFPH_MAGIC)
        _binio.check_version(fh, FORMAT_VERSION)
        sample_rate = _binio.read_u32(fh, "sample_rate")
        n_fft = _binio.read_u32(fh, "n_fft")
        hop = _binio.read_u32(fh, "hop")
        count = _binio.read_u64(fh, "landmark count")
        raw = _binio._read_exact(fh, count * 12, f"{path}: landmark rows")
        rows = np.frombuffer(raw, dtype="<u4").reshape(count, 3)
        track_ids = _binio.read_string_table(fh)
        if fh.read(1):
            raise ParseError(f"{path}: trailing bytes after string table")
    keys = rows[:, 0].astype(np.uint32)
    if count and np.any(np.diff(keys.astype(np.int64)) < 0):
        raise ParseError(f"{path}: landmark keys are not sorted")
    refs = rows[:, 1].astype(np.uint32)
    if count and int(refs.max()) >= len(track_ids):
        raise ParseError(f"{path}: track reference out of range")
    return PeakDB(
        sample_rate=sample_rate,
        params=PeakParams(n_fft=n_fft, hop=hop),
        keys=keys,
        track_refs=refs,
        t1s=rows[:, 2].astype(np.uint32),
        track_ids=track_ids,
    )
