"""Deterministic audio degradations and evaluation query-set generation.

Every transform takes and returns a mono :class:`AudioBuffer`, is pure given
(input, parameters, seed), and keeps samples finite within [-1, 1].  The
query-set generator draws all randomness from per-query seeds derived from a
single run seed, so regenerating with the same seed is byte-identical and
independent of scheduling.

Supported degradation kinds: time_stretch, pitch_shift, time_and_pitch,
noise, reverb, reverb_noise, band_pass, high_pass, low_pass, echo, none.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve, lfilter, resample_poly

from .errors import DataError, ParameterError, ShapeError
from .metrics import Annotation, write_ground_truth_csv

logger = logging.getLogger(__name__)

# WSOLA frame geometry (samples).
_WSOLA_FRAME = 1024
_WSOLA_HOP = 512
_WSOLA_SEARCH = 256

MANIFEST_COLUMNS = ["query_path", "truth_track_id", "condition"]

AUGMENTATION_KINDS = (
    "time_stretch",
    "pitch_shift",
    "time_and_pitch",
    "noise",
    "reverb",
    "reverb_noise",
    "band_pass",
    "high_pass",
    "low_pass",
    "echo",
    "none",
)

# Default parameter ranges for each kind.  A 2-element list samples uniformly,
# a longer list picks one element, a scalar is fixed.
DEFAULT_RANGES: dict[str, dict] = {
    "time_stretch": {"rate": (0.7, 1.5)},
    "pitch_shift": {"semitones": (-5.0, 5.0)},
    "time_and_pitch": {"rate": (0.7, 1.5), "semitones": (-5.0, 5.0)},
    "noise": {"snr_db": [0.0, 5.0, 10.0, 20.0]},
    "reverb": {"mix": (0.1, 1.5)},
    "reverb_noise": {"mix": (0.1, 1.5), "snr_db": [0.0, 5.0, 10.0, 20.0]},
    "band_pass": {"f_lo": 300.0, "f_hi": 1800.0},
    "high_pass": {"f_lo": (1800.0, 3400.0)},
    "low_pass": {"f_hi": (300.0, 1500.0)},
    "echo": {"delay_ms": (100.0, 200.0), "decay": 0.5},
    "none": {},
}


@dataclass
class AudioBuffer:
    """Mono audio: samples nominally in [-1, 1] plus a sample rate."""

    samples: np.ndarray
    sample_rate: int
    channels: int = 1

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ShapeError(f"expected mono samples, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ShapeError("samples contain non-finite values")
        if self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.channels != 1:
            raise ParameterError("only mono buffers are supported")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def replace(self, samples: np.ndarray) -> AudioBuffer:
        return AudioBuffer(samples, self.sample_rate)


@dataclass
class AugmentationSpec:
    """One named degradation with parameter ranges and its own seed salt."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in AUGMENTATION_KINDS:
            raise ParameterError(
                f"unknown augmentation kind {self.kind!r}; expected one of {AUGMENTATION_KINDS}"
            )

    @property
    def label(self) -> str:
        return self.name or self.kind


def load_conditions(path: str | os.PathLike) -> list[AugmentationSpec]:
    """Condition spec file: a JSON list of {kind, params?, seed?, name?} objects."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read condition file: {exc}") from exc
    if not isinstance(raw, list):
        raise DataError(f"{path}: expected a JSON list of augmentation specs")
    specs = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or "kind" not in item:
            raise DataError(f"{path}: entry {i} must be an object with a 'kind' field")
        try:
            specs.append(
                AugmentationSpec(
                    kind=item["kind"],
                    params=item.get("params", {}),
                    seed=int(item.get("seed", 0)),
                    name=item.get("name"),
                )
            )
        except ParameterError as exc:
            raise DataError(f"{path}: entry {i}: {exc}") from exc
    return specs


def _clip(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -1.0, 1.0)


def _fix_length(x: np.ndarray, n: int) -> np.ndarray:
    if x.size >= n:
        return x[:n]
    return np.concatenate([x, np.zeros(n - x.size)])


def _wsola(x: np.ndarray, rate: float) -> np.ndarray:
    """Waveform-similarity overlap-add stretch to round(len(x) / rate) samples."""
    n = x.size
    n_out = int(round(n / rate))
    if n_out <= 0:
        return np.zeros(0)
    frame, hop, search = _WSOLA_FRAME, _WSOLA_HOP, _WSOLA_SEARCH
    if n < frame + hop + search or n_out < frame:
        # Too short for overlap-add; linear resampling is good enough here.
        return np.interp(
            np.linspace(0.0, n - 1.0, n_out), np.arange(n), x
        )
    window = np.hanning(frame)
    analysis_hop = hop * rate
    out = np.zeros(n_out + 2 * frame)
    norm = np.zeros(n_out + 2 * frame)
    prev = None
    for k in range(n_out // hop + 2):
        base = int(round(k * analysis_hop))
        if base > n - frame:
            break
        if prev is None or prev + hop > n - frame:
            start = base
        else:
            natural = x[prev + hop : prev + hop + frame]
            lo = max(0, base - search)
            hi = min(n - frame, base + search)
            scores = np.correlate(x[lo : hi + frame], natural, mode="valid")
            start = lo + int(np.argmax(scores))
        out[k * hop : k * hop + frame] += x[start : start + frame] * window
        norm[k * hop : k * hop + frame] += window
        prev = start
    out = out[:n_out] / np.maximum(norm[:n_out], 1e-8)
    return out


def time_stretch(a: AudioBuffer, rate: float) -> AudioBuffer:
    """Pitch-preserving speed change: rate > 1 plays faster (shorter output).

    Output length is exactly round(len / rate); rate 1 is the identity.
    """
    if not 0.5 <= rate <= 2.0:
        raise ParameterError(f"stretch rate must be in [0.5, 2.0], got {rate}")
    if rate == 1.0:
        return a.replace(a.samples.copy())
    return a.replace(_clip(_wsola(a.samples, rate)))


def pitch_shift(a: AudioBuffer, semitones: float) -> AudioBuffer:
    """Shift pitch by the given semitones at constant duration.

    Resamples by the pitch factor 2^(s/12) and stretches back to the original
    length, so dominant frequencies scale by the factor.
    """
    if not -12.0 <= semitones <= 12.0:
        raise ParameterError(f"semitones must be in [-12, 12], got {semitones}")
    if semitones == 0:
        return a.replace(a.samples.copy())
    factor = 2.0 ** (semitones / 12.0)
    frac = Fraction(factor).limit_denominator(200)
    resampled = resample_poly(a.samples, up=frac.denominator, down=frac.numerator)
    stretched = _wsola(resampled, resampled.size / a.samples.size)
    return a.replace(_clip(_fix_length(stretched, a.samples.size)))


def _rbj_coeffs(mode: str, sample_rate: int, cutoff: float) -> tuple[np.ndarray, np.ndarray]:
    """Audio-cookbook biquad coefficients at Q = 1/sqrt(2)."""
    w0 = 2.0 * np.pi * cutoff / sample_rate
    cos_w0 = np.cos(w0)
    alpha = np.sin(w0) / np.sqrt(2.0)
    if mode == "low_pass":
        b = np.array([(1 - cos_w0) / 2, 1 - cos_w0, (1 - cos_w0) / 2])
    else:
        b = np.array([(1 + cos_w0) / 2, -(1 + cos_w0), (1 + cos_w0) / 2])
    a = np.array([1 + alpha, -2 * cos_w0, 1 - alpha])
    return b / a[0], a / a[0]


def _check_cutoff(cutoff, sample_rate: int, which: str) -> float:
    if cutoff is None:
        raise ParameterError(f"{which} cutoff is required for this filter mode")
    cutoff = float(cutoff)
    if not 0.0 < cutoff < sample_rate / 2.0:
        raise ParameterError(
            f"{which} cutoff {cutoff} Hz outside (0, {sample_rate / 2:.0f}) Hz"
        )
    return cutoff


def biquad_filter(
    a: AudioBuffer,
    mode: str,
    f_lo: float | None = None,
    f_hi: float | None = None,
) -> AudioBuffer:
    """Second-order filtering: low_pass (f_hi), high_pass (f_lo), or band_pass.

    The band-pass is a high-pass at f_lo cascaded with a low-pass at f_hi.
    Cutoffs must lie strictly inside (0, Nyquist).
    """
    if mode not in ("low_pass", "high_pass", "band_pass"):
        raise ParameterError(f"unknown filter mode {mode!r}")
    y = a.samples
    if mode in ("high_pass", "band_pass"):
        cut = _check_cutoff(f_lo, a.sample_rate, "high-pass")
        b_c, a_c = _rbj_coeffs("high_pass", a.sample_rate, cut)
        y = lfilter(b_c, a_c, y)
    if mode in ("low_pass", "band_pass"):
        cut = _check_cutoff(f_hi, a.sample_rate, "low-pass")
        b_c, a_c = _rbj_coeffs("low_pass", a.sample_rate, cut)
        y = lfilter(b_c, a_c, y)
    return a.replace(_clip(y))


def add_noise_snr(a: AudioBuffer, noise: AudioBuffer, snr_db: float) -> AudioBuffer:
    """Mix in noise scaled so 20*log10(rms_signal / rms_noise) hits snr_db.

    Noise is resampled to the signal rate if needed and looped or truncated
    to the signal length; the sum is clipped to [-1, 1].
    """
    sig = a.samples
    noi = noise.samples
    if noise.sample_rate != a.sample_rate:
        frac = Fraction(a.sample_rate, noise.sample_rate)
        noi = resample_poly(noi, up=frac.numerator, down=frac.denominator)
    if noi.size == 0 or float(np.sqrt(np.mean(noi**2))) <= 1e-8:
        raise ParameterError("noise is silent (RMS <= 1e-8)")
    if noi.size < sig.size:
        noi = np.tile(noi, int(np.ceil(sig.size / noi.size)))
    noi = noi[: sig.size]
    rms_sig = float(np.sqrt(np.mean(sig**2)))
    rms_noi = float(np.sqrt(np.mean(noi**2)))
    scale = rms_sig / (rms_noi * 10.0 ** (snr_db / 20.0))
    return a.replace(_clip(sig + scale * noi))


def convolve_rir(a: AudioBuffer, rir: AudioBuffer, wet_gain: float = 1.0) -> AudioBuffer:
    """Room-impulse-response reverberation with a wet/dry mix.

    Output = (1 - wet_gain) * dry + wet_gain * (dry (*) rir), truncated to the
    input length; a unit-impulse RIR at wet_gain 1 is the identity.  Sparse
    kernels convolve directly so impulse checks are exact.
    """
    kernel = rir.samples
    if kernel.size == 0:
        raise ParameterError("rir is empty")
    if not 0.0 <= wet_gain <= 1.0:
        raise ParameterError(f"wet_gain must be in [0, 1], got {wet_gain}")
    x = a.samples
    nonzero = np.nonzero(kernel)[0]
    if nonzero.size <= 8:
        wet = np.zeros_like(x)
        for tap in nonzero:
            wet[tap:] += kernel[tap] * x[: x.size - tap]
    else:
        wet = fftconvolve(x, kernel)[: x.size]
    return a.replace(_clip((1.0 - wet_gain) * x + wet_gain * wet))


def echo(a: AudioBuffer, delay_ms: float, decay: float = 0.5) -> AudioBuffer:
    """Single feed-forward echo: out[n] = in[n] + decay * in[n - delay]."""
    if not 10.0 <= delay_ms <= 1000.0:
        raise ParameterError(f"delay_ms must be in [10, 1000], got {delay_ms}")
    if not np.isfinite(decay):
        raise ParameterError("decay must be finite")
    delay = int(round(a.sample_rate * delay_ms / 1000.0))
    out = a.samples.copy()
    if 0 < delay < out.size:
        out[delay:] += decay * a.samples[: out.size - delay]
    return a.replace(_clip(out))


def read_wav(path: str | os.PathLike) -> AudioBuffer:
    """PCM16/PCM32/float WAV reader; stereo is downmixed by channel averaging."""
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise DataError(f"{path}: unsupported or unreadable WAV: {exc}") from exc
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype}")
    return AudioBuffer(samples, int(rate))


def write_wav(a: AudioBuffer, path: str | os.PathLike, subtype: str = "float32") -> None:
    """Write mono WAV as IEEE float32 (bit-exact roundtrip) or PCM16."""
    if subtype == "float32":
        wavfile.write(path, a.sample_rate, a.samples.astype("<f4"))
    elif subtype == "pcm16":
        # Same 32768 scale as the reader, so the roundtrip error stays
        # within one quantization step (1/32768); +1.0 clamps to 32767.
        scaled = np.round(np.clip(a.samples, -1.0, 1.0) * 32768.0)
        scaled = np.clip(scaled, -32768.0, 32767.0)
        wavfile.write(path, a.sample_rate, scaled.astype("<i2"))
    else:
        raise ParameterError(f"unsupported subtype {subtype!r}")


def _sample_param(rng: np.random.Generator, value):
    """Scalar = fixed; 2-element sequence = uniform range; longer = choice."""
    if isinstance(value, (list, tuple)):
        if len(value) == 2:
            return float(rng.uniform(value[0], value[1]))
        return float(value[int(rng.integers(len(value)))])
    return float(value)


def _synthetic_noise(rng: np.random.Generator, n: int, sample_rate: int) -> AudioBuffer:
    return AudioBuffer(0.5 * rng.standard_normal(n), sample_rate)


def _synthetic_rir(rng: np.random.Generator, sample_rate: int) -> AudioBuffer:
    n = int(0.25 * sample_rate)
    t = np.arange(n) / sample_rate
    h = rng.standard_normal(n) * np.exp(-t / 0.08)
    h[0] = 1.0
    h /= np.max(np.abs(h))
    return AudioBuffer(h, sample_rate)


def apply_augmentation(
    buf: AudioBuffer,
    spec: AugmentationSpec,
    rng: np.random.Generator,
    noise_bank: list[AudioBuffer] | None = None,
    rir_bank: list[AudioBuffer] | None = None,
) -> tuple[AudioBuffer, float]:
    """Apply one sampled degradation; returns (audio, applied stretch rate).

    Parameters are drawn from ``spec.params`` (over the default ranges) in
    sorted key order so the consumed random stream is stable.  The returned
    rate is 1.0 for every duration-preserving kind.
    """
    ranges = dict(DEFAULT_RANGES[spec.kind])
    ranges.update(spec.params)
    drawn = {key: _sample_param(rng, ranges[key]) for key in sorted(ranges)}
    rate = 1.0
    kind = spec.kind
    out = buf
    if kind == "none":
        out = buf.replace(buf.samples.copy())
    if kind in ("time_stretch", "time_and_pitch"):
        rate = drawn["rate"]
        out = time_stretch(out, rate)
    if kind in ("pitch_shift", "time_and_pitch"):
        out = pitch_shift(out, drawn["semitones"])
    if kind in ("reverb", "reverb_noise"):
        if rir_bank:
            rir = rir_bank[int(rng.integers(len(rir_bank)))]
        else:
            rir = _synthetic_rir(rng, out.sample_rate)
        mix = drawn["mix"]
        out = convolve_rir(out, rir, wet_gain=mix / (1.0 + mix))
    if kind in ("noise", "reverb_noise"):
        if noise_bank:
            noise = noise_bank[int(rng.integers(len(noise_bank)))]
        else:
            noise = _synthetic_noise(rng, out.samples.size, out.sample_rate)
        out = add_noise_snr(out, noise, drawn["snr_db"])
    if kind == "band_pass":
        out = biquad_filter(out, "band_pass", f_lo=drawn["f_lo"], f_hi=drawn["f_hi"])
    if kind == "high_pass":
        out = biquad_filter(out, "high_pass", f_lo=drawn["f_lo"])
    if kind == "low_pass":
        out = biquad_filter(out, "low_pass", f_hi=drawn["f_hi"])
    if kind == "echo":
        out = echo(out, drawn["delay_ms"], drawn["decay"])
    return out, rate


def _crossfade_concat(segments: list[np.ndarray], fade: int) -> np.ndarray:
    """Equal-power crossfaded concatenation with `fade` samples of overlap."""
    if len(segments) == 1:
        return segments[0].copy()
    ramp = np.linspace(0.0, np.pi / 2.0, fade) if fade > 0 else np.zeros(0)
    fade_in, fade_out = np.sin(ramp), np.cos(ramp)
    total = sum(s.size for s in segments) - fade * (len(segments) - 1)
    out = np.zeros(total)
    pos = 0
    for j, seg in enumerate(segments):
        shaped = seg.copy()
        if j > 0 and fade > 0:
            shaped[:fade] *= fade_in
        if j < len(segments) - 1 and fade > 0:
            shaped[-fade:] *= fade_out
        out[pos : pos + shaped.size] += shaped
        pos += shaped.size - fade
    return out


def _load_bank(directory: str | os.PathLike | None) -> list[AudioBuffer]:
    if directory is None:
        return []
    paths = sorted(Path(directory).glob("*.wav"))
    return [read_wav(p) for p in paths]


def _query_rng(seed: int, spec: AugmentationSpec, i: int) -> np.random.Generator:
    salt = zlib.crc32(f"{spec.label}|{i}".encode("utf-8"))
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, spec.seed, salt])


def make_query_set(
    reference_dir: str | os.PathLike,
    out_dir: str | os.PathLike,
    conditions: list[AugmentationSpec],
    n_per_condition: int,
    segment_seconds: float = 10.0,
    seed: int = 0,
    mode: str = "track",
    crossfade_seconds: float = 0.5,
    max_snippets: int = 3,
    noise_dir: str | os.PathLike | None = None,
    rir_dir: str | os.PathLike | None = None,
) -> dict:
    """Generate distorted query WAVs with truth files, deterministically.

    Track mode writes one distorted excerpt per query plus ``manifest.csv``
    (query_path, truth_track_id, condition).  Segment mode concatenates 1 to
    ``max_snippets`` excerpts from distinct references with equal-power
    crossfades and writes ``ground_truth.csv``; crossfaded overlap is
    attributed to the earlier snippet so truth intervals tile each query.
    References shorter than the excerpt are skipped with a warning.
    """
    if mode not in ("track", "segment"):
        raise ParameterError(f"mode must be 'track' or 'segment', got {mode}")
    if n_per_condition < 1:
        raise ParameterError("n_per_condition must be >= 1")
    if not conditions:
        raise ParameterError("no augmentation conditions given")
    ref_paths = sorted(Path(reference_dir).glob("*.wav"))
    if not ref_paths:
        raise DataError(f"{reference_dir}: no .wav references found")
    refs: list[tuple[str, AudioBuffer]] = []
    for p in ref_paths:
        buf = read_wav(p)
        if buf.duration < segment_seconds:
            logger.warning("skipping %s: %.2f s shorter than excerpt %.2f s",
                           p.name, buf.duration, segment_seconds)
            continue
        refs.append((p.stem, buf))
    if not refs:
        raise DataError(f"{reference_dir}: no reference reaches {segment_seconds} s")

    noise_bank = _load_bank(noise_dir)
    rir_bank = _load_bank(rir_dir)
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)

    manifest_rows: list[tuple[str, str, str]] = []
    annotations: list[Annotation] = []
    written: list[str] = []

    for spec in conditions:
        for i in range(n_per_condition):
            rng = _query_rng(seed, spec, i)
            qry_id = f"{spec.label}_{i:04d}"
            if mode == "track":
                buf, ref_id = _track_query(refs, segment_seconds, spec, rng,
                                           noise_bank, rir_bank)
                manifest_rows.append((f"{qry_id}.wav", ref_id, spec.label))
            else:
                buf, anns = _segment_query(refs, segment_seconds, spec, rng,
                                           noise_bank, rir_bank, qry_id,
                                           crossfade_seconds, max_snippets)
                annotations.extend(anns)
            write_wav(buf, out_path / f"{qry_id}.wav")
            written.append(f"{qry_id}.wav")

    result: dict = {"queries": written, "out_dir": str(out_path)}
    if mode == "track":
        manifest = out_path / "manifest.csv"
        with open(manifest, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(MANIFEST_COLUMNS)
            writer.writerows(manifest_rows)
        result["manifest"] = str(manifest)
    else:
        gt = out_path / "ground_truth.csv"
        write_ground_truth_csv(annotations, gt)
        result["ground_truth"] = str(gt)
    return result


def _excerpt(ref: AudioBuffer, segment_seconds: float, rng: np.random.Generator) -> tuple[AudioBuffer, float]:
    n_seg = int(round(segment_seconds * ref.sample_rate))
    max_start = ref.samples.size - n_seg
    start = int(rng.integers(max_start + 1))
    return ref.replace(ref.samples[start : start + n_seg].copy()), start / ref.sample_rate


def _track_query(refs, segment_seconds, spec, rng, noise_bank, rir_bank):
    ref_id, ref = refs[int(rng.integers(len(refs)))]
    excerpt, _ = _excerpt(ref, segment_seconds, rng)
    out, _ = apply_augmentation(excerpt, spec, rng, noise_bank, rir_bank)
    return out, ref_id


def _segment_query(refs, segment_seconds, spec, rng, noise_bank, rir_bank,
                   qry_id, crossfade_seconds, max_snippets):
    n_snip = int(rng.integers(1, min(max_snippets, len(refs)) + 1))
    chosen = rng.choice(len(refs), size=n_snip, replace=False)
    sample_rate = refs[0][1].sample_rate
    fade = int(round(crossfade_seconds * sample_rate))
    pieces: list[np.ndarray] = []
    meta: list[tuple[str, float, float, float]] = []  # ref_id, t0, duration, rate
    for idx in chosen:
        ref_id, ref = refs[int(idx)]
        excerpt, t0 = _excerpt(ref, segment_seconds, rng)
        out, rate = apply_augmentation(excerpt, spec, rng, noise_bank, rir_bank)
        pieces.append(out.samples)
        meta.append((ref_id, t0, out.duration, rate))
    mixed = _crossfade_concat(pieces, fade if n_snip > 1 else 0)
    fade_s = fade / sample_rate
    annotations = []
    cursor = 0.0
    for j, (ref_id, t0, duration, rate) in enumerate(meta):
        q_start = cursor if j == 0 else cursor + fade_s
        q_end = cursor + duration
        offset_into_snippet = q_start - cursor
        annotations.append(
            Annotation(
                qry_id=qry_id,
                ref_id=ref_id,
                q_start=q_start,
                q_end=q_end,
                r_start=t0 + offset_into_snippet * rate,
                r_end=t0 + segment_seconds,
            )
        )
        cursor += duration - fade_s if j < len(meta) - 1 else duration
    return AudioBuffer(_clip(mixed), sample_rate), annotations
