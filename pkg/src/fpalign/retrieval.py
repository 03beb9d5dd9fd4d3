"""Track-level identification: per-frame voting and hit-rate evaluation.

A query's frames are searched against the reference index; every top-k
neighbor adds to its track's score (sum of similarities by default, or plain
vote counting).  The highest-scoring track is the identification answer, and
hit rates aggregate per degradation condition with the overall figure being
the unweighted mean across conditions.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from scipy.signal import resample_poly

from .augment import read_wav
from .embedding import fingerprint_frames, read_embeddings, read_projection_weights
from .errors import DataError, FpalignError, ParameterError
from .index import Index, build_exact, search_batch
from .peaks import PeakDB, PeakParams, build_peak_db, fingerprint_signal, match_peaks

logger = logging.getLogger(__name__)

AGGREGATIONS = ("similarity_sum", "vote_count")

MANIFEST_COLUMNS = ["query_path", "truth_track_id", "condition"]


@dataclass
class TrackQueryResult:
    query_id: str
    ranked: list[tuple[str, float]]  # (track_id, score), best first


@dataclass
class HitRateReport:
    per_condition: dict[str, float]
    overall: float | None
    n_queries: int
    failures: list[str] = field(default_factory=list)

    def to_report(self) -> dict:
        return {
            "schema_version": 1,
            "empty": self.n_queries == 0,
            "n_queries": self.n_queries,
            "per_condition": {k: round(v, 2) for k, v in sorted(self.per_condition.items())},
            "overall": None if self.overall is None else round(self.overall, 2),
            "failures": sorted(self.failures),
        }


def identify(
    query_fps: list,
    index: Index,
    k: int = 5,
    aggregation: str = "similarity_sum",
    threads: int = 1,
) -> TrackQueryResult:
    """Score reference tracks by their frames' appearances in per-frame top-k.

    ``similarity_sum`` adds each neighbor's similarity to its track;
    ``vote_count`` adds 1 per neighbor.  Ranking is by score descending with
    ties broken by track id, and is invariant to query frame order.
    """
    if not query_fps:
        raise ParameterError("no query fingerprints given")
    if aggregation not in AGGREGATIONS:
        raise ParameterError(f"aggregation must be one of {AGGREGATIONS}, got {aggregation!r}")
    contributions: dict[str, list[float]] = {}
    results = search_batch(index, [fp.vector for fp in query_fps], k, threads=threads)
    for hits in results:
        for hit in hits:
            value = hit.similarity if aggregation == "similarity_sum" else 1.0
            contributions.setdefault(hit.entry.track_id, []).append(value)
    # fsum is exactly rounded, so scores do not depend on accumulation order.
    scores = {track: math.fsum(values) for track, values in contributions.items()}
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return TrackQueryResult(query_id=query_fps[0].track_id, ranked=ranked)


def top1_hit_rate(results: list[TrackQueryResult], truth: dict[str, str]) -> float:
    """Percentage of queries whose top-ranked track matches the truth map."""
    if not results:
        raise ParameterError("no query results given")
    correct = 0
    for res in results:
        if res.query_id not in truth:
            raise DataError(f"query {res.query_id!r} missing from truth map")
        if res.ranked and res.ranked[0][0] == truth[res.query_id]:
            correct += 1
    return 100.0 * correct / len(results)


@dataclass
class RetrievalConfig:
    """Settings for a manifest-driven identification run."""

    mode: str = "peaks"  # "peaks" (WAV landmarks) or "embedding" (.afpe + index)
    k: int = 5
    aggregation: str = "similarity_sum"
    strict: bool = False
    threads: int = 1
    weights_path: str | None = None
    peak_params: PeakParams = field(default_factory=PeakParams)

    def __post_init__(self) -> None:
        if self.mode not in ("peaks", "embedding"):
            raise ParameterError(f"mode must be 'peaks' or 'embedding', got {self.mode!r}")


def read_manifest(path: str | os.PathLike) -> list[tuple[str, str, str]]:
    """Rows of (query_path, truth_track_id, condition); paths resolve
    relative to the manifest's own directory."""
    base = Path(path).parent
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != MANIFEST_COLUMNS:
                raise DataError(f"{path}: bad header {header}, expected {MANIFEST_COLUMNS}")
            for i, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 3:
                    raise DataError(f"{path}:{i}: expected 3 columns, got {len(row)}")
                qpath = Path(row[0])
                if not qpath.is_absolute():
                    qpath = base / qpath
                rows.append((str(qpath), row[1], row[2]))
    except OSError as exc:
        raise DataError(f"{path}: cannot read manifest: {exc}") from exc
    return rows


def _peaks_top1(query_path: str, db: PeakDB, params: PeakParams) -> str | None:
    buf = read_wav(query_path)
    samples = buf.samples
    if buf.sample_rate != db.sample_rate:
        frac = Fraction(db.sample_rate, buf.sample_rate)
        samples = resample_poly(samples, up=frac.numerator, down=frac.denominator)
    matches = match_peaks(fingerprint_signal(samples, params), db)
    return matches[0].track_id if matches else None


def load_peak_references(reference_dir: str | os.PathLike, params: PeakParams) -> PeakDB:
    paths = sorted(Path(reference_dir).glob("*.wav"))
    if not paths:
        raise DataError(f"{reference_dir}: no .wav references found")
    tracks = {}
    rate = None
    for p in paths:
        buf = read_wav(p)
        if rate is None:
            rate = buf.sample_rate
        elif buf.sample_rate != rate:
            raise DataError(f"{p}: sample rate {buf.sample_rate} != {rate} of other references")
        tracks[p.stem] = buf.samples
    return build_peak_db(tracks, rate, params)


def load_embedding_references(
    reference_dir: str | os.PathLike, weights_path: str | None
) -> tuple[Index, object]:
    if not weights_path:
        raise ParameterError("embedding mode requires a projection weights path")
    weights = read_projection_weights(weights_path)
    paths = sorted(Path(reference_dir).glob("*.afpe"))
    if not paths:
        raise DataError(f"{reference_dir}: no .afpe references found")
    fps = []
    for p in paths:
        fps.extend(fingerprint_frames(read_embeddings(p), weights))
    return build_exact(fps), weights


def run_track_eval(
    reference_dir: str | os.PathLike,
    query_manifest: str | os.PathLike,
    config: RetrievalConfig | None = None,
) -> HitRateReport:
    """Identify every manifest query against the references, per condition.

    The reference index is built once.  In lenient mode unreadable queries are
    recorded as failures and scored as misses; strict mode raises instead.
    An empty manifest produces the explicit empty report.
    """
    config = config or RetrievalConfig()
    rows = read_manifest(query_manifest)
    if not rows:
        return HitRateReport(per_condition={}, overall=None, n_queries=0)

    if config.mode == "peaks":
        db = load_peak_references(reference_dir, config.peak_params)
        index = weights = None
    else:
        index, weights = load_embedding_references(reference_dir, config.weights_path)

    totals: dict[str, int] = {}
    correct: dict[str, int] = {}
    failures: list[str] = []
    for query_path, truth_id, condition in rows:
        totals[condition] = totals.get(condition, 0) + 1
        try:
            if config.mode == "peaks":
                top = _peaks_top1(query_path, db, config.peak_params)
            else:
                fps = fingerprint_frames(read_embeddings(query_path), weights)
                result = identify(fps, index, k=config.k,
                                  aggregation=config.aggregation, threads=config.threads)
                top = result.ranked[0][0] if result.ranked else None
        except FpalignError as exc:
            if config.strict:
                raise
            logger.warning("query %s failed: %s", query_path, exc)
            failures.append(f"{query_path}: {exc}")
            continue
        if top == truth_id:
            correct[condition] = correct.get(condition, 0) + 1

    per_condition = {
        cond: 100.0 * correct.get(cond, 0) / totals[cond] for cond in sorted(totals)
    }
    overall = sum(per_condition.values()) / len(per_condition)
    return HitRateReport(
        per_condition=per_condition,
        overall=overall,
        n_queries=len(rows),
        failures=failures,
    )
