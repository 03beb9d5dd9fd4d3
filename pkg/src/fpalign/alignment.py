"""Segment-level inference: thresholded matches, robust trajectories, boundaries.

The pipeline collects per-frame top-k neighbors above a similarity threshold,
groups match points by (query, reference), fits candidate lines
``t_ref = a * t_qry + b`` with Huber-reweighted least squares from multiple
seeds, keeps the strongest trajectory per group (most inliers, then highest
R-squared), and converts its inlier span to aligned segment boundaries.

The slope ``a`` captures a uniform speed discrepancy: a > 1 means the query
runs more slowly than the reference.
"""

from __future__ import annotations

import csv
import logging
import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from .embedding import EmbeddingMatrix, ProjectionWeights, fingerprint_frames
from .errors import FpalignError, ParameterError, UnderdeterminedError
from .index import Index, search_batch

logger = logging.getLogger(__name__)

# 1.345 is the 95%-efficiency Huber constant; 1.4826 rescales MAD to sigma.
ADAPTIVE_DELTA_CONSTANT = 1.345 * 1.4826
ADAPTIVE_DELTA_FLOOR = 0.05  # seconds; keeps delta alive on near-perfect data


@dataclass
class MatchPoint:
    """One retained frame match: query time, reference time, similarity."""

    t_qry: float
    t_ref: float
    similarity: float
    ref_id: str
    qry_id: str


@dataclass
class Trajectory:
    a: float
    b: float
    inliers: list[MatchPoint]
    r2: float
    seed_id: int

    @property
    def inlier_count(self) -> int:
        return len(self.inliers)


@dataclass
class AlignedSegment:
    qry_id: str
    ref_id: str
    q_start: float
    q_end: float
    r_start: float
    r_end: float
    a: float
    b: float
    inlier_count: int
    r2: float


@dataclass
class AlignParams:
    """Knobs for match collection and trajectory fitting."""

    k: int = 5
    sim_threshold: float = 0.7
    huber_delta: float | None = None  # None = adaptive MAD-based delta per iteration
    inlier_tolerance: float = 1.0  # seconds
    n_seeds: int = 16
    min_inliers: int = 3
    a_bounds: tuple[float, float] = (0.6, 1.7)
    segment_length: float = 1.0  # seconds added past the last inlier

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if not 0.0 < self.sim_threshold < 1.0:
            raise ParameterError(f"sim_threshold must be in (0, 1), got {self.sim_threshold}")
        if self.min_inliers < 2:
            raise ParameterError(f"min_inliers must be >= 2, got {self.min_inliers}")
        if self.n_seeds < 1:
            raise ParameterError(f"n_seeds must be >= 1, got {self.n_seeds}")
        if self.inlier_tolerance <= 0 or self.segment_length <= 0:
            raise ParameterError("inlier_tolerance and segment_length must be positive")
        if self.huber_delta is not None:
            if not isinstance(self.huber_delta, (int, float)) or isinstance(self.huber_delta, bool):
                raise ParameterError(f"huber_delta must be a number or None, got {self.huber_delta!r}")
            if self.huber_delta <= 0:
                raise ParameterError(f"huber_delta must be positive, got {self.huber_delta}")
        if self.a_bounds[0] >= self.a_bounds[1]:
            raise ParameterError(f"invalid a_bounds {self.a_bounds}")


GroupKey = tuple[str, str]  # (qry_id, ref_id)


def collect_matches(
    query_fps: list,
    index: Index,
    params: AlignParams,
    threads: int = 1,
) -> dict[GroupKey, list[MatchPoint]]:
    """Top-k search per query frame, thresholded and grouped by (query, reference)."""
    groups: dict[GroupKey, list[MatchPoint]] = {}
    results = search_batch(index, [fp.vector for fp in query_fps], params.k, threads=threads)
    for fp, hits in zip(query_fps, results):
        for hit in hits:
            if hit.similarity < params.sim_threshold:
                continue
            key = (fp.track_id, hit.entry.track_id)
            groups.setdefault(key, []).append(
                MatchPoint(
                    t_qry=fp.t_start,
                    t_ref=hit.entry.t_start,
                    similarity=hit.similarity,
                    ref_id=hit.entry.track_id,
                    qry_id=fp.track_id,
                )
            )
    return groups


def huber_fit_xy(
    x: np.ndarray,
    y: np.ndarray,
    delta: float | None = None,
    max_iters: int = 50,
    tol: float = 1e-9,
) -> tuple[float, float, np.ndarray]:
    """Fit y ~ a*x + b by iteratively reweighted least squares under Huber loss.

    Weights are 1 for residuals within delta and delta/|r| beyond it.  With
    ``delta=None`` the scale is re-estimated every iteration as
    max(1.345 * 1.4826 * MAD(residuals), 0.05); with ``delta=inf`` the fit
    reduces to ordinary least squares.  Deterministic; converges when both
    parameters move by less than ``tol``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError(f"x and y must be equal-length 1-D arrays, got {x.shape}, {y.shape}")
    if x.size < 2:
        raise UnderdeterminedError(f"need at least 2 points, got {x.size}")
    if np.ptp(x) == 0.0:
        raise UnderdeterminedError("all x values are equal; slope is undetermined")
    if delta is not None and delta <= 0:
        raise ParameterError(f"delta must be positive, got {delta}")

    a, b = _weighted_line_fit(x, y, np.ones_like(x))
    weights = np.ones_like(x)
    for _ in range(max_iters):
        resid = y - (a * x + b)
        if delta is None:
            mad = float(np.median(np.abs(resid - np.median(resid))))
            d = max(ADAPTIVE_DELTA_CONSTANT * mad, ADAPTIVE_DELTA_FLOOR)
        else:
            d = delta
        absr = np.abs(resid)
        with np.errstate(divide="ignore", invalid="ignore"):
            weights = np.where(absr <= d, 1.0, d / absr)
        a_new, b_new = _weighted_line_fit(x, y, weights)
        if max(abs(a_new - a), abs(b_new - b)) < tol:
            a, b = a_new, b_new
            break
        a, b = a_new, b_new
    return float(a), float(b), weights


def _weighted_line_fit(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    sw = np.sqrt(w)
    design = np.column_stack((x * sw, sw))
    coef, *_ = np.linalg.lstsq(design, y * sw, rcond=None)
    return float(coef[0]), float(coef[1])


def huber_fit(
    points: list[MatchPoint],
    delta: float | None = None,
) -> tuple[float, float, np.ndarray]:
    x = np.array([p.t_qry for p in points])
    y = np.array([p.t_ref for p in points])
    return huber_fit_xy(x, y, delta)


def r_squared(points: list[MatchPoint], a: float, b: float) -> float:
    """Coefficient of determination of the line over the given points.

    When the t_ref values are all equal (zero total variance) the convention
    is 1 for a perfect fit and 0 otherwise.
    """
    if len(points) < 2:
        raise UnderdeterminedError(f"need at least 2 points, got {len(points)}")
    y = np.array([p.t_ref for p in points])
    x = np.array([p.t_qry for p in points])
    resid = y - (a * x + b)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if np.allclose(resid, 0.0, atol=1e-12) else 0.0
    return 1.0 - ss_res / ss_tot


def fit_trajectories_seeded(
    points: list[MatchPoint],
    params: AlignParams,
    rng_seed,
) -> list[Trajectory]:
    """Candidate trajectories from one all-points fit plus random minimal samples.

    Seed 0 runs a Huber fit on every point.  Each further seed draws a random
    2-point sample, takes the exact line through it, and refines once with a
    Huber fit over that line's inliers.  Candidates keep the points within
    ``inlier_tolerance`` of their line; those with too few inliers or a slope
    outside ``a_bounds`` are discarded.  Deterministic given ``rng_seed``.
    """
    if len(points) < params.min_inliers:
        return []
    pts = sorted(points, key=lambda p: (p.t_qry, p.t_ref, p.similarity))
    x = np.array([p.t_qry for p in pts])
    y = np.array([p.t_ref for p in pts])
    rng = np.random.default_rng(rng_seed)

    candidates: list[Trajectory] = []

    def consider(a: float, b: float, seed_id: int) -> None:
        resid = np.abs(y - (a * x + b))
        mask = resid <= params.inlier_tolerance
        if int(mask.sum()) < params.min_inliers:
            return
        if not params.a_bounds[0] <= a <= params.a_bounds[1]:
            return
        inliers = [p for p, m in zip(pts, mask) if m]
        candidates.append(Trajectory(a, b, inliers, r_squared(inliers, a, b), seed_id))

    try:
        a0, b0, _ = huber_fit_xy(x, y, params.huber_delta)
        consider(a0, b0, 0)
    except UnderdeterminedError:
        pass

    for seed_id in range(1, params.n_seeds):
        pair = _draw_minimal_sample(rng, x)
        if pair is None:
            continue
        i, j = pair
        a_min = (y[j] - y[i]) / (x[j] - x[i])
        b_min = y[i] - a_min * x[i]
        mask = np.abs(y - (a_min * x + b_min)) <= params.inlier_tolerance
        if int(mask.sum()) < 2:
            continue
        try:
            a_ref, b_ref, _ = huber_fit_xy(x[mask], y[mask], params.huber_delta)
        except UnderdeterminedError:
            continue
        consider(a_ref, b_ref, seed_id)
    return candidates


def _draw_minimal_sample(rng: np.random.Generator, x: np.ndarray, retries: int = 8):
    for _ in range(retries):
        i, j = (int(v) for v in rng.choice(x.size, size=2, replace=False))
        if x[i] != x[j]:
            return (i, j) if i < j else (j, i)
    return None


def select_best(candidates: list[Trajectory]) -> Trajectory | None:
    """Most inliers first, then larger R-squared, then lowest seed id."""
    if not candidates:
        return None
    return max(candidates, key=lambda t: (t.inlier_count, t.r2, -t.seed_id))


def trajectory_to_segment(traj: Trajectory, segment_length: float) -> AlignedSegment:
    """Earliest inlier starts the segment; latest inlier plus segment length ends it."""
    if not traj.inliers:
        raise ParameterError("trajectory has no inliers")
    t_qry = [p.t_qry for p in traj.inliers]
    t_ref = [p.t_ref for p in traj.inliers]
    first = traj.inliers[0]
    return AlignedSegment(
        qry_id=first.qry_id,
        ref_id=first.ref_id,
        q_start=min(t_qry),
        q_end=max(t_qry) + segment_length,
        r_start=min(t_ref),
        r_end=max(t_ref) + segment_length,
        a=traj.a,
        b=traj.b,
        inlier_count=traj.inlier_count,
        r2=traj.r2,
    )


def group_seed(run_seed: int, qry_id: str, ref_id: str) -> list[int]:
    """Deterministic per-group RNG seed, independent of group iteration order."""
    digest = zlib.crc32(f"{qry_id}\x00{ref_id}".encode("utf-8"))
    return [int(run_seed) & 0xFFFFFFFFFFFFFFFF, digest]


def align_groups(
    groups: dict[GroupKey, list[MatchPoint]],
    params: AlignParams,
    rng_seed: int,
) -> list[AlignedSegment]:
    segments = []
    for (qry_id, ref_id) in sorted(groups):
        points = groups[(qry_id, ref_id)]
        cands = fit_trajectories_seeded(points, params, group_seed(rng_seed, qry_id, ref_id))
        best = select_best(cands)
        if best is not None:
            segments.append(trajectory_to_segment(best, params.segment_length))
    return segments


def align(
    queries: list[EmbeddingMatrix],
    weights: ProjectionWeights,
    index: Index,
    params: AlignParams,
    rng_seed: int = 0,
    threads: int = 1,
    strict: bool = False,
) -> list[AlignedSegment]:
    """Full segment pipeline over a batch of query embedding matrices.

    Per-query failures are logged and skipped unless ``strict`` is set.
    """
    groups: dict[GroupKey, list[MatchPoint]] = {}
    for m in queries:
        try:
            fps = fingerprint_frames(m, weights, strict=strict)
            for key, pts in collect_matches(fps, index, params, threads=threads).items():
                groups.setdefault(key, []).extend(pts)
        except FpalignError:
            if strict:
                raise
            logger.warning("skipping query %r after error", m.track_id, exc_info=True)
    return align_groups(groups, params, rng_seed)


PREDICTION_COLUMNS = [
    "qry_id", "ref_id", "q_start", "q_end", "r_start", "r_end", "a", "b", "inliers", "r2",
]


def write_predictions_csv(segments: list[AlignedSegment], path: str | os.PathLike) -> None:
    """Emit the predictions table (times and fit stats to 3 decimals)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTION_COLUMNS)
        for s in segments:
            writer.writerow(
                [
                    s.qry_id,
                    s.ref_id,
                    f"{s.q_start:.3f}",
                    f"{s.q_end:.3f}",
                    f"{s.r_start:.3f}",
                    f"{s.r_end:.3f}",
                    f"{s.a:.3f}",
                    f"{s.b:.3f}",
                    s.inlier_count,
                    f"{s.r2:.3f}",
                ]
            )
