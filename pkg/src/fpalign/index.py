"""Exact and inverted-file (IVF) nearest-neighbor indexes over fingerprints.

Similarity is the inner product, which equals cosine similarity because every
indexed vector and every query is unit-norm.  Results are always sorted by
similarity descending with ties broken by ascending global id, so searches are
fully deterministic and independent of any internal parallelism.

The IVF index partitions vectors by their nearest k-means centroid and probes
only the ``n_probe`` closest lists at query time; probing all lists reproduces
exact search bit-for-bit, which the test suite uses as a free oracle.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _binio
from .embedding import Fingerprint
from .errors import ParameterError, ParseError, ShapeError

AFPI_MAGIC = b"AFPI"
FORMAT_VERSION = 1
TYPE_EXACT = 0
TYPE_IVF = 1

UNIT_NORM_TOL = 1e-4


@dataclass
class IndexEntry:
    global_id: int
    track_id: str
    frame_index: int
    t_start: float


@dataclass
class SearchResult:
    entry: IndexEntry
    similarity: float


@dataclass
class IvfParams:
    n_lists: int = 64
    n_probe: int = 8
    kmeans_iters: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_lists < 1 or self.n_probe < 1 or self.kmeans_iters < 1:
            raise ParameterError("n_lists, n_probe and kmeans_iters must be positive")
        if self.n_probe > self.n_lists:
            raise ParameterError(f"n_probe ({self.n_probe}) exceeds n_lists ({self.n_lists})")


def kmeans(
    points: np.ndarray,
    k: int,
    iters: int = 20,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd's algorithm with k-means++ seeding.

    Deterministic given ``seed``.  Empty clusters are re-seeded from the point
    currently farthest from its assigned centroid.  Returns (centroids,
    assignments, inertia_history); inertia is recorded after each assignment
    step and is non-increasing.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ShapeError(f"points must be 2-D, got shape {points.shape}")
    n = points.shape[0]
    if k <= 0:
        raise ParameterError(f"k must be positive, got {k}")
    if k > n:
        raise ParameterError(f"k ({k}) exceeds number of points ({n})")
    if not np.isfinite(points).all():
        raise ParameterError("points contain non-finite values")

    rng = np.random.default_rng(seed)
    sq_norms = np.einsum("ij,ij->i", points, points)

    # k-means++ seeding
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists_to(points, sq_norms, points[chosen[0]])
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # All remaining mass at distance zero (duplicate points); take the
            # first index not yet chosen to stay deterministic.
            taken = set(chosen)
            idx = next(i for i in range(n) if i not in taken)
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists_to(points, sq_norms, points[idx]))
    centroids = points[chosen].copy()

    assignments = np.zeros(n, dtype=np.int64)
    inertia_history: list[float] = []
    for _ in range(iters):
        dists = _sq_dist_matrix(points, sq_norms, centroids)
        new_assignments = np.argmin(dists, axis=1)
        inertia_history.append(float(dists[np.arange(n), new_assignments].sum()))
        assignments = new_assignments

        moved = False
        counts = np.bincount(assignments, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assignments, points)
        point_d2 = dists[np.arange(n), assignments]
        for j in range(k):
            if counts[j] == 0:
                far = int(np.argmax(point_d2))
                new_c = points[far]
                point_d2 = point_d2.copy()
                point_d2[far] = 0.0  # a second empty cluster must grab a different point
            else:
                new_c = sums[j] / counts[j]
            if not np.array_equal(new_c, centroids[j]):
                moved = True
                centroids[j] = new_c
        if not moved:
            break
    return centroids, assignments, inertia_history


def _sq_dists_to(points: np.ndarray, sq_norms: np.ndarray, c: np.ndarray) -> np.ndarray:
    d2 = sq_norms - 2.0 * (points @ c) + float(c @ c)
    return np.maximum(d2, 0.0)


def _sq_dist_matrix(points: np.ndarray, sq_norms: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    c_norms = np.einsum("ij,ij->i", centroids, centroids)
    d2 = sq_norms[:, None] - 2.0 * (points @ centroids.T) + c_norms[None, :]
    return np.maximum(d2, 0.0)


class ExactIndex:
    """Immutable flat index answering exact top-k inner-product queries."""

    type_tag = TYPE_EXACT

    def __init__(self, vectors: np.ndarray, entries: list[IndexEntry]):
        self.vectors = vectors  # (n, d) float32
        self.entries = entries
        self.dim = int(vectors.shape[1])
        self.count = int(vectors.shape[0])

    def search(self, query: np.ndarray, k: int) -> list[SearchResult]:
        query = _check_query(query, self.dim, k)
        sims = self.vectors @ query
        k_eff = min(k, self.count)
        order = np.lexsort((np.arange(self.count), -sims))[:k_eff]
        return [SearchResult(self.entries[int(i)], float(sims[int(i)])) for i in order]


class IvfIndex:
    """Inverted-file index probing the n_probe nearest coarse centroids."""

    type_tag = TYPE_IVF

    def __init__(
        self,
        vectors: np.ndarray,
        entries: list[IndexEntry],
        centroids: np.ndarray,
        lists: list[np.ndarray],
        n_probe: int,
    ):
        self.vectors = vectors
        self.entries = entries
        self.centroids = centroids  # (n_lists, d) float32
        self.lists = lists  # per-list ascending arrays of global ids
        self.n_probe = n_probe
        self.dim = int(vectors.shape[1])
        self.count = int(vectors.shape[0])
        self.n_lists = int(centroids.shape[0])

    def search(self, query: np.ndarray, k: int, n_probe: int | None = None) -> list[SearchResult]:
        query = _check_query(query, self.dim, k)
        probe = self.n_probe if n_probe is None else n_probe
        if probe < 1 or probe > self.n_lists:
            raise ParameterError(f"n_probe must be in [1, {self.n_lists}], got {probe}")
        c = self.centroids.astype(np.float64)
        d2 = np.einsum("ij,ij->i", c, c) - 2.0 * (c @ query)
        probe_order = np.argsort(d2, kind="stable")[:probe]
        cand = np.concatenate([self.lists[int(j)] for j in probe_order]) if probe else np.array([])
        if cand.size == 0:
            return []
        sims = self.vectors[cand] @ query
        k_eff = min(k, cand.size)
        order = np.lexsort((cand, -sims))[:k_eff]
        return [
            SearchResult(self.entries[int(cand[int(i)])], float(sims[int(i)])) for i in order
        ]


Index = ExactIndex | IvfIndex


def _check_query(query: np.ndarray, dim: int, k: int) -> np.ndarray:
    if k < 1:
        raise ParameterError(f"k must be positive, got {k}")
    # float64 so similarities are accumulated in double precision; stored
    # vectors stay float32 (the file format's dtype) and promote on multiply.
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (dim,):
        raise ShapeError(f"query has shape {query.shape}, expected ({dim},)")
    return query


def _collect(fps: list[Fingerprint]) -> tuple[np.ndarray, list[IndexEntry]]:
    if not fps:
        raise ParameterError("cannot build an index from zero fingerprints")
    dim = fps[0].vector.shape[0]
    for fp in fps:
        if fp.vector.shape != (dim,):
            raise ShapeError(
                f"mixed fingerprint dimensions: {fp.vector.shape[0]} vs {dim}"
            )
    vectors = np.stack([fp.vector for fp in fps]).astype(np.float32)
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        bad = int(np.argmax(np.abs(norms - 1.0)))
        raise ParameterError(f"fingerprint {bad} is not unit-norm (|v| = {norms[bad]:.6f})")
    # Quantize timing to float32 at build time so a save/load roundtrip is lossless.
    entries = [
        IndexEntry(i, fp.track_id, fp.frame_index, float(np.float32(fp.t_start)))
        for i, fp in enumerate(fps)
    ]
    return vectors, entries


def build_exact(fps: list[Fingerprint]) -> ExactIndex:
    vectors, entries = _collect(fps)
    return ExactIndex(vectors, entries)


def build_ivf(fps: list[Fingerprint], params: IvfParams) -> IvfIndex:
    vectors, entries = _collect(fps)
    n = vectors.shape[0]
    if n < params.n_lists:
        raise ParameterError(f"need at least n_lists ({params.n_lists}) vectors, got {n}")
    centroids, assignments, _ = kmeans(
        vectors, params.n_lists, iters=params.kmeans_iters, seed=params.seed
    )
    lists = [np.flatnonzero(assignments == j).astype(np.uint32) for j in range(params.n_lists)]
    return IvfIndex(vectors, entries, centroids.astype(np.float32), lists, params.n_probe)


def search(index: Index, query: np.ndarray, k: int) -> list[SearchResult]:
    return index.search(query, k)


def search_batch(
    index: Index,
    queries: list[np.ndarray],
    k: int,
    threads: int = 1,
) -> list[list[SearchResult]]:
    """Search many queries; results are in query order regardless of thread count."""
    if threads <= 1 or len(queries) < 2:
        return [index.search(q, k) for q in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda q: index.search(q, k), queries))


def save_index(index: Index, path: str | os.PathLike) -> None:
    track_ids = sorted({e.track_id for e in index.entries})
    ref = {t: i for i, t in enumerate(track_ids)}
    with open(path, "wb") as fh:
        fh.write(AFPI_MAGIC)
        _binio.write_u16(fh, FORMAT_VERSION)
        fh.write(struct.pack("<B", index.type_tag))
        _binio.write_u32(fh, index.dim)
        _binio.write_u32(fh, index.count)
        _binio.write_string_table(fh, track_ids)
        for e in index.entries:
            _binio.write_u32(fh, ref[e.track_id])
            _binio.write_u32(fh, e.frame_index)
            _binio.write_f32(fh, e.t_start)
        _binio.write_f32_array(fh, index.vectors)
        if isinstance(index, IvfIndex):
            _binio.write_u32(fh, index.n_lists)
            _binio.write_u32(fh, index.n_probe)
            _binio.write_f32_array(fh, index.centroids)
            for ids in index.lists:
                _binio.write_u32(fh, len(ids))
                fh.write(np.ascontiguousarray(ids, dtype="<u4").tobytes())


def load_index(path: str | os.PathLike, expect: str | None = None) -> Index:
    """Load an .afpi file; ``expect`` ("exact" or "ivf") enforces the type tag."""
    with _binio.open_for_read(path) as fh:
        _binio.check_magic(fh, AFPI_MAGIC)
        _binio.check_version(fh, FORMAT_VERSION)
        tag = struct.unpack("<B", fh.read(1) or b"\xff")[0]
        if tag not in (TYPE_EXACT, TYPE_IVF):
            raise ParseError(f"unknown index type tag {tag}")
        if expect is not None:
            want = TYPE_EXACT if expect == "exact" else TYPE_IVF
            if tag != want:
                raise ParseError(f"index type tag is {tag}, expected {want} ({expect})")
        dim = _binio.read_u32(fh, "dim")
        count = _binio.read_u32(fh, "count")
        track_ids = _binio.read_string_table(fh)
        entries = []
        for i in range(count):
            r = _binio.read_u32(fh, "track ref")
            if r >= len(track_ids):
                raise ParseError(f"entry {i} references string {r} of {len(track_ids)}")
            frame_index = _binio.read_u32(fh, "frame index")
            t_start = _binio.read_f32(fh, "t_start")
            entries.append(IndexEntry(i, track_ids[r], frame_index, t_start))
        vectors = _binio.read_f32_array(fh, count * dim, "vectors").reshape(count, dim)
        if tag == TYPE_EXACT:
            if fh.read(1):
                raise ParseError("trailing bytes after exact-index payload")
            return ExactIndex(vectors, entries)
        n_lists = _binio.read_u32(fh, "n_lists")
        n_probe = _binio.read_u32(fh, "n_probe")
        centroids = _binio.read_f32_array(fh, n_lists * dim, "centroids").reshape(n_lists, dim)
        lists = []
        for _ in range(n_lists):
            m = _binio.read_u32(fh, "list length")
            buf = fh.read(m * 4)
            if len(buf) != m * 4:
                raise ParseError("truncated inverted list")
            lists.append(np.frombuffer(buf, dtype="<u4").copy())
        if fh.read(1):
            raise ParseError("trailing bytes after IVF payload")
        return IvfIndex(vectors, entries, centroids, lists, n_probe)
