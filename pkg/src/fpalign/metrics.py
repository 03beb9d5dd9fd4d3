"""Scoring predicted aligned segments against ground truth.

Three complementary views, all reported as percentages:

* track level — did we find the right (query, reference) pairs at all;
* bounding-box level — greedy one-to-one matching of segments by 2-D IoU
  over the (query-time x reference-time) rectangle;
* length level — micro-averaged overlap of predicted vs. true query-time
  coverage, computed per pair on merged interval unions.

Every F1 is 2PR/(P+R) and recomputable from the counts carried alongside it;
an undefined ratio (nothing predicted and nothing to find) scores 0.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

from .errors import DataError, ParameterError

DEFAULT_IOU_THRESHOLD = 0.3

GT_COLUMNS = ["qry_id", "ref_id", "q_start", "q_end", "r_start", "r_end"]


@dataclass
class Annotation:
    """A segment on both timelines: query interval mapped to reference interval."""

    qry_id: str
    ref_id: str
    q_start: float
    q_end: float
    r_start: float
    r_end: float

    @property
    def pair(self) -> tuple[str, str]:
        return (self.qry_id, self.ref_id)


@dataclass
class MetricResult:
    precision: float
    recall: float
    f1: float
    counts: dict


def _prf(tp: float, n_pred: float, n_gt: float) -> tuple[float, float, float]:
    precision = 100.0 * tp / n_pred if n_pred > 0 else 0.0
    recall = 100.0 * tp / n_gt if n_gt > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def track_f1(preds: list[Annotation], gts: list[Annotation]) -> MetricResult:
    """Set precision/recall over distinct (query, reference) pairs."""
    pred_pairs = {p.pair for p in preds}
    gt_pairs = {g.pair for g in gts}
    tp = len(pred_pairs & gt_pairs)
    p, r, f1 = _prf(tp, len(pred_pairs), len(gt_pairs))
    counts = {"tp": tp, "fp": len(pred_pairs) - tp, "fn": len(gt_pairs) - tp}
    return MetricResult(p, r, f1, counts)


def iou_2d(pred: Annotation, gt: Annotation) -> float:
    """Intersection over union of the two time-time rectangles (0 when disjoint)."""
    area_pred = (pred.q_end - pred.q_start) * (pred.r_end - pred.r_start)
    area_gt = (gt.q_end - gt.q_start) * (gt.r_end - gt.r_start)
    if area_pred <= 0 or area_gt <= 0:
        raise ParameterError("zero-area segment box")
    q_overlap = min(pred.q_end, gt.q_end) - max(pred.q_start, gt.q_start)
    r_overlap = min(pred.r_end, gt.r_end) - max(pred.r_start, gt.r_start)
    inter = max(q_overlap, 0.0) * max(r_overlap, 0.0)
    return inter / (area_pred + area_gt - inter)


def bbox_f1(
    preds: list[Annotation],
    gts: list[Annotation],
    iou_thr: float = DEFAULT_IOU_THRESHOLD,
) -> MetricResult:
    """Greedy one-to-one segment matching by descending IoU, same pair only.

    A prediction counts as a true positive when its matched ground-truth
    segment reaches the IoU threshold; each side matches at most once.
    """
    candidates = []
    for pi, pred in enumerate(preds):
        for gi, gt in enumerate(gts):
            if pred.pair != gt.pair:
                continue
            iou = iou_2d(pred, gt)
            if iou >= iou_thr:
                candidates.append((-iou, pi, gi))
    candidates.sort()
    used_pred: set[int] = set()
    used_gt: set[int] = set()
    tp = 0
    for _, pi, gi in candidates:
        if pi in used_pred or gi in used_gt:
            continue
        used_pred.add(pi)
        used_gt.add(gi)
        tp += 1
    p, r, f1 = _prf(tp, len(preds), len(gts))
    counts = {"tp": tp, "fp": len(preds) - tp, "fn": len(gts) - tp}
    return MetricResult(p, r, f1, counts)


def merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union of 1-D intervals as a sorted list of disjoint spans."""
    spans = sorted((s, e) for s, e in intervals if e > s)
    merged: list[tuple[float, float]] = []
    for s, e in spans:
        if merged and s <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], e))
        else:
            merged.append((s, e))
    return merged


def _union_length(merged: list[tuple[float, float]]) -> float:
    return sum(e - s for s, e in merged)


def _intersection_length(
    a: list[tuple[float, float]], b: list[tuple[float, float]]
) -> float:
    total = 0.0
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if hi > lo:
            total += hi - lo
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return total


def length_f1(preds: list[Annotation], gts: list[Annotation]) -> MetricResult:
    """Micro-averaged coverage of the query timeline, per (query, reference) pair.

    For each pair the predicted and true query intervals are merged into
    unions; matched duration is the overlap of the two unions.  Precision
    divides total matched duration by total predicted duration, recall by
    total true duration.  Duration on the wrong reference matches nothing.
    """
    pred_by_pair: dict[tuple[str, str], list[tuple[float, float]]] = {}
    gt_by_pair: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for p in preds:
        pred_by_pair.setdefault(p.pair, []).append((p.q_start, p.q_end))
    for g in gts:
        gt_by_pair.setdefault(g.pair, []).append((g.q_start, g.q_end))

    matched = pred_total = gt_total = 0.0
    for pair, spans in pred_by_pair.items():
        merged = merge_intervals(spans)
        pred_total += _union_length(merged)
        if pair in gt_by_pair:
            matched += _intersection_length(merged, merge_intervals(gt_by_pair[pair]))
    for spans in gt_by_pair.values():
        gt_total += _union_length(merge_intervals(spans))
    p, r, f1 = _prf(matched, pred_total, gt_total)
    counts = {
        "matched_seconds": round(matched, 3),
        "predicted_seconds": round(pred_total, 3),
        "ground_truth_seconds": round(gt_total, 3),
    }
    return MetricResult(p, r, f1, counts)


def _parse_rows(path: str | os.PathLike, columns: list[str]) -> list[dict[str, str]]:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"{path}: cannot read segment table: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected header {columns}") from None
        if header != columns:
            raise DataError(f"{path}: bad header {header}, expected {columns}")
        return [dict(zip(columns, row)) for row in reader if row]


def _annotation_from_row(row: dict[str, str], path, line: int) -> Annotation:
    try:
        ann = Annotation(
            qry_id=row["qry_id"],
            ref_id=row["ref_id"],
            q_start=float(row["q_start"]),
            q_end=float(row["q_end"]),
            r_start=float(row["r_start"]),
            r_end=float(row["r_end"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}:{line}: malformed row: {exc}") from exc
    if ann.q_end <= ann.q_start or ann.r_end <= ann.r_start:
        raise DataError(f"{path}:{line}: segment must end after it starts")
    return ann


def read_ground_truth_csv(path: str | os.PathLike) -> list[Annotation]:
    rows = _parse_rows(path, GT_COLUMNS)
    return [_annotation_from_row(row, path, i + 2) for i, row in enumerate(rows)]


def read_predictions_csv(path: str | os.PathLike) -> list[Annotation]:
    """Load the prediction table, keeping only the segment geometry."""
    from .alignment import PREDICTION_COLUMNS

    rows = _parse_rows(path, PREDICTION_COLUMNS)
    return [_annotation_from_row(row, path, i + 2) for i, row in enumerate(rows)]


def write_ground_truth_csv(annotations: list[Annotation], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GT_COLUMNS)
        for a in annotations:
            writer.writerow(
                [
                    a.qry_id,
                    a.ref_id,
                    f"{a.q_start:.3f}",
                    f"{a.q_end:.3f}",
                    f"{a.r_start:.3f}",
                    f"{a.r_end:.3f}",
                ]
            )


def evaluate_annotations(
    preds: list[Annotation],
    gts: list[Annotation],
    iou_thr: float = DEFAULT_IOU_THRESHOLD,
) -> dict:
    """Metric report over already-parsed annotations (rates to 2 decimals)."""
    track = track_f1(preds, gts)
    bbox = bbox_f1(preds, gts, iou_thr)
    length = length_f1(preds, gts)
    return {
        "schema_version": 1,
        "iou_thr": iou_thr,
        "track_f1": round(track.f1, 2),
        "bbox_f1": round(bbox.f1, 2),
        "length_f1": round(length.f1, 2),
        "counts": {
            "track": track.counts,
            "bbox": bbox.counts,
            "length": length.counts,
        },
    }


def evaluate_run(
    pred_csv: str | os.PathLike,
    gt_csv: str | os.PathLike,
    iou_thr: float = DEFAULT_IOU_THRESHOLD,
) -> dict:
    """Parse both CSVs and score them; malformed rows fail with line numbers."""
    return evaluate_annotations(
        read_predictions_csv(pred_csv), read_ground_truth_csv(gt_csv), iou_thr
    )
