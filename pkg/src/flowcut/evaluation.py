"""Class-agnostic video-instance metrics.

Two metric families over the same dataset/prediction schema:

* detection AP/AR: spatio-temporal track IoU (summed per-frame
  intersections over summed unions), greedy score-ordered matching per
  IoU threshold 0.50:0.05:0.95, 101-point interpolated precision, size
  splits at 32^2 / 96^2 pixels of mean per-frame area, and AR at 10
  detections per video;
* region/boundary quality: per-video Hungarian assignment on mean frame
  IoU, J as the mean frame IoU of matched tracks (unmatched ground truth
  counts 0), F as a per-frame boundary F-measure with contour matching by
  dilation at a tolerance of 0.8% of the image diagonal, J&F their mean.

All scores live in [0, 1]; a size split with no ground-truth tracks
reports None rather than a misleading zero.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from .errors import SchemaError, ShapeError, ValidationError
from .tensor_io import DatasetFile, PixelMask, rle_decode

IOU_THRESHOLDS = np.round(np.arange(0.5, 1.0, 0.05), 2)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
AREA_RANGES = {
    "all": (0.0, math.inf),
    "small": (0.0, 32.0 ** 2),
    "medium": (32.0 ** 2, 96.0 ** 2),
    "large": (96.0 ** 2, math.inf),
}
MAX_DETECTIONS = 100
AR_DETECTIONS = 10
BOUNDARY_TOL_FRAC = 0.008
DEFAULT_AP_SCORE_THRESH = 0.8
DEFAULT_JF_SCORE_THRESH = 0.3


@dataclass
class Prediction:
    """One predicted track: confidence plus per-frame masks (None = absent)."""

    video_id: int
    score: float
    segmentations: list[PixelMask | None]


@dataclass
class EvalReport:
    ap: float | None = None
    ap50: float | None = None
    ap75: float | None = None
    ap_s: float | None = None
    ap_m: float | None = None
    ap_l: float | None = None
    ar10: float | None = None
    j_mean: float | None = None
    f_mean: float | None = None
    jf_mean: float | None = None
    per_video: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "ap": self.ap, "ap50": self.ap50, "ap75": self.ap75,
            "ap_s": self.ap_s, "ap_m": self.ap_m, "ap_l": self.ap_l,
            "ar10": self.ar10, "j_mean": self.j_mean, "f_mean": self.f_mean,
            "jf_mean": self.jf_mean,
            "per_video": {str(k): v for k, v in sorted(self.per_video.items())},
        }


def merge_reports(ap_report: EvalReport, jf_report: EvalReport) -> EvalReport:
    merged = EvalReport(
        ap=ap_report.ap, ap50=ap_report.ap50, ap75=ap_report.ap75,
        ap_s=ap_report.ap_s, ap_m=ap_report.ap_m, ap_l=ap_report.ap_l,
        ar10=ap_report.ar10, j_mean=jf_report.j_mean, f_mean=jf_report.f_mean,
        jf_mean=jf_report.jf_mean)
    for vid in set(ap_report.per_video) | set(jf_report.per_video):
        merged.per_video[vid] = {**ap_report.per_video.get(vid, {}),
                                 **jf_report.per_video.get(vid, {})}
    return merged


# ---------------------------------------------------------------------------
# Track-level IoU
# ---------------------------------------------------------------------------

def st_iou(gt_frames: Sequence[np.ndarray | None],
           pred_frames: Sequence[np.ndarray | None]) -> float:
    """Spatio-temporal IoU: summed intersections over summed unions.

    Absent masks count as empty; returns 0 when the union is empty.
    """
    if len(gt_frames) != len(pred_frames):
        raise ShapeError(
            f"frame counts differ: {len(gt_frames)} vs {len(pred_frames)}")
    inter = 0
    union = 0
    for g, p in zip(gt_frames, pred_frames):
        if g is None and p is None:
            continue
        if g is None:
            union += int(np.count_nonzero(p))
        elif p is None:
            union += int(np.count_nonzero(g))
        else:
            if g.shape != p.shape:
                raise ShapeError(f"mask shapes differ: {g.shape} vs {p.shape}")
            inter += int(np.logical_and(g, p).sum())
            union += int(np.logical_or(g, p).sum())
    return inter / union if union else 0.0


def hungarian(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-total-cost injective assignment over min(n, m) pairs."""
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValidationError(f"cost must be 2-d, got shape {c.shape}")
    if c.size and not np.isfinite(c).all():
        raise ValidationError("cost matrix contains non-finite entries")
    if 0 in c.shape:
        return []
    rows, cols = linear_sum_assignment(c)
    return list(zip(rows.tolist(), cols.tolist()))


# ---------------------------------------------------------------------------
# Shared track plumbing
# ---------------------------------------------------------------------------

def _decode_track(segs: Sequence[PixelMask | None]) -> list[np.ndarray | None]:
    return [None if s is None else rle_decode(s) for s in segs]


def _gt_tracks(ds: DatasetFile) -> dict[int, list[list[np.ndarray | None]]]:
    tracks: dict[int, list[list[np.ndarray | None]]] = {v.video_id: []
                                                        for v in ds.videos}
    for ann in ds.annotations:
        tracks[ann.video_id].append(_decode_track(ann.segmentations))
    return tracks


def _pred_tracks(ds: DatasetFile, preds: Sequence[Prediction],
                 score_thresh: float
                 ) -> dict[int, tuple[list[list[np.ndarray | None]], list[float]]]:
    """Validate, filter by score, and sort per video by descending score."""
    dims = {v.video_id: (v.height, v.width, len(v.file_names)) for v in ds.videos}
    by_video: dict[int, tuple[list, list]] = {v.video_id: ([], [])
                                              for v in ds.videos}
    for i, p in enumerate(preds):
        where = f"predictions[{i}]"
        if p.video_id not in dims:
            raise SchemaError(f"{where}.video_id: unknown video {p.video_id}")
        if not 0.0 <= p.score <= 1.0:
            raise SchemaError(f"{where}.score: {p.score} outside [0, 1]")
        h, w, n = dims[p.video_id]
        if len(p.segmentations) != n:
            raise SchemaError(
                f"{where}.segmentations: {len(p.segmentations)} entries for a "
                f"{n}-frame video")
        for t, s in enumerate(p.segmentations):
            if s is not None and (s.height, s.width) != (h, w):
                raise SchemaError(
                    f"{where}.segmentations[{t}]: {s.height}x{s.width} mask on "
                    f"a {h}x{w} video")
        if p.score < score_thresh:
            continue
        by_video[p.video_id][0].append(_decode_track(p.segmentations))
        by_video[p.video_id][1].append(float(p.score))
    out = {}
    for vid, (tracks, scores) in by_video.items():
        order = np.argsort(-np.asarray(scores), kind="mergesort") if scores else []
        out[vid] = ([tracks[k] for k in order], [scores[k] for k in order])
    return out


def _mean_area(frames: Sequence[np.ndarray | None]) -> float:
    areas = [int(np.count_nonzero(f)) for f in frames if f is not None]
    return float(np.mean(areas)) if areas else 0.0


def _per_video_map(fn, videos, workers: int) -> list:
    """Ordered per-video map; parallel when workers > 1, always deterministic."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, videos))
    return [fn(v) for v in videos]


# ---------------------------------------------------------------------------
# Detection AP / AR
# ---------------------------------------------------------------------------

def _greedy_match(ious: np.ndarray, gt_ignore: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Score-ordered greedy matching at every IoU threshold.

    ious rows are detections in descending-score order; ground truth
    columns must be sorted non-ignored first. Returns bool arrays
    (matched, matched_to_ignored) of shape (T, D).
    """
    n_thr = len(IOU_THRESHOLDS)
    n_det, n_gt = ious.shape
    matched = np.zeros((n_thr, n_det), dtype=bool)
    matched_ig = np.zeros((n_thr, n_det), dtype=bool)
    for ti, thr in enumerate(IOU_THRESHOLDS):
        gt_taken = np.zeros(n_gt, dtype=bool)
        for d in range(n_det):
            best = min(thr, 1.0 - 1e-10)
            pick = -1
            for g in range(n_gt):
                if gt_taken[g]:
                    continue
                if pick > -1 and not gt_ignore[pick] and gt_ignore[g]:
                    break
                if ious[d, g] < best:
                    continue
                best = ious[d, g]
                pick = g
            if pick == -1:
                continue
            gt_taken[pick] = True
            matched[ti, d] = True
            matched_ig[ti, d] = bool(gt_ignore[pick])
    return matched, matched_ig


def _interpolated_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """101-point interpolation of a cumulative PR curve."""
    prec = precision.tolist()
    for i in range(len(prec) - 1, 0, -1):
        if prec[i] > prec[i - 1]:
            prec[i - 1] = prec[i]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = [prec[i] if i < len(prec) else 0.0 for i in idx]
    return float(np.mean(sampled))


def compute_ap_ar(gt: DatasetFile, preds: Sequence[Prediction],
                  score_thresh: float = DEFAULT_AP_SCORE_THRESH,
                  workers: int = 1) -> EvalReport:
    """Detection metrics; predictions below ``score_thresh`` are discarded."""
    gt_tracks = _gt_tracks(gt)
    pred_tracks = _pred_tracks(gt, preds, score_thresh)

    def eval_video(video):
        vid = video.video_id
        gts = gt_tracks[vid]
        dets, scores = pred_tracks[vid]
        dets = dets[:MAX_DETECTIONS]
        scores = np.asarray(scores[:MAX_DETECTIONS])
        ious = np.zeros((len(dets), len(gts)))
        for d, det in enumerate(dets):
            for g, gtt in enumerate(gts):
                ious[d, g] = st_iou(gtt, det)
        gt_areas = np.asarray([_mean_area(t) for t in gts])
        det_areas = np.asarray([_mean_area(t) for t in dets])
        rows = {}
        for name, (lo, hi) in AREA_RANGES.items():
            gt_ig = ~((gt_areas >= lo) & (gt_areas <= hi)) if len(gts) else \
                np.zeros(0, dtype=bool)
            order = np.argsort(gt_ig, kind="mergesort")
            matched, matched_ig = _greedy_match(ious[:, order], gt_ig[order])
            det_out = ~((det_areas >= lo) & (det_areas <= hi)) if len(dets) else \
                np.zeros(0, dtype=bool)
            det_ig = matched_ig | (~matched & det_out[None, :])
            npig = int((~gt_ig).sum())
            rows[name] = (scores, matched, det_ig, npig)
        return vid, len(gts), len(dets), rows

    results = _per_video_map(eval_video, gt.videos, workers)

    per_range: dict[str, list] = {name: [] for name in AREA_RANGES}
    ar_rows = []
    report = EvalReport()
    for vid, n_gt, n_det, rows in results:
        report.per_video[vid] = {"gt_tracks": n_gt, "detections": n_det}
        for name in AREA_RANGES:
            per_range[name].append(rows[name])
        _, matched, det_ig, npig = rows["all"]
        ar_rows.append((matched[:, :AR_DETECTIONS],
                        det_ig[:, :AR_DETECTIONS], npig))

    def _range_ap(rows) -> np.ndarray | None:
        npig = sum(r[3] for r in rows)
        if npig == 0:
            return None
        scores = np.concatenate([r[0] for r in rows]) if rows else np.zeros(0)
        matched = np.concatenate([r[1] for r in rows], axis=1)
        ignored = np.concatenate([r[2] for r in rows], axis=1)
        order = np.argsort(-scores, kind="mergesort")
        matched, ignored = matched[:, order], ignored[:, order]
        tp = np.cumsum(matched & ~ignored, axis=1, dtype=float)
        fp = np.cumsum(~matched & ~ignored, axis=1, dtype=float)
        ap_t = np.zeros(len(IOU_THRESHOLDS))
        for ti in range(len(IOU_THRESHOLDS)):
            rc = tp[ti] / npig
            pr = tp[ti] / np.maximum(tp[ti] + fp[ti], 1e-12)
            ap_t[ti] = _interpolated_ap(rc, pr)
        return ap_t

    ap_all = _range_ap(per_range["all"])
    if ap_all is not None:
        report.ap = float(ap_all.mean())
        report.ap50 = float(ap_all[0])
        report.ap75 = float(ap_all[5])
    for name, attr in (("small", "ap_s"), ("medium", "ap_m"), ("large", "ap_l")):
        ap_r = _range_ap(per_range[name])
        setattr(report, attr, None if ap_r is None else float(ap_r.mean()))

    npig_total = sum(r[2] for r in ar_rows)
    if npig_total > 0:
        hits = np.zeros(len(IOU_THRESHOLDS))
        for matched, ignored, _ in ar_rows:
            hits += (matched & ~ignored).sum(axis=1)
        report.ar10 = float((hits / npig_total).mean())
    return report


# ---------------------------------------------------------------------------
# Region (J) and boundary (F) quality
# ---------------------------------------------------------------------------

def _frame_iou(g: np.ndarray | None, p: np.ndarray | None) -> float:
    """Region similarity of one frame; both-absent frames count as perfect."""
    g_empty = g is None or not g.any()
    p_empty = p is None or not p.any()
    if g_empty and p_empty:
        return 1.0
    if g_empty or p_empty:
        return 0.0
    return int(np.logical_and(g, p).sum()) / int(np.logical_or(g, p).sum())


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a 4-neighbor (or image border) outside the mask."""
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    eroded = ndimage.binary_erosion(mask, structure=structure, border_value=0)
    return mask & ~eroded


def _disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (yy ** 2 + xx ** 2) <= r ** 2


def boundary_f_measure(gt: np.ndarray | None, pred: np.ndarray | None,
                       height: int, width: int) -> float:
    """Boundary F-score of one frame at the standard diagonal tolerance."""
    g = np.zeros((height, width), dtype=bool) if gt is None else (gt != 0)
    p = np.zeros((height, width), dtype=bool) if pred is None else (pred != 0)
    gb = mask_boundary(g)
    pb = mask_boundary(p)
    n_gb, n_pb = int(gb.sum()), int(pb.sum())
    if n_gb == 0 and n_pb == 0:
        return 1.0
    if n_gb == 0 or n_pb == 0:
        return 0.0
    tol = math.ceil(BOUNDARY_TOL_FRAC * math.hypot(height, width))
    disk = _disk(tol)
    gb_dil = ndimage.binary_dilation(gb, structure=disk)
    pb_dil = ndimage.binary_dilation(pb, structure=disk)
    precision = int((pb & gb_dil).sum()) / n_pb
    recall = int((gb & pb_dil).sum()) / n_gb
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def compute_jf(gt: DatasetFile, preds: Sequence[Prediction],
               score_thresh: float = DEFAULT_JF_SCORE_THRESH,
               workers: int = 1) -> EvalReport:
    """Region/boundary metrics with per-video Hungarian track assignment."""
    gt_tracks = _gt_tracks(gt)
    pred_tracks = _pred_tracks(gt, preds, score_thresh)

    def eval_video(video):
        vid = video.video_id
        gts = gt_tracks[vid]
        dets, _ = pred_tracks[vid]
        if not gts:
            return vid, None, None
        mean_iou = np.zeros((len(gts), len(dets)))
        for g, gtt in enumerate(gts):
            for d, det in enumerate(dets):
                mean_iou[g, d] = float(np.mean(
                    [_frame_iou(gf, df) for gf, df in zip(gtt, det)]))
        assigned = dict(hungarian(1.0 - mean_iou))
        j_video: list[float] = []
        f_video: list[float] = []
        for g, gtt in enumerate(gts):
            if g in assigned:
                det = dets[assigned[g]]
                j_video.append(float(mean_iou[g, assigned[g]]))
                f_video.append(float(np.mean(
                    [boundary_f_measure(gf, df, video.height, video.width)
                     for gf, df in zip(gtt, det)])))
            else:
                j_video.append(0.0)
                f_video.append(0.0)
        return vid, j_video, f_video

    results = _per_video_map(eval_video, gt.videos, workers)

    report = EvalReport()
    j_all: list[float] = []
    f_all: list[float] = []
    for vid, j_video, f_video in results:
        if j_video is None:
            report.per_video[vid] = {"j": None, "f": None, "jf": None}
            continue
        j_all.extend(j_video)
        f_all.extend(f_video)
        jv, fv = float(np.mean(j_video)), float(np.mean(f_video))
        report.per_video[vid] = {"j": jv, "f": fv, "jf": (jv + fv) / 2.0}
    if j_all:
        report.j_mean = float(np.mean(j_all))
        report.f_mean = float(np.mean(f_all))
        report.jf_mean = (report.j_mean + report.f_mean) / 2.0
    return report


def evaluate(gt: DatasetFile, preds: Sequence[Prediction],
             ap_score_thresh: float = DEFAULT_AP_SCORE_THRESH,
             jf_score_thresh: float = DEFAULT_JF_SCORE_THRESH,
             workers: int = 1) -> EvalReport:
    return merge_reports(compute_ap_ar(gt, preds, ap_score_thresh, workers),
                         compute_jf(gt, preds, jf_score_thresh, workers))


# ---------------------------------------------------------------------------
# Prediction files and report rendering
# ---------------------------------------------------------------------------

def read_predictions(path: str | Path) -> list[Prediction]:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(obj, list):
        raise SchemaError("$: predictions file must be a JSON array")
    preds = []
    for i, p in enumerate(obj):
        where = f"$[{i}]"
        if not isinstance(p, dict):
            raise SchemaError(f"{where}: expected object")
        for key in ("video_id", "score", "segmentations"):
            if key not in p:
                raise SchemaError(f"{where}.{key}: missing")
        segs = []
        for t, s in enumerate(p["segmentations"]):
            if s is None:
                segs.append(None)
            else:
                segs.append(PixelMask.from_json(s, f"{where}.segmentations[{t}]"))
        preds.append(Prediction(video_id=int(p["video_id"]),
                                score=float(p["score"]), segmentations=segs))
    return preds


def write_predictions(preds: Sequence[Prediction], path: str | Path) -> None:
    obj = [{"video_id": p.video_id, "score": p.score,
            "segmentations": [None if s is None else s.to_json()
                              for s in p.segmentations]}
           for p in preds]
    Path(path).write_text(json.dumps(obj, separators=(",", ":")) + "\n")


def predictions_from_dataset(ds: DatasetFile, score: float = 1.0) -> list[Prediction]:
    """Turn ground-truth tracks into predictions (self-evaluation helper)."""
    return [Prediction(video_id=a.video_id, score=score,
                       segmentations=list(a.segmentations))
            for a in ds.annotations]


def format_report(report: EvalReport) -> str:
    """Aligned text table; J/F family is shown x100 by convention."""
    def fmt(v, scale=1.0):
        return "   n/a" if v is None else f"{v * scale:6.3f}"

    lines = [
        f"{'metric':<12}{'value':>8}",
        f"{'AP':<12}{fmt(report.ap):>8}",
        f"{'AP50':<12}{fmt(report.ap50):>8}",
        f"{'AP75':<12}{fmt(report.ap75):>8}",
        f"{'AP_S':<12}{fmt(report.ap_s):>8}",
        f"{'AP_M':<12}{fmt(report.ap_m):>8}",
        f"{'AP_L':<12}{fmt(report.ap_l):>8}",
        f"{'AR10':<12}{fmt(report.ar10):>8}",
        f"{'J (x100)':<12}{fmt(report.j_mean, 100.0):>8}",
        f"{'F (x100)':<12}{fmt(report.f_mean, 100.0):>8}",
        f"{'J&F (x100)':<12}{fmt(report.jf_mean, 100.0):>8}",
    ]
    return "\n".join(lines)
