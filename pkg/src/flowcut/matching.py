"""Cross-frame instance matching and two-frame clip curation.

Matching follows a greedy row-wise rule: every first-frame instance picks
its best-IoU partner in the second frame and the pair is kept only when
the IoU strictly exceeds the threshold. That literal form allows two
first-frame instances to claim the same partner; ``one_to_one=True``
removes claimed partners from later rows for callers who want injective
tracks.

Curation slides the matcher over every frame pair (t, t+g) for the
configured gaps and emits a clip per pair that produced at least one
match. Track ids are fresh within each clip; no identity is fabricated
across clips.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SchemaError, ShapeError, ValidationError
from .tensor_io import (DatasetFile, PixelMask, TrackRecord, VideoRecord,
                        rle_decode, rle_encode)

DEFAULT_IOU_THRESH = 0.5
DEFAULT_GAPS = (1, 2, 3, 4)


@dataclass(frozen=True)
class IoUMatrix:
    """Pairwise IoU between two instance lists; values[i, j] in [0, 1]."""

    values: np.ndarray


@dataclass(frozen=True)
class TrackPair:
    track_id: int
    mask_a: PixelMask
    mask_b: PixelMask


@dataclass(frozen=True)
class InstanceClip:
    """A matched two-frame segment: 1 <= frame_b - frame_a by construction."""

    video_id: int
    frame_a: int
    frame_b: int
    tracks: tuple[TrackPair, ...]


@dataclass
class VideoMeta:
    """Pixel dims plus optional per-frame names for dataset assembly."""

    height: int
    width: int
    file_names: list[str] | None = None


def _as_dense(mask, where: str = "mask") -> np.ndarray:
    if isinstance(mask, PixelMask):
        return rle_decode(mask)
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ShapeError(f"{where}: expected a 2-d raster, got shape {m.shape}")
    return m != 0


def mask_iou(a, b) -> float:
    """Pixel IoU of two equal-size rasters; 0.0 when both are empty."""
    da, db = _as_dense(a, "a"), _as_dense(b, "b")
    if da.shape != db.shape:
        raise ShapeError(f"mask shapes differ: {da.shape} vs {db.shape}")
    union = int(np.logical_or(da, db).sum())
    if union == 0:
        return 0.0
    return int(np.logical_and(da, db).sum()) / union


def iou_matrix(first: Sequence, second: Sequence) -> IoUMatrix:
    a = [_as_dense(m, f"first[{i}]") for i, m in enumerate(first)]
    b = [_as_dense(m, f"second[{j}]") for j, m in enumerate(second)]
    values = np.zeros((len(a), len(b)))
    for i, ma in enumerate(a):
        for j, mb in enumerate(b):
            values[i, j] = mask_iou(ma, mb)
    return IoUMatrix(values)


def match_instances(first: Sequence, second: Sequence,
                    thresh: float = DEFAULT_IOU_THRESH,
                    one_to_one: bool = False) -> tuple[list[tuple[int, int]], bool]:
    """Greedy row-wise matching; returns (index pairs, any-match flag).

    Pair (i, j) means first[i] matched second[j] with IoU strictly above
    ``thresh``; ties on the row argmax break toward the lowest j.
    """
    values = iou_matrix(first, second).values
    pairs: list[tuple[int, int]] = []
    taken: set[int] = set()
    for i in range(values.shape[0]):
        row = values[i]
        if one_to_one and taken:
            row = row.copy()
            row[list(taken)] = -1.0
        if row.size == 0:
            continue
        j = int(np.argmax(row))
        if row[j] > thresh:
            pairs.append((i, j))
            if one_to_one:
                taken.add(j)
    return pairs, len(pairs) > 0


def curate(frames: Sequence[Sequence], gaps: Sequence[int] = DEFAULT_GAPS,
           video_id: int = 0, thresh: float = DEFAULT_IOU_THRESH,
           one_to_one: bool = False) -> list[InstanceClip]:
    """Pair up instances across every (t, t+g) frame pair of one video."""
    gaps = sorted(set(int(g) for g in gaps))
    if not gaps or gaps[0] < 1:
        raise ValidationError(f"gaps must be positive integers, got {gaps}")
    dense = [[_as_dense(m, f"frames[{t}][{i}]") for i, m in enumerate(masks)]
             for t, masks in enumerate(frames)]
    clips: list[InstanceClip] = []
    for t in range(len(dense)):
        for g in gaps:
            if t + g >= len(dense):
                continue
            pairs, flag = match_instances(dense[t], dense[t + g],
                                          thresh=thresh, one_to_one=one_to_one)
            if not flag:
                continue
            tracks = tuple(
                TrackPair(track_id=k,
                          mask_a=rle_encode(dense[t][i]),
                          mask_b=rle_encode(dense[t + g][j]))
                for k, (i, j) in enumerate(pairs))
            clips.append(InstanceClip(video_id=video_id, frame_a=t,
                                      frame_b=t + g, tracks=tracks))
    return clips


def curation_report(frames: Sequence[Sequence], clips: Sequence[InstanceClip],
                    gaps: Sequence[int] = DEFAULT_GAPS) -> dict:
    """Per-video counts: candidate pairs, emitted clips, dropped first-frame masks."""
    gaps = sorted(set(int(g) for g in gaps))
    n = len(frames)
    emitted = {(c.frame_a, c.frame_b): len(c.tracks) for c in clips}
    candidates = 0
    dropped = 0
    for t in range(n):
        for g in gaps:
            if t + g >= n:
                continue
            candidates += 1
            dropped += len(frames[t]) - emitted.get((t, t + g), 0)
    return {"candidate_pairs": candidates,
            "emitted_clips": len(clips),
            "dropped_masks": dropped}


def build_dataset(clips: Sequence[InstanceClip],
                  meta: dict[int, VideoMeta]) -> DatasetFile:
    """Assemble clips into a dataset: one two-frame video entry per clip.

    Ordering is deterministic: clips sorted by (source video, first frame,
    gap), tracks in matcher order.
    """
    ordered = sorted(clips, key=lambda c: (c.video_id, c.frame_a,
                                           c.frame_b - c.frame_a))
    videos: list[VideoRecord] = []
    annotations: list[TrackRecord] = []
    next_track = 1
    for new_id, clip in enumerate(ordered, start=1):
        if clip.video_id not in meta:
            raise SchemaError(f"no metadata for source video {clip.video_id}")
        m = meta[clip.video_id]
        names = []
        for frame in (clip.frame_a, clip.frame_b):
            if m.file_names is not None:
                try:
                    names.append(m.file_names[frame])
                except IndexError:
                    raise SchemaError(
                        f"video {clip.video_id}: no file name for frame {frame}")
            else:
                names.append(f"{clip.video_id:04d}/{frame:05d}.jpg")
        videos.append(VideoRecord(video_id=new_id, width=m.width,
                                  height=m.height, file_names=names))
        for pair in clip.tracks:
            for pm in (pair.mask_a, pair.mask_b):
                if (pm.height, pm.width) != (m.height, m.width):
                    raise ShapeError(
                        f"clip mask {pm.height}x{pm.width} does not match video "
                        f"{clip.video_id} dims {m.height}x{m.width}")
            annotations.append(TrackRecord(
                track_id=next_track, video_id=new_id,
                segmentations=[pair.mask_a, pair.mask_b],
                areas=[pair.mask_a.area(), pair.mask_b.area()]))
            next_track += 1
    return DatasetFile(videos=videos, annotations=annotations)
