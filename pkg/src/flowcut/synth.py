"""Deterministic synthetic corpora with known instance masks.

Each video lays its moving shapes out in disjoint horizontal stripes, one
per instance (plus one for the optional static distractor), so masks never
occlude and sizes stay constant. Rectangles are sized so that instances
dominate their stripe and differ in area; that keeps every spectral round
an unambiguous single-instance cut. Motion is horizontal with reflection
at the grid edges, and per-object speeds are staggered across the velocity
range so instances carry distinct motion cues.

Features are identity-coded: every instance gets its own unit direction,
the background another, and patches emit their region's direction plus
Gaussian noise. Flow features do the same keyed by the patch's realized
per-frame displacement, so static regions (background and distractor)
share the zero-motion direction. Direction pools are orthonormal (QR of a
seeded Gaussian matrix), which pins expected cross-region cosines at zero.

Motion is piecewise constant, so the flow gap only matters at sequence
ends, where the last realized step is reused; the configured gap is
recorded with the corpus.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .tensor_io import (DatasetFile, FeatureMap, PatchMask, TrackRecord,
                        VideoRecord, rle_encode, write_dataset,
                        write_feature_map)

SHAPES = ("rectangle", "disc")


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_videos: int = 1
    frames_per_video: int = 6
    rows: int = 20
    cols: int = 20
    dim: int = 16
    n_objects: int = 2
    shape: str = "rectangle"
    velocity_min: int = 1
    velocity_max: int = 2
    noise_sigma: float = 0.01
    distractor: bool = False
    flow_gap: int = 4

    def __post_init__(self) -> None:
        for name in ("n_videos", "frames_per_video", "rows", "cols", "dim",
                     "n_objects"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.shape not in SHAPES:
            raise ValidationError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if not 0 <= self.velocity_min <= self.velocity_max:
            raise ValidationError(
                f"need 0 <= velocity_min <= velocity_max, got "
                f"({self.velocity_min}, {self.velocity_max})")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        if self.flow_gap < 1:
            raise ValidationError("flow_gap must be >= 1")


@dataclass
class SynthResult:
    spec: SynthSpec
    dataset: DatasetFile
    rgb: dict[int, list[FeatureMap]] = field(default_factory=dict)
    flow: dict[int, list[FeatureMap]] = field(default_factory=dict)
    distractor_regions: dict[int, PatchMask | None] = field(default_factory=dict)


@dataclass
class _Object:
    top: int
    height: int
    width: int
    shape: str
    speed: int
    positions: list[int]   # left column per frame
    steps: list[int]       # realized dx leaving each frame (length F-1)

    def raster(self, t: int, rows: int, cols: int) -> np.ndarray:
        mask = np.zeros((rows, cols), dtype=bool)
        x = self.positions[t]
        if self.shape == "rectangle":
            mask[self.top:self.top + self.height, x:x + self.width] = True
        else:
            r = (self.height - 1) / 2.0
            cy = self.top + r
            cx = x + (self.width - 1) / 2.0
            yy, xx = np.mgrid[0:rows, 0:cols]
            mask[((yy - cy) ** 2 + (xx - cx) ** 2) <= r ** 2 + 1e-9] = True
        return mask

    def velocity(self, t: int) -> int:
        if not self.steps:
            return 0
        return self.steps[t] if t < len(self.steps) else self.steps[-1]


def _orthonormal_pool(rng: np.random.Generator, dim: int, count: int) -> np.ndarray:
    if count > dim:
        raise ValidationError(
            f"feature dim {dim} too small for {count} distinct directions")
    q, _ = np.linalg.qr(rng.normal(size=(dim, count)))
    return q.T  # (count, dim) orthonormal rows


def _plan_objects(spec: SynthSpec, rng: np.random.Generator) -> list[_Object]:
    entities = spec.n_objects + (1 if spec.distractor else 0)
    band_h = spec.rows // entities
    if band_h < 3:
        raise ValidationError(
            f"{entities} stripe(s) of a {spec.rows}-row grid leave no room "
            f"for objects (need >= 3 rows each)")
    span = spec.velocity_max - spec.velocity_min + 1
    objects = []
    for i in range(spec.n_objects):
        height = band_h - 2
        if spec.shape == "rectangle":
            width = max(1, round(spec.cols * max(0.3, 0.95 - 0.2 * i)))
        else:
            height = height if height % 2 else height - 1  # odd diameter disc
            width = height
        if width > spec.cols:
            raise ValidationError(f"object {i} of width {width} cannot fit "
                                  f"{spec.cols} columns")
        max_x = spec.cols - width
        speed = spec.velocity_min + (i % span)
        x = int(rng.integers(0, max_x + 1)) if max_x > 0 else 0
        direction = int(rng.choice((-1, 1)))
        positions = [x]
        steps = []
        for _ in range(spec.frames_per_video - 1):
            nxt = x + direction * speed
            if nxt < 0 or nxt > max_x:
                direction = -direction
                nxt = x + direction * speed
            if nxt < 0 or nxt > max_x:
                nxt = x  # no room to move at this speed
            steps.append(nxt - x)
            x = nxt
            positions.append(x)
        objects.append(_Object(top=i * band_h + 1, height=height,
                               width=width, shape=spec.shape, speed=speed,
                               positions=positions, steps=steps))
    return objects


def _distractor_region(spec: SynthSpec) -> PatchMask:
    entities = spec.n_objects + 1
    band_h = spec.rows // entities
    top = spec.n_objects * band_h + 1
    width = max(1, round(spec.cols * 0.4))
    left = (spec.cols - width) // 2
    bits = np.zeros((spec.rows, spec.cols), dtype=bool)
    bits[top:top + band_h - 2, left:left + width] = True
    return PatchMask(bits)


def generate(spec: SynthSpec) -> SynthResult:
    """Build the corpus in memory; fully deterministic given the seed."""
    streams = np.random.SeedSequence(spec.seed).spawn(spec.n_videos)
    videos: list[VideoRecord] = []
    annotations: list[TrackRecord] = []
    result = SynthResult(spec=spec, dataset=DatasetFile())
    next_track = 1
    for v in range(spec.n_videos):
        rng = np.random.default_rng(streams[v])
        vid = v + 1
        objects = _plan_objects(spec, rng)
        distractor = _distractor_region(spec) if spec.distractor else None

        # region directions: background, objects, optional distractor
        n_regions = 1 + spec.n_objects + (1 if spec.distractor else 0)
        rgb_dirs = _orthonormal_pool(rng, spec.dim, n_regions)
        vel_keys = sorted({0} | {o.velocity(t) for o in objects
                                 for t in range(spec.frames_per_video)})
        flow_dirs = _orthonormal_pool(rng, spec.dim, len(vel_keys))
        key_index = {k: i for i, k in enumerate(vel_keys)}

        frame_names = [f"video_{vid:04d}/frame_{t:05d}.jpg"
                       for t in range(spec.frames_per_video)]
        videos.append(VideoRecord(video_id=vid, width=spec.cols,
                                  height=spec.rows, file_names=frame_names))
        gt_masks = [[o.raster(t, spec.rows, spec.cols) for o in objects]
                    for t in range(spec.frames_per_video)]
        for i in range(spec.n_objects):
            annotations.append(TrackRecord(
                track_id=next_track, video_id=vid,
                segmentations=[rle_encode(gt_masks[t][i])
                               for t in range(spec.frames_per_video)],
                areas=[int(gt_masks[t][i].sum())
                       for t in range(spec.frames_per_video)]))
            next_track += 1

        rgb_frames = []
        flow_frames = []
        for t in range(spec.frames_per_video):
            region = np.zeros((spec.rows, spec.cols), dtype=int)  # 0 = background
            for i in range(spec.n_objects):
                region[gt_masks[t][i]] = 1 + i
            if distractor is not None:
                region[distractor.bits] = 1 + spec.n_objects
            rgb = rgb_dirs[region]
            # static regions (background, distractor) carry the zero-motion key
            vel_grid = np.full((spec.rows, spec.cols), key_index[0], dtype=int)
            for i, o in enumerate(objects):
                vel_grid[region == 1 + i] = key_index[o.velocity(t)]
            flow = flow_dirs[vel_grid]
            if spec.noise_sigma > 0:
                rgb = rgb + spec.noise_sigma * rng.normal(size=rgb.shape)
                flow = flow + spec.noise_sigma * rng.normal(size=flow.shape)
            rgb_frames.append(FeatureMap(np.ascontiguousarray(rgb)))
            flow_frames.append(FeatureMap(np.ascontiguousarray(flow)))
        result.rgb[vid] = rgb_frames
        result.flow[vid] = flow_frames
        result.distractor_regions[vid] = distractor
    result.dataset = DatasetFile(videos=videos, annotations=annotations)
    return result


def write_corpus(result: SynthResult, out_dir: str | Path) -> None:
    """Write FCFT feature files, the ground-truth dataset, and a summary."""
    out = Path(out_dir)
    for vid, frames in result.rgb.items():
        d = out / "features" / f"video_{vid:04d}"
        d.mkdir(parents=True, exist_ok=True)
        for t, fm in enumerate(frames):
            write_feature_map(fm, d / f"frame_{t:05d}.fcft")
    for vid, frames in result.flow.items():
        d = out / "flow_features" / f"video_{vid:04d}"
        d.mkdir(parents=True, exist_ok=True)
        for t, fm in enumerate(frames):
            write_feature_map(fm, d / f"frame_{t:05d}.fcft")
    write_dataset(result.dataset, out / "gt.json")
    summary = {"spec": asdict(result.spec),
               "videos": len(result.rgb),
               "frames_per_video": result.spec.frames_per_video}
    (out / "corpus.json").write_text(json.dumps(summary, indent=2) + "\n")
