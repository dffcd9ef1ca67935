"""Domain containers and the neutral on-disk formats.

Three things are serialized here:

* feature grids ("FCFT" binary): magic ``FCFT``, u32 version (=1), u32
  rows/cols/dim, then ``rows*cols*dim`` float32 values, all little-endian,
  laid out row-major (row, then column, then channel);
* binary pixel masks as column-major run-length counts whose first run
  counts zeros (possibly zero-length), serialized in JSON as
  ``{"height": H, "width": W, "runs": [...]}``;
* the curated dataset JSON (``videos`` + per-track ``annotations``),
  mirroring the usual video-instance annotation layout with a single
  class-agnostic category.

All readers and writers are pure with respect to distinct paths and do a
full validation pass; nothing is read lazily.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, SchemaError, ValidationError

log = logging.getLogger(__name__)

FCFT_MAGIC = b"FCFT"
FCFT_VERSION = 1

_VIDEO_KEYS = {"video_id", "width", "height", "file_names"}
_ANN_KEYS = {"track_id", "video_id", "segmentations", "areas",
             "category_id", "iscrowd", "height", "width"}


# ---------------------------------------------------------------------------
# Containers
# ---------------------------------------------------------------------------

@dataclass
class FeatureMap:
    """A rows x cols grid of feature vectors, stored as (rows, cols, dim)."""

    data: np.ndarray

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other) -> bool:
        return (isinstance(other, FeatureMap)
                and self.data.shape == other.data.shape
                and bool(np.array_equal(self.data, other.data)))


@dataclass(frozen=True)
class PatchMask:
    """Binary mask on the patch grid."""

    bits: np.ndarray  # bool, shape (rows, cols)

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    def area(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other) -> bool:
        return (isinstance(other, PatchMask)
                and self.bits.shape == other.bits.shape
                and bool(np.array_equal(self.bits, other.bits)))


@dataclass
class PixelMask:
    """Run-length encoded binary raster.

    Runs are column-major; the first run counts zeros and may be 0. The
    run counts always sum to ``height * width``.
    """

    height: int
    width: int
    runs: list[int]

    def area(self) -> int:
        return sum(self.runs[1::2])

    def to_json(self) -> dict:
        return {"height": self.height, "width": self.width, "runs": list(self.runs)}

    @classmethod
    def from_json(cls, obj: dict, path: str = "segmentation") -> "PixelMask":
        try:
            pm = cls(int(obj["height"]), int(obj["width"]),
                     [int(r) for r in obj["runs"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: malformed RLE object ({exc})") from exc
        _check_runs(pm, path)
        return pm


@dataclass
class VideoRecord:
    video_id: int
    width: int
    height: int
    file_names: list[str]
    extra: dict = field(default_factory=dict)


@dataclass
class TrackRecord:
    track_id: int
    video_id: int
    segmentations: list[PixelMask | None]
    areas: list[int | None]
    category_id: int = 1
    iscrowd: int = 0
    extra: dict = field(default_factory=dict)


@dataclass
class DatasetFile:
    videos: list[VideoRecord] = field(default_factory=list)
    annotations: list[TrackRecord] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def video_by_id(self, video_id: int) -> VideoRecord:
        for v in self.videos:
            if v.video_id == video_id:
                return v
        raise KeyError(video_id)


# ---------------------------------------------------------------------------
# FCFT feature files
# ---------------------------------------------------------------------------

def _validate_grid(rows: int, cols: int, dim: int, where: str) -> None:
    if rows < 1 or cols < 1 or dim < 1:
        raise ValidationError(
            f"{where}: rows, cols and dim must all be >= 1, got "
            f"({rows}, {cols}, {dim})")


def read_feature_map(path: str | Path) -> FeatureMap:
    """Read one FCFT file.

    Raises FormatError on bad magic/version, CorruptionError when the
    payload does not match the header, and ValidationError on non-finite
    values (naming the first offending index).
    """
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != FCFT_MAGIC:
        raise FormatError(f"{path}: not an FCFT file (bad magic)")
    if len(raw) < 20:
        raise CorruptionError(f"{path}: truncated header ({len(raw)} bytes)")
    version, rows, cols, dim = struct.unpack("<4I", raw[4:20])
    if version != FCFT_VERSION:
        raise FormatError(f"{path}: unsupported FCFT version {version}")
    _validate_grid(rows, cols, dim, str(path))
    expected = rows * cols * dim * 4
    payload = raw[20:]
    if len(payload) != expected:
        raise CorruptionError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols, dim)
    bad = ~np.isfinite(data)
    if bad.any():
        flat = int(np.flatnonzero(bad.ravel())[0])
        r, c, k = np.unravel_index(flat, data.shape)
        raise ValidationError(
            f"{path}: non-finite value at flat index {flat} "
            f"(patch ({r}, {c}), channel {k})")
    return FeatureMap(data.copy())


def write_feature_map(fm: FeatureMap, path: str | Path) -> None:
    """Write one FCFT file; float64 inputs are stored as float32."""
    data = np.asarray(fm.data)
    if data.ndim != 3:
        raise ValidationError(f"feature data must be 3-d, got shape {data.shape}")
    rows, cols, dim = data.shape
    _validate_grid(rows, cols, dim, "write_feature_map")
    if not np.isfinite(data).all():
        flat = int(np.flatnonzero(~np.isfinite(data).ravel())[0])
        raise ValidationError(f"non-finite value at flat index {flat}")
    header = FCFT_MAGIC + struct.pack("<4I", FCFT_VERSION, rows, cols, dim)
    Path(path).write_bytes(header + data.astype("<f4").tobytes(order="C"))


# ---------------------------------------------------------------------------
# Run-length masks
# ---------------------------------------------------------------------------

def rle_encode(mask: np.ndarray) -> PixelMask:
    """Encode a dense binary raster, column-major, leading zero run."""
    m = np.asarray(mask)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValidationError(f"mask must be 2-d and non-empty, got shape {m.shape}")
    flat = (m != 0).ravel(order="F")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return PixelMask(int(m.shape[0]), int(m.shape[1]), runs)


def rle_decode(pm: PixelMask) -> np.ndarray:
    """Decode to a dense bool raster of shape (height, width)."""
    _check_runs(pm, "rle_decode")
    values = np.arange(len(pm.runs)) % 2
    flat = np.repeat(values.astype(bool), pm.runs)
    return flat.reshape((pm.height, pm.width), order="F")


def _check_runs(pm: PixelMask, where: str) -> None:
    if pm.height < 1 or pm.width < 1:
        raise ValidationError(f"{where}: mask dims must be >= 1x1, "
                              f"got {pm.height}x{pm.width}")
    if any(r < 0 for r in pm.runs):
        raise ValidationError(f"{where}: negative run count")
    total = sum(pm.runs)
    if total != pm.height * pm.width:
        raise ValidationError(
            f"{where}: runs sum to {total}, expected "
            f"{pm.height * pm.width} ({pm.height}x{pm.width})")


# ---------------------------------------------------------------------------
# Dataset JSON
# ---------------------------------------------------------------------------

def validate_dataset(ds: DatasetFile) -> None:
    """Check referential integrity and per-track invariants."""
    ids = [v.video_id for v in ds.videos]
    if len(set(ids)) != len(ids):
        raise SchemaError("videos: duplicate video_id")
    frames = {}
    for i, v in enumerate(ds.videos):
        if v.width < 1 or v.height < 1:
            raise SchemaError(f"videos[{i}]: non-positive dimensions")
        frames[v.video_id] = len(v.file_names)
    for i, a in enumerate(ds.annotations):
        where = f"annotations[{i}]"
        if a.video_id not in frames:
            raise SchemaError(f"{where}.video_id: unknown video {a.video_id}")
        n = frames[a.video_id]
        if len(a.segmentations) != n:
            raise SchemaError(
                f"{where}.segmentations: {len(a.segmentations)} entries for a "
                f"{n}-frame video")
        if len(a.areas) != n:
            raise SchemaError(
                f"{where}.areas: {len(a.areas)} entries for a {n}-frame video")
        if a.category_id != 1:
            raise SchemaError(f"{where}.category_id: must be 1, got {a.category_id}")
        if a.iscrowd != 0:
            raise SchemaError(f"{where}.iscrowd: must be 0, got {a.iscrowd}")
        video = ds.video_by_id(a.video_id)
        for t, pm in enumerate(a.segmentations):
            if pm is None:
                continue
            _check_runs(pm, f"{where}.segmentations[{t}]")
            if (pm.height, pm.width) != (video.height, video.width):
                raise SchemaError(
                    f"{where}.segmentations[{t}]: {pm.height}x{pm.width} mask "
                    f"on a {video.height}x{video.width} video")


def read_dataset(path: str | Path) -> DatasetFile:
    """Parse and validate a dataset JSON file.

    Unknown keys survive the round trip into ``extra`` dicts.
    """
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise SchemaError("$: top level must be an object")
    videos = []
    for i, v in enumerate(_expect_list(obj, "videos")):
        where = f"videos[{i}]"
        videos.append(VideoRecord(
            video_id=_expect_int(v, "video_id", where),
            width=_expect_int(v, "width", where),
            height=_expect_int(v, "height", where),
            file_names=[str(s) for s in _expect(v, "file_names", list, where)],
            extra={k: v[k] for k in v if k not in _VIDEO_KEYS},
        ))
    annotations = []
    for i, a in enumerate(_expect_list(obj, "annotations")):
        where = f"annotations[{i}]"
        segs_raw = _expect(a, "segmentations", list, where)
        segs: list[PixelMask | None] = []
        for t, s in enumerate(segs_raw):
            if s is None:
                segs.append(None)
            elif isinstance(s, dict):
                segs.append(PixelMask.from_json(s, f"{where}.segmentations[{t}]"))
            else:
                raise SchemaError(f"{where}.segmentations[{t}]: expected object or null")
        areas_raw = _expect(a, "areas", list, where)
        areas = [None if x is None else int(x) for x in areas_raw]
        annotations.append(TrackRecord(
            track_id=_expect_int(a, "track_id", where),
            video_id=_expect_int(a, "video_id", where),
            segmentations=segs,
            areas=areas,
            category_id=_expect_int(a, "category_id", where),
            iscrowd=_expect_int(a, "iscrowd", where),
            extra={k: a[k] for k in a if k not in _ANN_KEYS},
        ))
    ds = DatasetFile(videos=videos, annotations=annotations,
                     extra={k: obj[k] for k in obj
                            if k not in ("videos", "annotations")})
    validate_dataset(ds)
    return ds


def write_dataset(ds: DatasetFile, path: str | Path) -> None:
    """Serialize a dataset; unknown in-memory keys are dropped with a warning."""
    validate_dataset(ds)
    dropped = sum(len(v.extra) for v in ds.videos)
    dropped += sum(len(a.extra) for a in ds.annotations)
    dropped += len(ds.extra)
    if dropped:
        log.warning("write_dataset: dropping %d unknown key(s) not in the schema",
                    dropped)
    dims = {v.video_id: (v.height, v.width) for v in ds.videos}
    obj = {
        "videos": [
            {"video_id": v.video_id, "width": v.width, "height": v.height,
             "file_names": list(v.file_names)}
            for v in ds.videos
        ],
        "annotations": [
            {"track_id": a.track_id, "video_id": a.video_id,
             "category_id": a.category_id, "iscrowd": a.iscrowd,
             "height": dims[a.video_id][0], "width": dims[a.video_id][1],
             "segmentations": [None if s is None else s.to_json()
                               for s in a.segmentations],
             "areas": list(a.areas)}
            for a in ds.annotations
        ],
    }
    Path(path).write_text(json.dumps(obj, separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# Per-frame mask files (extraction stage output)
# ---------------------------------------------------------------------------

def write_frame_masks(masks: list[PixelMask], height: int, width: int,
                      path: str | Path) -> None:
    """One JSON file per frame: raster dims plus an ordered RLE list."""
    for i, pm in enumerate(masks):
        if (pm.height, pm.width) != (height, width):
            raise ValidationError(
                f"masks[{i}] is {pm.height}x{pm.width}, frame is {height}x{width}")
    obj = {"height": height, "width": width,
           "masks": [pm.to_json() for pm in masks]}
    Path(path).write_text(json.dumps(obj, separators=(",", ":")) + "\n")


def read_frame_masks(path: str | Path) -> tuple[int, int, list[PixelMask]]:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    for key in ("height", "width", "masks"):
        if not isinstance(obj, dict) or key not in obj:
            raise SchemaError(f"{path}: missing key {key!r}")
    height, width = int(obj["height"]), int(obj["width"])
    masks = [PixelMask.from_json(m, f"{path}: masks[{i}]")
             for i, m in enumerate(obj["masks"])]
    for i, pm in enumerate(masks):
        if (pm.height, pm.width) != (height, width):
            raise SchemaError(
                f"{path}: masks[{i}] is {pm.height}x{pm.width}, "
                f"frame is {height}x{width}")
    return height, width, masks


def _expect(obj: dict, key: str, kind: type, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}.{key}: missing")
    val = obj[key]
    if not isinstance(val, kind):
        raise SchemaError(f"{where}.{key}: expected {kind.__name__}")
    return val


def _expect_int(obj: dict, key: str, where: str) -> int:
    val = _expect(obj, key, (int, float), where)  # type: ignore[arg-type]
    if isinstance(val, float) and not val.is_integer():
        raise SchemaError(f"{where}.{key}: expected integer")
    return int(val)


def _expect_list(obj: dict, key: str) -> list:
    if key not in obj:
        raise SchemaError(f"$.{key}: missing")
    if not isinstance(obj[key], list):
        raise SchemaError(f"$.{key}: expected array")
    return obj[key]
