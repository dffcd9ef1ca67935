"""Pseudo-label curation for unsupervised video instance segmentation.

Pipeline: per-frame instance masks from iterative normalized cuts over
fused image/motion patch affinities, cross-frame IoU matching into
two-frame clips, dataset assembly, and video-instance evaluation.
"""

from .affinity import AffinityConfig, AffinityMatrix, build_affinity, normalize_features
from .errors import (ConfigError, CorruptionError, DegenerateFeatureError,
                     FlowcutError, FormatError, NumericalError, SchemaError,
                     ShapeError, SingularityError, ValidationError)
from .evaluation import (EvalReport, Prediction, compute_ap_ar, compute_jf,
                         evaluate, hungarian, st_iou)
from .maskcut import MaskCutConfig, extract_masks, upsample_mask
from .matching import (InstanceClip, IoUMatrix, VideoMeta, build_dataset,
                       curate, curation_report, iou_matrix, mask_iou,
                       match_instances)
from .segmenter import MaskCutSegmenter, check_feature_grid
from .spectral import Bipartition, EigenSolution, binarize, solve_fiedler
from .synth import SynthResult, SynthSpec, generate, write_corpus
from .tensor_io import (DatasetFile, FeatureMap, PatchMask, PixelMask,
                        TrackRecord, VideoRecord, read_dataset,
                        read_feature_map, rle_decode, rle_encode,
                        write_dataset, write_feature_map)

__version__ = "0.1.0"

__all__ = [
    "AffinityConfig", "AffinityMatrix", "Bipartition", "ConfigError",
    "CorruptionError", "DatasetFile", "DegenerateFeatureError",
    "EigenSolution", "EvalReport", "FeatureMap", "FlowcutError",
    "FormatError", "InstanceClip", "IoUMatrix", "MaskCutConfig",
    "MaskCutSegmenter", "NumericalError", "PatchMask", "PixelMask",
    "Prediction", "SchemaError", "ShapeError", "SingularityError",
    "SynthResult", "SynthSpec", "TrackRecord", "ValidationError",
    "VideoMeta", "VideoRecord", "binarize", "build_affinity",
    "build_dataset", "check_feature_grid", "compute_ap_ar", "compute_jf",
    "curate", "curation_report", "evaluate", "extract_masks", "generate",
    "hungarian", "iou_matrix", "mask_iou", "match_instances",
    "normalize_features", "read_dataset", "read_feature_map", "rle_decode",
    "rle_encode", "solve_fiedler", "st_iou", "upsample_mask",
    "write_corpus", "write_dataset", "write_feature_map",
]
