"""scikit-learn style front end for per-frame instance extraction.

The estimator wraps the affinity -> Fiedler -> iterative-masking pipeline
behind the usual ``fit`` / ``fit_predict`` clustering surface so it can be
cloned, grid-searched and composed like any other estimator. Like spectral
clustering it is transductive: ``fit`` segments the grid it was given and
exposes the result as ``labels_`` / ``masks_``; there is no out-of-sample
``predict``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .affinity import AffinityConfig
from .errors import ShapeError, ValidationError
from .maskcut import MaskCutConfig, extract_masks
from .tensor_io import FeatureMap


def check_feature_grid(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite float64 (rows, cols, dim) array."""
    if isinstance(X, FeatureMap):
        X = X.data
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"{name}: expected (rows, cols, dim), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ShapeError(f"{name}: empty grid {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name}: contains non-finite values")
    return arr


class MaskCutSegmenter(BaseEstimator):
    """Multi-instance segmentation of a patch-feature grid.

    Parameters mirror the pipeline configuration: ``alpha`` weights the
    image-feature similarity against the motion-feature similarity
    (``alpha=1`` ignores motion entirely), ``tau`` thresholds the fused
    similarity, and the remaining knobs cap and gate the iterative
    extraction.

    Attributes after ``fit``: ``masks_`` (list of PatchMask), ``labels_``
    (int grid, 0 = background, 1..K = instances in extraction order) and
    ``n_masks_``.
    """

    def __init__(self, alpha=0.5, tau=0.15, epsilon=1e-5, max_masks=3,
                 min_area_frac=0.005, max_area_frac=0.8, lambda2_max=0.1):
        self.alpha = alpha
        self.tau = tau
        self.epsilon = epsilon
        self.max_masks = max_masks
        self.min_area_frac = min_area_frac
        self.max_area_frac = max_area_frac
        self.lambda2_max = lambda2_max

    def fit(self, X, Y=None):
        """Segment one frame; X are image features, Y optional flow features."""
        rgb = check_feature_grid(X, "X")
        flow = None
        if Y is not None:
            flow = check_feature_grid(Y, "Y")
            if flow.shape[:2] != rgb.shape[:2]:
                raise ShapeError(
                    f"Y grid {flow.shape[:2]} does not match X grid {rgb.shape[:2]}")
        acfg = AffinityConfig(alpha=self.alpha, tau=self.tau, epsilon=self.epsilon)
        mcfg = MaskCutConfig(max_masks=self.max_masks,
                             min_area_frac=self.min_area_frac,
                             max_area_frac=self.max_area_frac,
                             lambda2_max=self.lambda2_max)
        masks = extract_masks(FeatureMap(rgb),
                              None if flow is None else FeatureMap(flow),
                              acfg, mcfg)
        labels = np.zeros(rgb.shape[:2], dtype=int)
        for k, mask in enumerate(masks, start=1):
            labels[mask.bits] = k
        self.masks_ = masks
        self.labels_ = labels
        self.n_masks_ = len(masks)
        return self

    def fit_predict(self, X, Y=None):
        """Fit and return the instance label grid."""
        return self.fit(X, Y).labels_
