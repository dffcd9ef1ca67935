"""Thresholded patch-affinity graphs over feature grids.

The graph weight between patches i and j is 1 when the convex combination

    alpha * <rgb_i, rgb_j> + (1 - alpha) * <flow_i, flow_j>

strictly exceeds ``tau``, and ``epsilon`` otherwise. With ``alpha = 1``
(the flow-ablation mode) the flow stream is skipped entirely, so results
are bit-identical whether flow features are supplied or not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateFeatureError, ShapeError
from .tensor_io import FeatureMap

DEFAULT_ALPHA = 0.5
DEFAULT_TAU = 0.15
DEFAULT_EPSILON = 1e-5


@dataclass(frozen=True)
class AffinityConfig:
    """Parameters of the thresholded affinity.

    tau defaults to 0.15 and must lie in (-1, 1); epsilon keeps the graph
    numerically connected and must be a small positive value.
    """

    alpha: float = DEFAULT_ALPHA
    tau: float = DEFAULT_TAU
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if not -1.0 < self.tau < 1.0:
            raise ConfigError(f"tau must be in (-1, 1), got {self.tau}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must be in (0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class AffinityMatrix:
    """Symmetric affinity with its degree vector.

    ``w`` entries are epsilon or 1 as constructed here; callers that build
    instances directly (e.g. on a subgraph) only need symmetry and strictly
    positive degrees.
    """

    w: np.ndarray       # (n, n) float64, symmetric
    degree: np.ndarray  # (n,) row sums

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @classmethod
    def from_weights(cls, w: np.ndarray) -> "AffinityMatrix":
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ShapeError(f"affinity must be square, got {w.shape}")
        return cls(w=w, degree=w.sum(axis=1))


def normalize_features(fm: FeatureMap) -> FeatureMap:
    """Scale every patch vector to unit Euclidean norm (float64).

    Raises DegenerateFeatureError naming the flat patch index of the first
    zero-norm vector.
    """
    data = np.asarray(fm.data, dtype=np.float64)
    norms = np.linalg.norm(data, axis=2)
    if (norms == 0.0).any():
        idx = int(np.flatnonzero((norms == 0.0).ravel())[0])
        raise DegenerateFeatureError(
            f"zero-norm feature vector at patch {idx}")
    return FeatureMap(data / norms[:, :, None])


def build_affinity(rgb: FeatureMap, flow: FeatureMap | None,
                   cfg: AffinityConfig) -> AffinityMatrix:
    """Build the thresholded affinity from unit-normalized feature grids.

    ``flow`` may be None only when ``cfg.alpha == 1``; when present it must
    share the patch grid of ``rgb`` (the feature dimension may differ).
    """
    if flow is None and cfg.alpha < 1.0:
        raise ConfigError(
            f"alpha={cfg.alpha} requires flow features (only alpha=1 may omit them)")
    if flow is not None and (rgb.rows, rgb.cols) != (flow.rows, flow.cols):
        raise ShapeError(
            f"rgb grid {rgb.rows}x{rgb.cols} != flow grid {flow.rows}x{flow.cols}")

    sim = _cosine_grid(rgb)
    if cfg.alpha < 1.0:
        assert flow is not None
        # elementwise combination of exactly-symmetric grids stays symmetric
        sim = cfg.alpha * sim + (1.0 - cfg.alpha) * _cosine_grid(flow)

    w = np.where(sim > cfg.tau, 1.0, cfg.epsilon)
    # self-similarity of a unit vector is 1 by definition; pin it against
    # round-off so the diagonal never drops to epsilon
    np.fill_diagonal(w, 1.0)
    w.flags.writeable = False
    return AffinityMatrix.from_weights(w)


def _cosine_grid(fm: FeatureMap) -> np.ndarray:
    flat = np.asarray(fm.data, dtype=np.float64).reshape(fm.rows * fm.cols, fm.dim)
    sim = flat @ flat.T
    return (sim + sim.T) / 2.0
