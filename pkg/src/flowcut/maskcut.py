"""Iterative multi-instance mask extraction on the patch grid.

Each round solves the Fiedler problem on the affinity restricted to the
patches not yet claimed by an accepted mask (equivalent to multiplying the
original weights by the inverted masks of every previous round, but with
the removed rows/columns deleted so the degree normalization stays
well-posed), binarizes at the mean, and keeps the foreground side.

Extraction stops at the mask cap or as soon as a round produces no usable
cut: a degenerate split, a foreground outside the area gates, a zero
degree on the surviving subgraph, or a second eigenvalue above
``lambda2_max``. The last gate catches subgraphs whose thresholded weights
are all-1 (no epsilon-scale cut left to find); their eigenvalues sit at
1 rather than at the epsilon scale of a real cut, so a generous threshold
separates the two regimes cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import AffinityConfig, AffinityMatrix, build_affinity, normalize_features
from .errors import ConfigError, ValidationError
from .spectral import mean_split, solve_fiedler
from .tensor_io import FeatureMap, PatchMask

DEFAULT_MAX_MASKS = 3


@dataclass(frozen=True)
class MaskCutConfig:
    """Extraction caps and gates.

    ``min_area_frac``/``max_area_frac`` are fractions of the full patch
    grid; masks outside the gates end extraction (small ones are noise,
    large ones are background grabs).
    """

    max_masks: int = DEFAULT_MAX_MASKS
    min_area_frac: float = 0.005
    max_area_frac: float = 0.8
    lambda2_max: float = 0.1

    def __post_init__(self) -> None:
        if self.max_masks < 1:
            raise ConfigError(f"max_masks must be >= 1, got {self.max_masks}")
        if not 0.0 <= self.min_area_frac < self.max_area_frac <= 1.0:
            raise ConfigError(
                "need 0 <= min_area_frac < max_area_frac <= 1, got "
                f"({self.min_area_frac}, {self.max_area_frac})")
        if self.lambda2_max <= 0.0:
            raise ConfigError(f"lambda2_max must be > 0, got {self.lambda2_max}")


def extract_masks(rgb: FeatureMap, flow: FeatureMap | None,
                  acfg: AffinityConfig, mcfg: MaskCutConfig) -> list[PatchMask]:
    """Extract up to ``max_masks`` pairwise-disjoint patch masks.

    With ``acfg.alpha == 1`` the flow argument is ignored entirely, so the
    output is identical whether it is absent or present.
    """
    rows, cols = rgb.rows, rgb.cols
    rgb_n = normalize_features(rgb)
    flow_n = None
    if acfg.alpha < 1.0:
        if flow is None:
            raise ConfigError(
                f"alpha={acfg.alpha} requires flow features (only alpha=1 may omit them)")
        flow_n = normalize_features(flow)
    base = build_affinity(rgb_n, flow_n, acfg)

    n = rows * cols
    active = np.ones(n, dtype=bool)
    masks: list[PatchMask] = []
    while len(masks) < mcfg.max_masks:
        idx = np.flatnonzero(active)
        if idx.size < 2:
            break
        sub = AffinityMatrix.from_weights(base.w[np.ix_(idx, idx)])
        if (sub.degree <= 0.0).any():
            break
        sol = solve_fiedler(sub)
        if sol.lambda2 > mcfg.lambda2_max:
            break
        fg = mean_split(sol.fiedler)
        count = int(fg.sum())
        if count == 0 or count == idx.size:
            break
        frac = count / n
        if frac < mcfg.min_area_frac or frac > mcfg.max_area_frac:
            break
        bits = np.zeros(n, dtype=bool)
        bits[idx[fg]] = True
        masks.append(PatchMask(bits.reshape(rows, cols)))
        active[idx[fg]] = False
    return masks


def upsample_mask(pm: PatchMask, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor upsampling of a patch mask to a pixel raster.

    Pixel (r, c) takes the value of patch (floor(r*rows/out_h),
    floor(c*cols/out_w)); output dims must not be smaller than the grid.
    """
    if out_h < pm.rows or out_w < pm.cols:
        raise ValidationError(
            f"output {out_h}x{out_w} is smaller than the {pm.rows}x{pm.cols} grid")
    row_idx = (np.arange(out_h) * pm.rows) // out_h
    col_idx = (np.arange(out_w) * pm.cols) // out_w
    return pm.bits[np.ix_(row_idx, col_idx)]
