"""Moving-object segmentation from registered frame pairs.

Once the dominant background homography of a frame pair is known, two cues
expose independently moving content: the *residual motion map* (how far the
observed flow departs from the homography's prediction, measured in
normalized coordinates) and the *aligned difference image* (photometric
mismatch after registering the pair).  The cues are fused, thresholded,
cleaned up morphologically, reduced to the dominant connected component,
and finally smoothed over time by a per-pixel majority vote.

No appearance model is involved anywhere — camouflage has nothing to hide
behind once the background is cancelled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator

from ._validation import as_flow, as_homography, as_mask, check_odd_window
from .errors import CamoflowError, ConfigError, PipelineError
from .flow import flow_to_correspondences
from .registration import (
    RegistrationConfig,
    RegistrationResult,
    align_and_diff,
    estimate,
)

#: 8-connected structuring element shared by morphology and labelling.
_BOX_3X3 = np.ones((3, 3), dtype=bool)

#: Cue fields whose full dynamic range falls below this are floating-point
#: rounding noise, not evidence: genuine motion residuals sit at 1e-3
#: normalized units per pixel of displacement and photometric differences
#: quantize near 4e-3.  Such fields normalize to zero instead of having
#: their noise stretched to [0, 1].
CUE_NOISE_FLOOR = 1e-9


@dataclass(frozen=True)
class SegmentationConfig:
    """Knobs of the cue fusion and mask clean-up.

    Attributes
    ----------
    alpha:
        Fusion weight: ``alpha`` on the residual motion cue, ``1 - alpha``
        on the aligned photometric difference, both min-max normalized.
    threshold:
        Fixed binarization threshold; ``None`` selects Otsu's method.
    min_area_fraction:
        Components must exceed this fraction of the pixel count to survive.
    window:
        Odd temporal window of the majority vote (1 disables smoothing).
    """

    alpha: float = 0.7
    threshold: float | None = None
    min_area_fraction: float = 0.001
    window: int = 3

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.threshold is not None and not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must lie in [0, 1], got {self.threshold}")
        if not 0.0 <= self.min_area_fraction <= 1.0:
            raise ConfigError(
                f"min_area_fraction must lie in [0, 1], got {self.min_area_fraction}"
            )
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"window must be an odd integer >= 1, got {self.window}")


def residual_motion_map(flow, homography) -> np.ndarray:
    """Per-pixel disagreement between observed flow and a homography.

    For every pixel ``x`` the homography predicts a displacement; the map
    holds ``||H(x) - (x + flow(x))||_2`` in normalized coordinates.  Pixels
    whose homogeneous denominator vanishes are assigned the maximum finite
    value of the map (they certainly do not follow the homography).
    """
    f = as_flow(flow)
    m = as_homography(homography)
    height, width = f.shape[:2]
    gx, gy = np.meshgrid(
        np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64)
    )
    nx = 2.0 * gx / (width - 1.0) - 1.0
    ny = 2.0 * gy / (height - 1.0) - 1.0

    denom = m[2, 0] * nx + m[2, 1] * ny + m[2, 2]
    finite = np.abs(denom) >= 1e-12
    safe = np.where(finite, denom, 1.0)
    px = (m[0, 0] * nx + m[0, 1] * ny + m[0, 2]) / safe
    py = (m[1, 0] * nx + m[1, 1] * ny + m[1, 2]) / safe

    tx = 2.0 * (gx + f[:, :, 0]) / (width - 1.0) - 1.0
    ty = 2.0 * (gy + f[:, :, 1]) / (height - 1.0) - 1.0

    residual = np.hypot(px - tx, py - ty)
    if not np.all(finite):
        peak = residual[finite].max() if np.any(finite) else 0.0
        residual = np.where(finite, residual, peak)
    return residual


def _minmax(values: np.ndarray) -> np.ndarray:
    lo = float(values.min())
    hi = float(values.max())
    if hi - lo <= CUE_NOISE_FLOOR:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def fuse_cues(motion, diff, alpha: float = 0.7, valid=None) -> np.ndarray:
    """Blend the motion and photometric cues into one saliency map.

    Each cue is min-max normalized to ``[0, 1]`` first; the blend is
    ``alpha * motion + (1 - alpha) * diff``.  A cue whose dynamic range
    stays below :data:`CUE_NOISE_FLOOR` carries no signal and contributes
    zero.  Pixels outside ``valid`` (if given) are zeroed so border
    effects cannot masquerade as motion.
    """
    m = np.asarray(motion, dtype=np.float64)
    d = np.asarray(diff, dtype=np.float64)
    if m.shape != d.shape:
        raise ValueError(f"cue shapes differ: {m.shape} vs {d.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    fused = alpha * _minmax(m) + (1.0 - alpha) * _minmax(d)
    if valid is not None:
        fused = np.where(as_mask(valid, "valid"), fused, 0.0)
    return fused


def otsu_threshold(values, bins: int = 256) -> float:
    """Otsu's between-class-variance-maximizing threshold.

    Operates on a histogram of the flattened input; returns the bin-center
    threshold.  A constant input yields its single value (everything ends
    up below-or-equal, i.e. background).
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot threshold an empty array")
    lo, hi = float(v.min()), float(v.max())
    if hi - lo <= 0.0:
        return lo
    hist, edges = np.histogram(v, bins=bins, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2.0

    weight = hist.astype(np.float64)
    total = weight.sum()
    prob = weight / total
    omega = np.cumsum(prob)
    mu = np.cumsum(prob * centers)
    mu_total = mu[-1]

    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    between[~np.isfinite(between)] = -1.0
    return float(centers[int(np.argmax(between))])


def threshold_and_clean(saliency, config: SegmentationConfig | None = None) -> np.ndarray:
    """Binarize a saliency map and keep only the dominant clean component.

    Pipeline: threshold (Otsu unless fixed) -> 3x3 binary opening ->
    3x3 binary closing -> largest 8-connected component, dropped unless its
    area strictly exceeds ``min_area_fraction`` of the pixels.  May return
    an all-false mask.
    """
    cfg = config or SegmentationConfig()
    s = np.asarray(saliency, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError(f"saliency must be 2-D, got ndim={s.ndim}")

    thr = otsu_threshold(s) if cfg.threshold is None else cfg.threshold
    binary = s > thr
    if not binary.any():
        return np.zeros(s.shape, dtype=bool)

    cleaned = ndimage.binary_opening(binary, structure=_BOX_3X3)
    cleaned = ndimage.binary_closing(cleaned, structure=_BOX_3X3)
    if not cleaned.any():
        return np.zeros(s.shape, dtype=bool)

    labels, count = ndimage.label(cleaned, structure=_BOX_3X3)
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, count + 1))
    largest = int(np.argmax(sizes)) + 1
    min_area = cfg.min_area_fraction * s.size
    if sizes[largest - 1] <= min_area:
        return np.zeros(s.shape, dtype=bool)
    return labels == largest


def temporal_smooth(masks, window: int = 3) -> list[np.ndarray]:
    """Per-pixel strict-majority vote over a sliding temporal window.

    The window is centered and clipped at the sequence ends; a pixel is on
    when *more than half* of the frames in the (possibly shortened) window
    agree.  ``window = 1`` returns the masks unchanged.  All masks must
    share a shape and the window must be odd.
    """
    check_odd_window(window)
    mask_list = [as_mask(m, f"masks[{i}]") for i, m in enumerate(masks)]
    if not mask_list:
        return []
    shape = mask_list[0].shape
    for i, m in enumerate(mask_list):
        if m.shape != shape:
            raise ValueError(
                f"masks[{i}] has shape {m.shape}, expected {shape}"
            )
    if window == 1 or len(mask_list) == 1:
        return [m.copy() for m in mask_list]

    stack = np.stack(mask_list).astype(np.int32)
    half = window // 2
    smoothed = []
    for t in range(len(mask_list)):
        lo = max(0, t - half)
        hi = min(len(mask_list), t + half + 1)
        votes = stack[lo:hi].sum(axis=0)
        smoothed.append(2 * votes > (hi - lo))
    return smoothed


@dataclass
class PairSegmentation:
    """Everything the pipeline derives from one frame pair."""

    mask: np.ndarray
    saliency: np.ndarray
    motion: np.ndarray
    diff: np.ndarray
    valid: np.ndarray
    registration: RegistrationResult


def segment_pair(
    frame_t,
    frame_t1,
    flow,
    reg_config: RegistrationConfig | None = None,
    seg_config: SegmentationConfig | None = None,
    estimator: str = "irls",
    seed: int = 0,
) -> PairSegmentation:
    """Run registration + cue fusion + clean-up for a single frame pair."""
    reg_cfg = reg_config or RegistrationConfig()
    seg_cfg = seg_config or SegmentationConfig()

    corr = flow_to_correspondences(flow, reg_cfg.grid_m, reg_cfg.grid_n)
    result = estimate(corr, estimator=estimator, config=reg_cfg, seed=seed)
    diff, valid = align_and_diff(frame_t, frame_t1, result.homography)
    motion = residual_motion_map(flow, result.homography)
    saliency = fuse_cues(motion, diff, alpha=seg_cfg.alpha, valid=valid)
    mask = threshold_and_clean(saliency, seg_cfg)
    return PairSegmentation(
        mask=mask,
        saliency=saliency,
        motion=motion,
        diff=diff,
        valid=valid,
        registration=result,
    )


def segment_sequence(
    frames,
    flows,
    reg_config: RegistrationConfig | None = None,
    seg_config: SegmentationConfig | None = None,
    estimator: str = "irls",
    seed: int = 0,
    jobs: int = 1,
) -> list[PairSegmentation]:
    """Segment every consecutive pair of a sequence, then smooth in time.

    ``frames`` has length T and ``flows`` length T-1 (flow ``i`` connects
    frames ``i`` and ``i+1``).  Per-pair failures are re-raised as
    :class:`PipelineError` carrying the pair index.  ``jobs > 1`` fans the
    independent pairs out over threads; outputs are order-stable either
    way.
    """
    frames = list(frames)
    flows = list(flows)
    if len(frames) < 2:
        raise ValueError(f"need at least 2 frames, got {len(frames)}")
    if len(flows) != len(frames) - 1:
        raise ValueError(
            f"expected {len(frames) - 1} flow fields for {len(frames)} frames, "
            f"got {len(flows)}"
        )
    seg_cfg = seg_config or SegmentationConfig()

    def run(i: int) -> PairSegmentation:
        try:
            return segment_pair(
                frames[i],
                frames[i + 1],
                flows[i],
                reg_config,
                seg_cfg,
                estimator=estimator,
                seed=seed + i,
            )
        except CamoflowError as exc:
            raise PipelineError(f"frame pair {i}: {exc}", frame_index=i) from exc

    indices = range(len(flows))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, indices))
    else:
        results = [run(i) for i in indices]

    smoothed = temporal_smooth([r.mask for r in results], seg_cfg.window)
    for r, m in zip(results, smoothed):
        r.mask = m
    return results


class MotionSegmenter(BaseEstimator):
    """scikit-learn style front door to the whole segmentation pipeline.

    ``fit(frames, flows)`` runs the pipeline and stores per-pair results;
    ``fit_predict`` additionally returns the smoothed masks.  All
    hyper-parameters of the registration and segmentation stages appear as
    constructor arguments so ``get_params`` / ``set_params`` cover them.
    """

    def __init__(
        self,
        alpha: float = 0.7,
        threshold: float | None = None,
        min_area_fraction: float = 0.001,
        window: int = 3,
        estimator: str = "irls",
        gamma: float = 0.05,
        tau: float = 0.01,
        epsilon: float = 0.01,
        grid_m: int = 64,
        grid_n: int = 64,
        max_iterations: int = 50,
        step_size: float = 0.5,
        convergence_tolerance: float = 1e-8,
        ransac_iterations: int = 200,
        ransac_threshold: float | None = None,
        random_state: int = 0,
    ):
        self.alpha = alpha
        self.threshold = threshold
        self.min_area_fraction = min_area_fraction
        self.window = window
        self.estimator = estimator
        self.gamma = gamma
        self.tau = tau
        self.epsilon = epsilon
        self.grid_m = grid_m
        self.grid_n = grid_n
        self.max_iterations = max_iterations
        self.step_size = step_size
        self.convergence_tolerance = convergence_tolerance
        self.ransac_iterations = ransac_iterations
        self.ransac_threshold = ransac_threshold
        self.random_state = random_state

    def _configs(self) -> tuple[RegistrationConfig, SegmentationConfig]:
        reg = RegistrationConfig(
            gamma=self.gamma,
            tau=self.tau,
            epsilon=self.epsilon,
            grid_m=self.grid_m,
            grid_n=self.grid_n,
            max_iterations=self.max_iterations,
            step_size=self.step_size,
            convergence_tolerance=self.convergence_tolerance,
            ransac_iterations=self.ransac_iterations,
            ransac_threshold=self.ransac_threshold,
        )
        seg = SegmentationConfig(
            alpha=self.alpha,
            threshold=self.threshold,
            min_area_fraction=self.min_area_fraction,
            window=self.window,
        )
        return reg, seg

    def fit(self, frames, flows):
        reg, seg = self._configs()
        seed = 0 if self.random_state is None else int(self.random_state)
        self.pairs_ = segment_sequence(
            frames, flows, reg, seg, estimator=self.estimator, seed=seed
        )
        self.masks_ = [p.mask for p in self.pairs_]
        return self

    def fit_predict(self, frames, flows) -> list[np.ndarray]:
        return self.fit(frames, flows).masks_
