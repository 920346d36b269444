"""Robust background registration from flow-derived correspondences.

Camouflaged objects are invisible to appearance but not to motion: the
background of a (mostly) rigid scene moves under a single homography while
anything moving independently violates it.  This module fits that dominant
homography robustly and, as a by-product, produces per-correspondence
inlier weights that already sketch the moving object.

Two estimators are provided:

* :func:`estimate_ransac` — classical hypothesize-and-verify with minimal
  four-point samples and a consensus refit.
* :func:`estimate_irls` — direct minimization of a differentiable
  objective by alternating weighted least squares with a damped weight
  update, mirroring what a trainable inlier predictor would optimize.

Both report the same :class:`RegistrationResult` and are interchangeable
throughout the pipeline.  Thin scikit-learn style wrappers
(:class:`RansacHomography`, :class:`SoftInlierHomography`) expose the
``fit`` / ``predict`` / ``get_params`` protocol on top.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from ._validation import as_weights
from .errors import (
    ConfigError,
    DegenerateConfigurationError,
    InsufficientSupportError,
    NoModelFoundError,
    PointAtInfinityError,
)
from .geometry import (
    Correspondences,
    apply_homography,
    build_dlt_matrix,
    homography_residuals,
    invert_homography,
    solve_weighted_dlt,
    warp_image,
)

#: Weights are clamped into ``[CLAMP, 1 - CLAMP]`` inside logarithms.
LOG_CLAMP = 1e-6


@dataclass(frozen=True)
class RegistrationConfig:
    """Hyper-parameters of the registration objective and its optimizers.

    The defaults are tuned for normalized coordinates where the frame spans
    ``[-1, 1]``: a residual of ``epsilon = 0.01`` corresponds to roughly a
    pixel at 256 x 256 resolution.

    Attributes
    ----------
    gamma:
        Reward per unit of soft inlier mass; larger values favour keeping
        points in the consensus.
    tau:
        Temperature of the soft inlier sigmoid; smaller is sharper.
    epsilon:
        Residual scale at which a correspondence stops counting as inlier.
    grid_m, grid_n:
        Rows / columns of the sampling grid used to turn dense flow into
        correspondences.
    max_iterations:
        Iteration budget of the direct minimizer.
    step_size:
        Damping of the weight update ``w <- (1 - s) w + s l``.
    convergence_tolerance:
        Total-loss change below which an iteration counts as stationary;
        three consecutive stationary iterations stop the minimizer.
    ransac_iterations:
        Number of minimal samples drawn by the sampling estimator.
    ransac_threshold:
        Inlier residual threshold; ``None`` falls back to ``epsilon``.
    """

    gamma: float = 0.05
    tau: float = 0.01
    epsilon: float = 0.01
    grid_m: int = 64
    grid_n: int = 64
    max_iterations: int = 50
    step_size: float = 0.5
    convergence_tolerance: float = 1e-8
    ransac_iterations: int = 200
    ransac_threshold: float | None = None

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.gamma < 0.0:
            raise ConfigError(f"gamma must be non-negative, got {self.gamma}")
        if self.grid_m < 2 or self.grid_n < 2:
            raise ConfigError("grid must be at least 2 x 2")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not 0.0 < self.step_size <= 1.0:
            raise ConfigError(f"step_size must lie in (0, 1], got {self.step_size}")
        if self.convergence_tolerance <= 0.0:
            raise ConfigError("convergence_tolerance must be positive")
        if self.ransac_iterations < 1:
            raise ConfigError("ransac_iterations must be >= 1")
        if self.ransac_threshold is not None and self.ransac_threshold <= 0.0:
            raise ConfigError("ransac_threshold must be positive when given")

    @property
    def effective_ransac_threshold(self) -> float:
        return self.epsilon if self.ransac_threshold is None else self.ransac_threshold


@dataclass
class RegistrationResult:
    """Outcome of registering one frame pair.

    ``homography`` maps frame-t normalized coordinates to frame-t+1;
    ``weights`` are the per-correspondence inlier weights in grid order.
    """

    homography: np.ndarray
    weights: np.ndarray
    loss: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "homography": [float(v) for v in np.asarray(self.homography).ravel()],
            "weights": [float(v) for v in np.asarray(self.weights).ravel()],
            "loss": float(self.loss),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RegistrationResult":
        h = np.asarray(payload["homography"], dtype=np.float64).reshape(3, 3)
        return cls(
            homography=h,
            weights=np.asarray(payload["weights"], dtype=np.float64),
            loss=float(payload["loss"]),
            iterations=int(payload["iterations"]),
            converged=bool(payload["converged"]),
        )


class LossTerms(NamedTuple):
    total: float
    fit: float
    regularizer: float


def soft_inlier_labels(residuals, epsilon: float = 0.01, tau: float = 0.01) -> np.ndarray:
    """Sigmoid inlier scores ``sigma((epsilon - r) / tau)`` in ``(0, 1)``.

    A residual exactly at ``epsilon`` scores 0.5; the score decreases
    monotonically with the residual.
    """
    r = np.asarray(residuals, dtype=np.float64)
    if tau <= 0.0:
        raise ConfigError(f"tau must be positive, got {tau}")
    return expit((epsilon - r) / tau)


def registration_loss(
    correspondences: Correspondences,
    weights,
    homography,
    config: RegistrationConfig | None = None,
) -> LossTerms:
    """Evaluate the registration objective for a candidate solution.

    The objective combines a weighted fit term with a self-supervision
    regularizer::

        fit   = sum(w * r) / sum(w)
        reg   = -gamma * sum(l) - mean(l * log w + (1 - l) * log(1 - w))
        total = fit + reg

    where ``r`` are transfer residuals and ``l = sigma((epsilon - r) / tau)``
    are soft inlier labels.  The ``gamma`` term is a sum over
    correspondences while the cross-entropy term is a mean; weights are
    clamped to ``[1e-6, 1 - 1e-6]`` inside the logarithms only.

    Raises :class:`InsufficientSupportError` when the total weight is not
    strictly positive, and propagates :class:`PointAtInfinityError` from
    the residual computation.
    """
    cfg = config or RegistrationConfig()
    n = len(correspondences)
    w = as_weights(weights, n)
    total_weight = w.sum()
    if total_weight <= 0.0:
        raise InsufficientSupportError("total weight must be strictly positive")

    r = homography_residuals(homography, correspondences)
    labels = soft_inlier_labels(r, cfg.epsilon, cfg.tau)

    fit = float((w * r).sum() / total_weight)
    clamped = np.clip(w, LOG_CLAMP, 1.0 - LOG_CLAMP)
    cross_entropy = labels * np.log(clamped) + (1.0 - labels) * np.log(1.0 - clamped)
    reg = float(-cfg.gamma * labels.sum() - cross_entropy.mean())
    return LossTerms(total=fit + reg, fit=fit, regularizer=reg)


def _require_minimum(correspondences: Correspondences) -> None:
    if len(correspondences) < 4:
        raise InsufficientSupportError(
            f"need at least 4 correspondences, got {len(correspondences)}"
        )


def estimate_ransac(
    correspondences: Correspondences,
    config: RegistrationConfig | None = None,
    seed: int = 0,
) -> RegistrationResult:
    """Robust homography fit by random minimal sampling and consensus.

    Draws ``ransac_iterations`` four-point samples, scores each candidate
    by its inlier count at the residual threshold, then refits with a
    weighted DLT on the best binary consensus set.  The returned weights
    are the 0/1 consensus indicators; the loss is the registration
    objective evaluated at that solution.  Deterministic for a fixed seed.

    Raises :class:`NoModelFoundError` when no sample produces a valid,
    non-degenerate candidate with at least four inliers.
    """
    cfg = config or RegistrationConfig()
    _require_minimum(correspondences)
    n = len(correspondences)
    threshold = cfg.effective_ransac_threshold
    rng = np.random.default_rng(seed)
    a_full = build_dlt_matrix(correspondences)
    ones4 = np.ones(4)

    best_inliers: np.ndarray | None = None
    best_count = -1
    for _ in range(cfg.ransac_iterations):
        idx = rng.choice(n, size=4, replace=False)
        rows = np.empty(8, dtype=np.intp)
        rows[0::2] = 2 * idx
        rows[1::2] = 2 * idx + 1
        try:
            candidate = solve_weighted_dlt(a_full[rows], ones4)
            residuals = homography_residuals(candidate, correspondences)
        except (DegenerateConfigurationError, InsufficientSupportError, PointAtInfinityError):
            continue
        inliers = residuals < threshold
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers

    if best_inliers is None or best_count < 4:
        raise NoModelFoundError(
            f"no consensus after {cfg.ransac_iterations} samples "
            f"(best inlier count {max(best_count, 0)})"
        )

    weights = best_inliers.astype(np.float64)
    try:
        homography = solve_weighted_dlt(a_full, weights)
    except (DegenerateConfigurationError, InsufficientSupportError) as exc:
        raise NoModelFoundError(f"consensus refit failed: {exc}") from exc
    loss = registration_loss(correspondences, weights, homography, cfg).total
    return RegistrationResult(
        homography=homography,
        weights=weights,
        loss=loss,
        iterations=cfg.ransac_iterations,
        converged=True,
    )


def estimate_irls(
    correspondences: Correspondences,
    config: RegistrationConfig | None = None,
) -> RegistrationResult:
    """Minimize the registration objective by alternating updates.

    Starts from uniform weights ``0.5`` and an unweighted DLT solution,
    then alternates a damped weight step towards the soft inlier labels,
    ``w <- (1 - step_size) w + step_size * l``, with a weighted DLT refit.
    Returns the iterate with the lowest total loss seen.  ``converged`` is
    set once the total loss changes by less than ``convergence_tolerance``
    for three consecutive iterations.

    Deterministic (no randomness involved); degenerate data raises
    :class:`DegenerateConfigurationError` from the solver.
    """
    cfg = config or RegistrationConfig()
    _require_minimum(correspondences)
    n = len(correspondences)
    a = build_dlt_matrix(correspondences)

    weights = np.full(n, 0.5)
    homography = solve_weighted_dlt(a, np.ones(n))
    terms = registration_loss(correspondences, weights, homography, cfg)

    best = (homography, weights.copy(), terms.total)
    previous_total = terms.total
    iterations = 0
    stationary = 0
    converged = False

    for iterations in range(1, cfg.max_iterations + 1):
        residuals = homography_residuals(homography, correspondences)
        labels = soft_inlier_labels(residuals, cfg.epsilon, cfg.tau)
        weights = (1.0 - cfg.step_size) * weights + cfg.step_size * labels
        homography = solve_weighted_dlt(a, weights)
        total = registration_loss(correspondences, weights, homography, cfg).total

        if total < best[2]:
            best = (homography, weights.copy(), total)
        if abs(total - previous_total) < cfg.convergence_tolerance:
            stationary += 1
            if stationary >= 3:
                converged = True
                break
        else:
            stationary = 0
        previous_total = total

    return RegistrationResult(
        homography=best[0],
        weights=best[1],
        loss=best[2],
        iterations=iterations,
        converged=converged,
    )


ESTIMATORS = {"ransac": "estimate_ransac", "irls": "estimate_irls"}


def estimate(
    correspondences: Correspondences,
    estimator: str = "irls",
    config: RegistrationConfig | None = None,
    seed: int = 0,
) -> RegistrationResult:
    """Dispatch to one of the registration estimators by name."""
    if estimator == "ransac":
        return estimate_ransac(correspondences, config, seed=seed)
    if estimator == "irls":
        return estimate_irls(correspondences, config)
    raise ConfigError(f"unknown estimator {estimator!r}, expected one of {sorted(ESTIMATORS)}")


def align_and_diff(frame_t, frame_t1, homography):
    """Register frame ``t+1`` onto frame ``t`` and difference them.

    ``homography`` maps frame-t coordinates forward to frame-t+1 (the
    estimators' convention), so the alignment resamples frame ``t+1`` at
    the mapped positions: ``aligned(x) = frame_t1(H(x))``.  Returns
    ``(diff, valid)`` where ``diff`` is the per-pixel absolute difference
    (averaged over channels) with invalid pixels zeroed, and ``valid``
    marks pixels whose sample stayed inside frame ``t+1``.

    For a correct background homography the difference collapses to
    resampling noise everywhere except on independently moving content.
    """
    a = np.asarray(frame_t, dtype=np.float64)
    b = np.asarray(frame_t1, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"frames must share a shape, got {a.shape} vs {b.shape}")
    aligned, valid = warp_image(b, invert_homography(homography))
    diff = np.abs(a - aligned)
    if diff.ndim == 3:
        diff = diff.mean(axis=2)
    return np.where(valid, diff, 0.0), valid


# ---------------------------------------------------------------------------
# scikit-learn style wrappers
# ---------------------------------------------------------------------------

class _HomographyEstimatorBase(BaseEstimator):
    """Shared fit/predict plumbing for the estimator wrappers."""

    def _config(self) -> RegistrationConfig:  # pragma: no cover - overridden
        raise NotImplementedError

    def _estimate(self, correspondences: Correspondences) -> RegistrationResult:
        raise NotImplementedError

    def fit(self, X, y):
        """Fit a homography mapping source points ``X`` to targets ``y``.

        Both arguments are ``(N, 2)`` arrays in normalized coordinates.
        """
        corr = Correspondences(X, y)
        result = self._estimate(corr)
        self.homography_ = result.homography
        self.weights_ = result.weights
        self.loss_ = result.loss
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        return self

    def predict(self, X):
        """Transfer points through the fitted homography."""
        if not hasattr(self, "homography_"):
            raise InsufficientSupportError("estimator is not fitted yet")
        return apply_homography(self.homography_, X)

    def score(self, X, y):
        """Negative mean transfer residual (higher is better)."""
        residuals = homography_residuals(self.homography_, Correspondences(X, y))
        return -float(residuals.mean())


class RansacHomography(_HomographyEstimatorBase):
    """Consensus-sampling homography estimator with the sklearn protocol.

    Parameters mirror :class:`RegistrationConfig`; ``random_state`` seeds
    the minimal-sample draws, making ``fit`` deterministic.
    """

    def __init__(
        self,
        threshold: float | None = None,
        n_iterations: int = 200,
        epsilon: float = 0.01,
        tau: float = 0.01,
        gamma: float = 0.05,
        random_state: int = 0,
    ):
        self.threshold = threshold
        self.n_iterations = n_iterations
        self.epsilon = epsilon
        self.tau = tau
        self.gamma = gamma
        self.random_state = random_state

    def _config(self) -> RegistrationConfig:
        return RegistrationConfig(
            gamma=self.gamma,
            tau=self.tau,
            epsilon=self.epsilon,
            ransac_iterations=self.n_iterations,
            ransac_threshold=self.threshold,
        )

    def _estimate(self, corr: Correspondences) -> RegistrationResult:
        seed = 0 if self.random_state is None else int(self.random_state)
        return estimate_ransac(corr, self._config(), seed=seed)


class SoftInlierHomography(_HomographyEstimatorBase):
    """Direct-minimization homography estimator with the sklearn protocol.

    Optimizes the soft-inlier objective of :func:`registration_loss` by
    alternating damped weight updates with weighted DLT refits.
    """

    def __init__(
        self,
        gamma: float = 0.05,
        tau: float = 0.01,
        epsilon: float = 0.01,
        max_iterations: int = 50,
        step_size: float = 0.5,
        convergence_tolerance: float = 1e-8,
    ):
        self.gamma = gamma
        self.tau = tau
        self.epsilon = epsilon
        self.max_iterations = max_iterations
        self.step_size = step_size
        self.convergence_tolerance = convergence_tolerance

    def _config(self) -> RegistrationConfig:
        return RegistrationConfig(
            gamma=self.gamma,
            tau=self.tau,
            epsilon=self.epsilon,
            max_iterations=self.max_iterations,
            step_size=self.step_size,
            convergence_tolerance=self.convergence_tolerance,
        )

    def _estimate(self, corr: Correspondences) -> RegistrationResult:
        return estimate_irls(corr, self._config())
