"""Planar homography estimation and image warping primitives.

Conventions used throughout the package
---------------------------------------
* Points are expressed in *normalized* coordinates: the pixel rectangle
  ``[0, W-1] x [0, H-1]`` maps affinely onto ``[-1, 1]^2``.  All homographies
  handled by this module act on normalized coordinates unless noted.
* Solvers return a canonical representative of the projective equivalence
  class: unit Frobenius norm with the first non-zero coefficient positive.
* Homographies estimated from frame pairs map frame-``t`` coordinates to
  frame-``t+1`` coordinates, i.e. the same direction as the optical flow
  between the frames.

The estimation route is the classical direct linear transform: each
correspondence contributes two rows to a ``(2N, 9)`` system ``A h = 0`` and
the solution is the eigenvector for the smallest eigenvalue of the weighted
normal matrix ``A^T diag(w) A``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_homography, as_image, as_points, as_weights
from .errors import (
    DegenerateConfigurationError,
    InsufficientSupportError,
    NonInvertibleHomographyError,
    PointAtInfinityError,
)

#: Weights at or below this floor do not count towards the support of a fit.
WEIGHT_FLOOR = 1e-6

#: Relative eigenvalue-gap threshold below which the DLT system is ambiguous.
EIGEN_GAP_TOL = 1e-8

#: Condition-number bound beyond which a 3x3 matrix is treated as singular.
CONDITION_LIMIT = 1e12


# ---------------------------------------------------------------------------
# Coordinate transforms
# ---------------------------------------------------------------------------

def pixels_to_normalized(points, width: int, height: int) -> np.ndarray:
    """Map pixel coordinates onto the centered square ``[-1, 1]^2``.

    The corner pixel ``(0, 0)`` maps to ``(-1, -1)`` and
    ``(W-1, H-1)`` maps to ``(1, 1)``; the map extends affinely beyond the
    image rectangle.
    """
    pts = as_points(points)
    if width < 2 or height < 2:
        raise ValueError("width and height must both be >= 2")
    out = np.empty_like(pts)
    out[:, 0] = 2.0 * pts[:, 0] / (width - 1.0) - 1.0
    out[:, 1] = 2.0 * pts[:, 1] / (height - 1.0) - 1.0
    return out


def normalized_to_pixels(points, width: int, height: int) -> np.ndarray:
    """Inverse of :func:`pixels_to_normalized`."""
    pts = as_points(points)
    if width < 2 or height < 2:
        raise ValueError("width and height must both be >= 2")
    out = np.empty_like(pts)
    out[:, 0] = (pts[:, 0] + 1.0) * (width - 1.0) / 2.0
    out[:, 1] = (pts[:, 1] + 1.0) * (height - 1.0) / 2.0
    return out


def normalization_matrix(width: int, height: int) -> np.ndarray:
    """3x3 affine matrix realizing :func:`pixels_to_normalized`."""
    return np.array(
        [
            [2.0 / (width - 1.0), 0.0, -1.0],
            [0.0, 2.0 / (height - 1.0), -1.0],
            [0.0, 0.0, 1.0],
        ]
    )


def normalized_grid(width: int, height: int, m: int, n: int) -> np.ndarray:
    """Regular ``m x n`` sampling grid in normalized coordinates.

    Returns an ``(m * n, 2)`` array in row-major order (y varies slowest),
    spanning the full square ``[-1, 1]^2`` inclusively.  ``m`` counts rows,
    ``n`` counts columns; ``width``/``height`` are accepted so callers state
    the image the grid belongs to, and must be >= 2.
    """
    if width < 2 or height < 2:
        raise ValueError("width and height must both be >= 2")
    if m < 2 or n < 2:
        raise ValueError("grid must be at least 2 x 2")
    ys = np.linspace(-1.0, 1.0, m)
    xs = np.linspace(-1.0, 1.0, n)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


# ---------------------------------------------------------------------------
# Correspondences and the DLT system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Correspondences:
    """Paired source/target points in normalized coordinates."""

    source: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        src = as_points(self.source, "source")
        tgt = as_points(self.target, "target")
        if src.shape != tgt.shape:
            raise ValueError(
                f"source and target must pair up, got {src.shape} vs {tgt.shape}"
            )
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)

    def __len__(self) -> int:
        return self.source.shape[0]

    def take(self, indices) -> "Correspondences":
        """Sub-select correspondences by index."""
        idx = np.asarray(indices, dtype=np.intp)
        return Correspondences(self.source[idx], self.target[idx])


def build_dlt_matrix(correspondences: Correspondences) -> np.ndarray:
    """Assemble the ``(2N, 9)`` direct-linear-transform design matrix.

    Correspondence ``i`` with source ``(xs, ys)`` and target ``(xt, yt)``
    occupies rows ``2i`` and ``2i + 1``::

        [xs, ys, 1,  0,  0, 0, -xs*xt, -ys*xt, -xt]
        [ 0,  0, 0, xs, ys, 1, -xs*yt, -ys*yt, -yt]

    so that ``A @ vec(H) = 0`` for the true homography, with ``vec`` stacking
    ``H`` row by row.
    """
    src = correspondences.source
    tgt = correspondences.target
    n = src.shape[0]
    xs, ys = src[:, 0], src[:, 1]
    xt, yt = tgt[:, 0], tgt[:, 1]
    ones = np.ones(n)
    zeros = np.zeros(n)

    a = np.empty((2 * n, 9))
    a[0::2] = np.column_stack(
        [xs, ys, ones, zeros, zeros, zeros, -xs * xt, -ys * xt, -xt]
    )
    a[1::2] = np.column_stack(
        [zeros, zeros, zeros, xs, ys, ones, -xs * yt, -ys * yt, -yt]
    )
    return a


def canonicalize_homography(h) -> np.ndarray:
    """Scale to unit Frobenius norm with the first non-zero entry positive.

    The representative is unique within each projective equivalence class,
    which makes homographies directly comparable with ``==`` / ``allclose``.
    """
    m = as_homography(h)
    norm = np.linalg.norm(m)
    if norm == 0.0:
        raise ValueError("cannot canonicalize the zero matrix")
    m = m / norm
    flat = m.ravel()
    lead = flat[np.abs(flat) > 1e-12]
    if lead.size and lead[0] < 0.0:
        m = -m
    return m


def solve_weighted_dlt(a: np.ndarray, weights) -> np.ndarray:
    """Solve the weighted DLT system for a homography.

    Parameters
    ----------
    a:
        ``(2N, 9)`` design matrix from :func:`build_dlt_matrix`.
    weights:
        ``(N,)`` per-correspondence weights in ``[0, 1]``.  Each weight
        multiplies both rows of its correspondence.

    Returns
    -------
    ``(3, 3)`` canonicalized homography: the eigenvector for the smallest
    eigenvalue of ``A^T diag(w) A``, reshaped row-major.

    Raises
    ------
    InsufficientSupportError
        Fewer than four weights exceed the weight floor, or the total
        weight is not strictly positive.
    DegenerateConfigurationError
        The two smallest eigenvalues are relatively closer than
        ``EIGEN_GAP_TOL`` (the data does not pin down a unique solution),
        or the recovered matrix is numerically singular.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 9 or a.shape[0] % 2:
        raise ValueError(f"design matrix must have shape (2N, 9), got {a.shape}")
    n = a.shape[0] // 2
    w = as_weights(weights, n)

    support = int(np.count_nonzero(w > WEIGHT_FLOOR))
    if support < 4:
        raise InsufficientSupportError(
            f"need at least 4 effectively weighted correspondences, have {support}"
        )
    if w.sum() <= 0.0:
        raise InsufficientSupportError("total weight must be strictly positive")

    row_w = np.repeat(w, 2)
    normal = a.T @ (a * row_w[:, None])
    normal = (normal + normal.T) / 2.0  # enforce symmetry before eigh
    eigvals, eigvecs = np.linalg.eigh(normal)

    spread = max(eigvals[-1], np.finfo(np.float64).tiny)
    if (eigvals[1] - eigvals[0]) <= EIGEN_GAP_TOL * spread:
        raise DegenerateConfigurationError(
            "weighted correspondences are (near-)degenerate: the two smallest "
            f"eigenvalues {eigvals[0]:.3e} and {eigvals[1]:.3e} are not separated"
        )

    h = canonicalize_homography(eigvecs[:, 0].reshape(3, 3))
    svals = np.linalg.svd(h, compute_uv=False)
    if svals[-1] <= svals[0] / CONDITION_LIMIT:
        raise DegenerateConfigurationError(
            "recovered homography is numerically singular "
            f"(condition number above {CONDITION_LIMIT:.0e})"
        )
    return h


def estimate_homography(correspondences: Correspondences, weights=None) -> np.ndarray:
    """Convenience wrapper: build the DLT system and solve it."""
    if weights is None:
        weights = np.ones(len(correspondences))
    return solve_weighted_dlt(build_dlt_matrix(correspondences), weights)


# ---------------------------------------------------------------------------
# Applying homographies
# ---------------------------------------------------------------------------

def apply_homography(h, points) -> np.ndarray:
    """Transfer planar points through a homography.

    Raises :class:`PointAtInfinityError` when any point's homogeneous
    denominator falls below ``1e-12`` in magnitude.
    """
    m = as_homography(h)
    pts = as_points(points)
    denom = m[2, 0] * pts[:, 0] + m[2, 1] * pts[:, 1] + m[2, 2]
    bad = np.abs(denom) < 1e-12
    if np.any(bad):
        i = int(np.argmax(bad))
        raise PointAtInfinityError(
            f"point {tuple(pts[i])} maps to infinity (denominator {denom[i]:.3e})"
        )
    x = (m[0, 0] * pts[:, 0] + m[0, 1] * pts[:, 1] + m[0, 2]) / denom
    y = (m[1, 0] * pts[:, 0] + m[1, 1] * pts[:, 1] + m[1, 2]) / denom
    return np.column_stack([x, y])


def homography_residuals(h, correspondences: Correspondences) -> np.ndarray:
    """Euclidean transfer error per correspondence, ``||H(p_s) - p_t||_2``.

    Propagates :class:`PointAtInfinityError` from the transfer.
    """
    transferred = apply_homography(h, correspondences.source)
    return np.linalg.norm(transferred - correspondences.target, axis=1)


def invert_homography(h) -> np.ndarray:
    """Canonicalized inverse; raises if the matrix is numerically singular."""
    m = as_homography(h)
    svals = np.linalg.svd(m, compute_uv=False)
    if svals[-1] <= svals[0] / CONDITION_LIMIT:
        raise NonInvertibleHomographyError(
            "homography is numerically singular and cannot be inverted"
        )
    return canonicalize_homography(np.linalg.inv(m))


def compose_homographies(first, second) -> np.ndarray:
    """Canonicalized composition ``second after first``."""
    return canonicalize_homography(as_homography(second) @ as_homography(first))


def corner_transfer_error(h_a, h_b, width: int, height: int) -> float:
    """Largest displacement, in pixels, between two homographies.

    Both matrices are applied to the four normalized image corners and the
    resulting points are compared in pixel units — a scale-aware measure of
    how far apart two projective maps are over the image footprint.
    """
    corners = np.array(
        [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]
    )
    pa = normalized_to_pixels(apply_homography(h_a, corners), width, height)
    pb = normalized_to_pixels(apply_homography(h_b, corners), width, height)
    return float(np.linalg.norm(pa - pb, axis=1).max())


# ---------------------------------------------------------------------------
# Sampling and warping
# ---------------------------------------------------------------------------

def bilinear_sample(image, x, y, fill: float = 0.0):
    """Sample an image at fractional pixel positions.

    Parameters
    ----------
    image:
        ``(H, W)`` or ``(H, W, C)`` array.
    x, y:
        Arrays of pixel coordinates (any matching shape).
    fill:
        Value written wherever the sample point leaves the image rectangle.

    Returns
    -------
    (values, valid):
        ``values`` has the shape of ``x`` (plus a trailing channel axis for
        multi-channel input); ``valid`` is a boolean array marking samples
        that fell fully inside ``[0, W-1] x [0, H-1]``.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
        squeeze = True
    elif img.ndim == 3:
        squeeze = False
    else:
        raise ValueError(f"image must be 2-D or 3-D, got ndim={img.ndim}")

    h, w = img.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("x and y must have identical shapes")

    finite = np.isfinite(x) & np.isfinite(y)
    valid = finite & (x >= 0.0) & (x <= w - 1.0) & (y >= 0.0) & (y <= h - 1.0)

    xc = np.clip(np.where(finite, x, 0.0), 0.0, w - 1.0)
    yc = np.clip(np.where(finite, y, 0.0), 0.0, h - 1.0)
    x0 = np.clip(np.floor(xc), 0, w - 2).astype(np.intp) if w > 1 else np.zeros_like(xc, dtype=np.intp)
    y0 = np.clip(np.floor(yc), 0, h - 2).astype(np.intp) if h > 1 else np.zeros_like(yc, dtype=np.intp)
    tx = (xc - x0)[..., None]
    ty = (yc - y0)[..., None]

    top = img[y0, x0] * (1.0 - tx) + img[y0, x0 + 1] * tx if w > 1 else img[y0, x0]
    if h > 1:
        bottom = img[y0 + 1, x0] * (1.0 - tx) + img[y0 + 1, x0 + 1] * tx if w > 1 else img[y0 + 1, x0]
        values = top * (1.0 - ty) + bottom * ty
    else:
        values = top

    values = np.where(valid[..., None], values, fill)
    if squeeze:
        values = values[..., 0]
    return values, valid


def nearest_sample(image, x, y, fill: float = 0.0):
    """Nearest-neighbour counterpart of :func:`bilinear_sample`."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
        squeeze = True
    else:
        squeeze = False
    h, w = img.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    finite = np.isfinite(x) & np.isfinite(y)
    valid = finite & (x >= -0.5) & (x <= w - 0.5) & (y >= -0.5) & (y <= h - 0.5)
    xi = np.clip(np.rint(np.where(finite, x, 0.0)), 0, w - 1).astype(np.intp)
    yi = np.clip(np.rint(np.where(finite, y, 0.0)), 0, h - 1).astype(np.intp)
    values = np.where(valid[..., None], img[yi, xi], fill)
    if squeeze:
        values = values[..., 0]
    return values, valid


def warp_image(image, h, fill: float = 0.0, sampling: str = "bilinear"):
    """Warp an image by a homography on normalized coordinates.

    The output at pixel ``p`` carries the input at ``H^{-1}(p)``, so image
    content moves *forward* by ``H``: ``out(H(q)) == image(q)``.

    Returns ``(warped, valid)`` where ``valid`` marks output pixels whose
    source sample stayed inside the input rectangle.  Raises
    :class:`NonInvertibleHomographyError` for singular matrices.
    """
    img = as_image(image)
    hh, ww = img.shape[:2]
    if hh < 2 or ww < 2:
        raise ValueError("image must be at least 2 x 2")
    inv = invert_homography(h)

    gx, gy = np.meshgrid(np.arange(ww, dtype=np.float64), np.arange(hh, dtype=np.float64))
    nx = 2.0 * gx / (ww - 1.0) - 1.0
    ny = 2.0 * gy / (hh - 1.0) - 1.0

    denom = inv[2, 0] * nx + inv[2, 1] * ny + inv[2, 2]
    finite = np.abs(denom) >= 1e-12
    safe = np.where(finite, denom, 1.0)
    sx = (inv[0, 0] * nx + inv[0, 1] * ny + inv[0, 2]) / safe
    sy = (inv[1, 0] * nx + inv[1, 1] * ny + inv[1, 2]) / safe

    px = (sx + 1.0) * (ww - 1.0) / 2.0
    py = (sy + 1.0) * (hh - 1.0) / 2.0
    px = np.where(finite, px, -1e9)
    py = np.where(finite, py, -1e9)

    if sampling == "bilinear":
        warped, valid = bilinear_sample(img, px, py, fill=fill)
    elif sampling == "nearest":
        warped, valid = nearest_sample(img, px, py, fill=fill)
    else:
        raise ValueError(f"unknown sampling mode {sampling!r}")
    return warped, valid & finite
