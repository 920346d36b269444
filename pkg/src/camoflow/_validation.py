"""Input validation helpers shared by the functional core and estimators."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def as_points(points, name: str = "points") -> np.ndarray:
    """Coerce to a float64 ``(N, 2)`` array of finite planar points."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1 and pts.shape == (2,):
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"{name} must have shape (N, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{name} contains non-finite values")
    return pts


def as_weights(weights, n: int, name: str = "weights") -> np.ndarray:
    """Coerce to a float64 ``(n,)`` vector of finite weights in ``[0, 1]``."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{name} contains non-finite values")
    if w.min() < 0.0 or w.max() > 1.0:
        raise ValueError(f"{name} must lie in [0, 1]")
    return w


def as_homography(h, name: str = "homography") -> np.ndarray:
    """Coerce to a finite float64 ``(3, 3)`` matrix."""
    m = np.asarray(h, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"{name} must have shape (3, 3), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite values")
    return m


def as_image(image, name: str = "image") -> np.ndarray:
    """Coerce to float64 ``(H, W)`` or ``(H, W, C)`` with values in [0, 1].

    Integer dtypes are rescaled from their full range; float inputs are
    clipped into the unit interval.
    """
    img = np.asarray(image)
    if img.ndim not in (2, 3):
        raise ValueError(f"{name} must be 2-D or 3-D, got ndim={img.ndim}")
    if img.ndim == 3 and img.shape[2] not in (1, 3, 4):
        raise ValueError(f"{name} has an unsupported channel count {img.shape[2]}")
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        img = img.astype(np.float64) / float(info.max)
    else:
        img = img.astype(np.float64)
        if not np.all(np.isfinite(img)):
            raise ValueError(f"{name} contains non-finite values")
    return np.clip(img, 0.0, 1.0)


def as_flow(flow, name: str = "flow") -> np.ndarray:
    """Coerce to a finite float64 ``(H, W, 2)`` displacement field."""
    f = np.asarray(flow, dtype=np.float64)
    if f.ndim != 3 or f.shape[2] != 2:
        raise ValueError(f"{name} must have shape (H, W, 2), got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    return f


def as_mask(mask, name: str = "mask") -> np.ndarray:
    """Coerce to a boolean ``(H, W)`` array."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={m.ndim}")
    return m.astype(bool)


def check_same_shape(a: np.ndarray, b: np.ndarray, names: str = "inputs") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{names} must share a shape, got {a.shape} vs {b.shape}")


def check_odd_window(window: int) -> int:
    w = int(window)
    if w < 1 or w % 2 == 0:
        raise ValueError(f"window must be an odd integer >= 1, got {window}")
    return w


def check_positive(value, name: str):
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value!r}")
    return value


def check_fraction(value, name: str):
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")
    return value
