"""Optical flow I/O, resampling, and visualization.

Flow fields are ``(H, W, 2)`` arrays of per-pixel displacements in pixel
units; channel 0 is the horizontal component.  ``flow[y, x]`` points from
frame ``t`` to frame ``t+1``: the content at ``(x, y)`` in frame ``t``
reappears at ``(x + dx, y + dy)`` in frame ``t+1``.

The on-disk format is the Middlebury ``.flo`` layout: a little-endian
float32 magic number, two int32 dimensions, then row-major interleaved
float32 ``(dx, dy)`` pairs.
"""

from __future__ import annotations

import colorsys
import struct
from os import PathLike
from pathlib import Path

import numpy as np

from ._validation import as_flow, check_same_shape
from .errors import FlowFormatError
from .geometry import (
    Correspondences,
    bilinear_sample,
    normalized_grid,
    normalized_to_pixels,
    pixels_to_normalized,
)

#: Sanity sentinel written as the first four bytes of every ``.flo`` file.
FLO_MAGIC = 202021.25

#: Files claiming a side longer than this are rejected as corrupt.
MAX_FLO_DIM = 1 << 16


def read_flo(path: str | PathLike) -> np.ndarray:
    """Read a ``.flo`` file into a float32 ``(H, W, 2)`` array.

    Raises :class:`FlowFormatError` for a bad magic number, implausible
    dimensions, or a truncated payload.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12:
            raise FlowFormatError(f"{path}: truncated header ({len(header)} bytes)")
        magic, width, height = struct.unpack("<fii", header)
        if magic != FLO_MAGIC:
            raise FlowFormatError(f"{path}: bad magic number {magic!r}")
        if not (0 < width <= MAX_FLO_DIM and 0 < height <= MAX_FLO_DIM):
            raise FlowFormatError(f"{path}: implausible dimensions {width} x {height}")
        count = 2 * width * height
        data = np.fromfile(fh, dtype="<f4", count=count)
        if data.size != count:
            raise FlowFormatError(
                f"{path}: truncated payload ({data.size} of {count} floats)"
            )
    return data.reshape(height, width, 2)


def write_flo(flow, path: str | PathLike) -> None:
    """Write a flow field as ``.flo``; the field must be finite.

    Data is stored as float32, so a float32 input round-trips
    byte-identically.
    """
    f = as_flow(flow)
    height, width = f.shape[:2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, width, height))
        fh.write(f.astype("<f4").tobytes())


def flow_to_correspondences(flow, m: int = 64, n: int = 64) -> Correspondences:
    """Turn a dense flow field into grid correspondences.

    An ``m x n`` grid of normalized source points spans the frame; the flow
    is sampled bilinearly at each grid point and the displaced locations
    become the targets (also normalized, possibly outside ``[-1, 1]``).
    """
    f = as_flow(flow)
    height, width = f.shape[:2]
    src_norm = normalized_grid(width, height, m, n)
    src_px = normalized_to_pixels(src_norm, width, height)
    sampled, valid = bilinear_sample(f, src_px[:, 0], src_px[:, 1])
    if not np.all(valid):
        # Grid points lie inside the frame by construction.
        raise AssertionError("internal error: grid point sampled out of bounds")
    tgt_px = src_px + sampled
    tgt_norm = pixels_to_normalized(tgt_px, width, height)
    return Correspondences(src_norm, tgt_norm)


def warp_by_flow(next_frame, flow, fill: float = 0.0):
    """Pull frame ``t+1`` back onto frame ``t``'s pixel grid.

    ``out[y, x] = next_frame[y + dy, x + dx]`` with bilinear sampling.
    For consistent inputs this reconstructs frame ``t`` wherever the
    displaced sample stays inside the image; ``valid`` marks those pixels.
    """
    img = np.asarray(next_frame, dtype=np.float64)
    f = as_flow(flow)
    if img.shape[:2] != f.shape[:2]:
        raise ValueError(
            f"frame {img.shape[:2]} and flow {f.shape[:2]} dimensions differ"
        )
    height, width = f.shape[:2]
    gx, gy = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    return bilinear_sample(img, gx + f[:, :, 0], gy + f[:, :, 1], fill=fill)


def flow_to_color(flow, max_magnitude: float | None = None) -> np.ndarray:
    """Render a flow field with the standard direction-as-hue wheel.

    Hue encodes the flow direction, saturation the magnitude relative to
    ``max_magnitude`` (defaults to the field's own maximum), and value is
    one everywhere — zero flow renders white, opposite directions map to
    complementary hues.  Returns float RGB in ``[0, 1]``.
    """
    f = as_flow(flow)
    dx, dy = f[:, :, 0], f[:, :, 1]
    magnitude = np.hypot(dx, dy)
    if max_magnitude is None:
        max_magnitude = float(magnitude.max())
    if max_magnitude <= 0.0:
        return np.ones(f.shape[:2] + (3,))
    hue = np.mod(np.arctan2(dy, dx) / (2.0 * np.pi), 1.0)
    sat = np.clip(magnitude / max_magnitude, 0.0, 1.0)
    return _hsv_wheel(hue, sat)


def _hsv_wheel(hue: np.ndarray, sat: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB for value fixed at 1 (see ``colorsys`` for the
    scalar reference implementation)."""
    i = np.floor(hue * 6.0).astype(int) % 6
    frac = hue * 6.0 - np.floor(hue * 6.0)
    p = 1.0 - sat
    q = 1.0 - sat * frac
    t = 1.0 - sat * (1.0 - frac)
    one = np.ones_like(hue)
    lut = np.stack(
        [
            np.stack([one, t, p], axis=-1),
            np.stack([q, one, p], axis=-1),
            np.stack([p, one, t], axis=-1),
            np.stack([p, q, one], axis=-1),
            np.stack([t, p, one], axis=-1),
            np.stack([one, p, q], axis=-1),
        ],
        axis=0,
    )
    return np.take_along_axis(lut, i[None, ..., None], axis=0)[0]


def _scalar_flow_color(dx: float, dy: float, max_magnitude: float) -> tuple:
    """Reference single-pixel version of :func:`flow_to_color` (used in
    tests as an independent oracle against the vectorized path)."""
    magnitude = float(np.hypot(dx, dy))
    if max_magnitude <= 0.0:
        return (1.0, 1.0, 1.0)
    hue = (np.arctan2(dy, dx) / (2.0 * np.pi)) % 1.0
    sat = min(magnitude / max_magnitude, 1.0)
    return colorsys.hsv_to_rgb(hue, sat, 1.0)


def flow_consistency_error(frame_t, frame_t1, flow) -> np.ndarray:
    """Absolute photometric error of the flow's correspondence claim.

    Evaluates ``|frame_t(x) - frame_t1(x + flow(x))|`` per pixel (averaged
    over channels), zero where the displaced sample leaves the image.
    """
    a = np.asarray(frame_t, dtype=np.float64)
    warped, valid = warp_by_flow(frame_t1, flow)
    check_same_shape(a, np.asarray(warped), "frames")
    err = np.abs(a - warped)
    if err.ndim == 3:
        err = err.mean(axis=2)
    return np.where(valid, err, 0.0)
