"""Thin PNG helpers so the rest of the package deals only in float arrays."""

from __future__ import annotations

from os import PathLike

import numpy as np
from PIL import Image

from ._validation import as_image, as_mask


def read_image(path: str | PathLike) -> np.ndarray:
    """Load an image as float64 in ``[0, 1]``; RGB(A) stays multi-channel."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    return as_image(arr)


def write_image(image, path: str | PathLike) -> None:
    """Save a float image in ``[0, 1]`` as 8-bit PNG (round-half-to-even)."""
    img = as_image(image)
    data = np.rint(img * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)


def read_mask(path: str | PathLike) -> np.ndarray:
    """Load a binary mask: any channel above half intensity counts as on."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return arr > 127


def write_mask(mask, path: str | PathLike) -> None:
    """Save a boolean mask as an 8-bit PNG of 0s and 255s."""
    m = as_mask(mask)
    Image.fromarray(np.where(m, 255, 0).astype(np.uint8)).save(path)
