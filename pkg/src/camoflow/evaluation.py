"""Segmentation quality metrics and motion-aware aggregation.

Per-frame scores follow the standard video-segmentation pair:

* **region similarity** — intersection over union of the masks;
* **contour accuracy** — an F-measure over boundary pixels matched within
  a small distance tolerance.

For box-level ground truth the mask is reduced to its minimal enclosing
box and compared by box IoU.  Sparse annotations (keyframe boxes with a
motion label) are densified by linear interpolation, and aggregation
excludes frames labelled static — an object that does not move cannot be
found by motion, so those frames say nothing about the method.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from os import PathLike

import numpy as np
from scipy import ndimage

from ._validation import as_mask

#: Valid motion labels for annotation rows.
MOTION_LABELS = ("locomotion", "deformation", "static")

#: Aggregation rules for the combined moving-frame score.
AGGREGATION_RULES = ("pooled", "mean_of_means")

_BOX_3X3 = np.ones((3, 3), dtype=bool)


# ---------------------------------------------------------------------------
# Boxes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with exclusive maxima: pixels ``[min, max)``.

    A box with no extent along either axis is *empty*; the all-zero box is
    the canonical empty value.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def is_empty(self) -> bool:
        return self.x_max <= self.x_min or self.y_max <= self.y_min

    @property
    def area(self) -> float:
        if self.is_empty:
            return 0.0
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


EMPTY_BOX = BoundingBox(0.0, 0.0, 0.0, 0.0)


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes.

    Two empty boxes agree perfectly (1.0); an empty box against a
    non-empty one scores 0.0.
    """
    if a.is_empty and b.is_empty:
        return 1.0
    if a.is_empty or b.is_empty:
        return 0.0
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def min_enclosing_box(mask) -> BoundingBox:
    """Smallest box covering all foreground pixels (empty mask -> empty box)."""
    m = as_mask(mask)
    if not m.any():
        return EMPTY_BOX
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    return BoundingBox(
        x_min=float(cols[0]),
        y_min=float(rows[0]),
        x_max=float(cols[-1] + 1),
        y_max=float(rows[-1] + 1),
    )


def mask_box_iou(pred_mask, gt_box: BoundingBox) -> float:
    """Box IoU between a mask's enclosing box and a ground-truth box."""
    return box_iou(min_enclosing_box(pred_mask), gt_box)


def interpolate_boxes(
    keyframes: list[tuple[int, BoundingBox]], n_frames: int
) -> list[BoundingBox]:
    """Densify sparse keyframe boxes by per-coordinate linear interpolation.

    Frames before the first (after the last) keyframe clamp to it.
    Keyframe indices must be strictly increasing.
    """
    if not keyframes:
        raise ValueError("need at least one keyframe")
    indices = [k for k, _ in keyframes]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError(f"keyframe indices must be strictly increasing, got {indices}")

    boxes: list[BoundingBox] = []
    for frame in range(n_frames):
        if frame <= indices[0]:
            boxes.append(keyframes[0][1])
            continue
        if frame >= indices[-1]:
            boxes.append(keyframes[-1][1])
            continue
        right = next(i for i, k in enumerate(indices) if k >= frame)
        left = right - 1
        k0, b0 = keyframes[left]
        k1, b1 = keyframes[right]
        s = (frame - k0) / (k1 - k0)
        boxes.append(
            BoundingBox(
                x_min=(1.0 - s) * b0.x_min + s * b1.x_min,
                y_min=(1.0 - s) * b0.y_min + s * b1.y_min,
                x_max=(1.0 - s) * b0.x_max + s * b1.x_max,
                y_max=(1.0 - s) * b0.y_max + s * b1.y_max,
            )
        )
    return boxes


def nearest_labels(
    keyframes: list[tuple[int, str]], n_frames: int
) -> list[str]:
    """Assign each frame the label of its nearest keyframe (ties go left)."""
    if not keyframes:
        raise ValueError("need at least one labelled keyframe")
    indices = [k for k, _ in keyframes]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError(f"keyframe indices must be strictly increasing, got {indices}")
    labels = []
    for frame in range(n_frames):
        distances = [abs(frame - k) for k in indices]
        labels.append(keyframes[int(np.argmin(distances))][1])
    return labels


# ---------------------------------------------------------------------------
# Mask metrics
# ---------------------------------------------------------------------------

def region_similarity(pred, gt) -> float:
    """Jaccard index of two masks; two empty masks agree perfectly."""
    p = as_mask(pred, "pred")
    g = as_mask(gt, "gt")
    if p.shape != g.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {g.shape}")
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def boundary_mask(mask) -> np.ndarray:
    """Foreground pixels with at least one 8-connected background neighbour.

    The outside of the image counts as background, so foreground touching
    the border is boundary.
    """
    m = as_mask(mask)
    if not m.any():
        return np.zeros_like(m)
    interior = ndimage.binary_erosion(m, structure=_BOX_3X3, border_value=0)
    return m & ~interior


def default_contour_tolerance(shape: tuple[int, int]) -> int:
    """Boundary match radius: 0.8% of the image diagonal, rounded up."""
    h, w = shape
    return int(np.ceil(0.008 * float(np.hypot(h, w))))


def contour_accuracy(pred, gt, tolerance: float | None = None) -> float:
    """Boundary F-measure with a distance tolerance.

    Precision is the fraction of predicted boundary pixels within
    ``tolerance`` of the ground-truth boundary; recall is the converse.
    Two empty masks score 1.0, one empty mask scores 0.0.
    """
    p = as_mask(pred, "pred")
    g = as_mask(gt, "gt")
    if p.shape != g.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {g.shape}")
    if not p.any() and not g.any():
        return 1.0
    if not p.any() or not g.any():
        return 0.0
    if tolerance is None:
        tolerance = default_contour_tolerance(p.shape)

    pb = boundary_mask(p)
    gb = boundary_mask(g)
    # Distance from every pixel to the nearest boundary pixel of the other mask.
    dist_to_g = ndimage.distance_transform_edt(~gb)
    dist_to_p = ndimage.distance_transform_edt(~pb)
    precision = float((dist_to_g[pb] <= tolerance).mean())
    recall = float((dist_to_p[gb] <= tolerance).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass
class MotionAggregate:
    """Aggregate of one per-frame metric over the moving frames.

    ``mean`` combines locomotion and deformation frames (static frames are
    excluded); ``recall`` is the fraction of those frames scoring above
    0.5.  All statistics are ``None`` when every frame is static.
    """

    mean: float | None
    recall: float | None
    locomotion: float | None
    deformation: float | None
    n_locomotion: int
    n_deformation: int
    n_static: int

    @property
    def all_static(self) -> bool:
        return self.n_locomotion + self.n_deformation == 0

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "recall": self.recall,
            "locomotion": self.locomotion,
            "deformation": self.deformation,
            "n_locomotion": self.n_locomotion,
            "n_deformation": self.n_deformation,
            "n_static": self.n_static,
            "all_static": self.all_static,
        }


def aggregate_scores(scores, labels, rule: str = "pooled") -> MotionAggregate:
    """Combine per-frame scores according to their motion labels.

    ``rule = "pooled"`` averages every moving frame with equal weight;
    ``rule = "mean_of_means"`` averages the per-category means instead.
    """
    values = np.asarray(scores, dtype=np.float64)
    labels = list(labels)
    if values.shape != (len(labels),):
        raise ValueError(
            f"need one label per score, got {values.shape[0]} scores "
            f"and {len(labels)} labels"
        )
    bad = sorted(set(labels) - set(MOTION_LABELS))
    if bad:
        raise ValueError(f"unknown motion labels {bad}, expected {MOTION_LABELS}")
    if rule not in AGGREGATION_RULES:
        raise ValueError(f"unknown aggregation rule {rule!r}")

    loco = values[[l == "locomotion" for l in labels]]
    deform = values[[l == "deformation" for l in labels]]
    moving = np.concatenate([loco, deform])
    n_static = sum(l == "static" for l in labels)

    if moving.size == 0:
        return MotionAggregate(
            mean=None,
            recall=None,
            locomotion=None,
            deformation=None,
            n_locomotion=0,
            n_deformation=0,
            n_static=n_static,
        )

    loco_mean = float(loco.mean()) if loco.size else None
    deform_mean = float(deform.mean()) if deform.size else None
    if rule == "pooled":
        mean = float(moving.mean())
    else:
        present = [m for m in (loco_mean, deform_mean) if m is not None]
        mean = float(np.mean(present))
    return MotionAggregate(
        mean=mean,
        recall=float((moving > 0.5).mean()),
        locomotion=loco_mean,
        deformation=deform_mean,
        n_locomotion=int(loco.size),
        n_deformation=int(deform.size),
        n_static=n_static,
    )


@dataclass
class EvalReport:
    """Per-frame scores plus their motion-aware aggregates."""

    frames: list[dict]
    region: MotionAggregate | None
    contour: MotionAggregate | None
    box: MotionAggregate | None

    @property
    def all_static(self) -> bool:
        present = [a for a in (self.region, self.contour, self.box) if a is not None]
        return bool(present) and all(a.all_static for a in present)

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "region": self.region.to_dict() if self.region else None,
            "contour": self.contour.to_dict() if self.contour else None,
            "box": self.box.to_dict() if self.box else None,
            "all_static": self.all_static,
        }


def evaluate_masks(
    pred_masks,
    gt_masks=None,
    gt_boxes: list[BoundingBox] | None = None,
    labels: list[str] | None = None,
    tolerance: float | None = None,
    rule: str = "pooled",
) -> EvalReport:
    """Score predicted masks against pixel and/or box ground truth.

    ``labels`` defaults to treating every frame as locomotion (i.e. all
    frames count).  Lengths of all provided sequences must match.
    """
    preds = [as_mask(m, f"pred_masks[{i}]") for i, m in enumerate(pred_masks)]
    n = len(preds)
    if gt_masks is None and gt_boxes is None:
        raise ValueError("need pixel masks or boxes to evaluate against")
    if gt_masks is not None and len(gt_masks) != n:
        raise ValueError(f"{len(gt_masks)} GT masks for {n} predictions")
    if gt_boxes is not None and len(gt_boxes) != n:
        raise ValueError(f"{len(gt_boxes)} GT boxes for {n} predictions")
    if labels is None:
        labels = ["locomotion"] * n
    if len(labels) != n:
        raise ValueError(f"{len(labels)} labels for {n} predictions")

    frames = []
    region_scores, contour_scores, box_scores = [], [], []
    for i in range(n):
        row: dict = {"frame": i, "label": labels[i]}
        if gt_masks is not None:
            row["region"] = region_similarity(preds[i], gt_masks[i])
            row["contour"] = contour_accuracy(preds[i], gt_masks[i], tolerance)
            region_scores.append(row["region"])
            contour_scores.append(row["contour"])
        if gt_boxes is not None:
            row["box"] = mask_box_iou(preds[i], gt_boxes[i])
            box_scores.append(row["box"])
        frames.append(row)

    return EvalReport(
        frames=frames,
        region=aggregate_scores(region_scores, labels, rule) if region_scores else None,
        contour=aggregate_scores(contour_scores, labels, rule) if contour_scores else None,
        box=aggregate_scores(box_scores, labels, rule) if box_scores else None,
    )


# ---------------------------------------------------------------------------
# Annotations
# ---------------------------------------------------------------------------

def read_annotations(path: str | PathLike) -> list[tuple[int, BoundingBox, str]]:
    """Parse a keyframe annotation CSV.

    Rows are ``frame,x_min,y_min,x_max,y_max,label`` with an optional
    header; ``label`` is one of ``locomotion``, ``deformation``,
    ``static``.  Frame indices must be strictly increasing.
    """
    rows: list[tuple[int, BoundingBox, str]] = []
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if lineno == 1 and not record[0].strip().lstrip("-").isdigit():
                continue  # header
            if len(record) != 6:
                raise ValueError(
                    f"{path}:{lineno}: expected 6 fields "
                    f"(frame,x_min,y_min,x_max,y_max,label), got {len(record)}"
                )
            try:
                frame = int(record[0])
                coords = [float(v) for v in record[1:5]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            label = record[5].strip().lower()
            if label not in MOTION_LABELS:
                raise ValueError(
                    f"{path}:{lineno}: unknown label {label!r}, "
                    f"expected one of {MOTION_LABELS}"
                )
            rows.append((frame, BoundingBox(*coords), label))
    if not rows:
        raise ValueError(f"{path}: no annotation rows")
    indices = [r[0] for r in rows]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError(f"{path}: frame indices must be strictly increasing")
    return rows


def densify_annotations(
    rows: list[tuple[int, BoundingBox, str]], n_frames: int
) -> tuple[list[BoundingBox], list[str]]:
    """Interpolate keyframe boxes and spread labels over ``n_frames``."""
    boxes = interpolate_boxes([(f, b) for f, b, _ in rows], n_frames)
    labels = nearest_labels([(f, l) for f, _, l in rows], n_frames)
    return boxes, labels
