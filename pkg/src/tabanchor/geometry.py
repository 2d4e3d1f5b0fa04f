"""Axis-aligned boxes and width/height shapes.

Coordinates are real-valued pixels with the origin at the top-left corner,
x growing rightward and y downward. A pixel column ``x`` covers ``[x, x+1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates: {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted box: {coords}")

    @property
    def width(self):
        return self.x_max - self.x_min

    @property
    def height(self):
        return self.y_max - self.y_min

    @property
    def area(self):
        return self.width * self.height

    def as_list(self):
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def scaled(self, factor):
        return Box(self.x_min * factor, self.y_min * factor, self.x_max * factor, self.y_max * factor)

    def with_x(self, x_min, x_max):
        return Box(x_min, self.y_min, x_max, self.y_max)

    def transposed(self):
        return Box(self.y_min, self.x_min, self.y_max, self.x_max)

    def shape(self):
        return Shape(self.width, self.height)


@dataclass(frozen=True)
class Shape:
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"shape dimensions must be positive, got {self.width}x{self.height}")
        if not (math.isfinite(self.width) and math.isfinite(self.height)):
            raise ValueError("shape dimensions must be finite")

    def as_list(self):
        return [self.width, self.height]


def intersection_area(a: Box, b: Box) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: Box, b: Box) -> float:
    """Overlap area over union area; 0 when the union is empty."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def iou_matrix(gt, preds) -> np.ndarray:
    """Pairwise IoU between two box lists, shape ``(len(gt), len(preds))``."""
    if not gt or not preds:
        return np.zeros((len(gt), len(preds)))
    a = np.array([b.as_list() for b in gt], dtype=float)
    b = np.array([p.as_list() for p in preds], dtype=float)
    w = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    h = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(w, 0, None) * np.clip(h, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def shape_iou(a: Shape, b: Shape) -> float:
    """IoU of two shapes placed on a common center."""
    inter = min(a.width, b.width) * min(a.height, b.height)
    return inter / (a.width * a.height + b.width * b.height - inter)


def shape_distance(a: Shape, b: Shape) -> float:
    return 1.0 - shape_iou(a, b)


def shape_iou_matrix(samples, centroids) -> np.ndarray:
    """Vectorised :func:`shape_iou` for ``(n, 2)`` and ``(k, 2)`` width/height arrays."""
    s = np.asarray(samples, dtype=float)
    c = np.asarray(centroids, dtype=float)
    inter = np.minimum(s[:, None, 0], c[None, :, 0]) * np.minimum(s[:, None, 1], c[None, :, 1])
    union = (s[:, 0] * s[:, 1])[:, None] + (c[:, 0] * c[:, 1])[None, :] - inter
    return inter / union


def clip_box(b: Box, page_width, page_height) -> Box:
    def clamp(v, hi):
        return min(max(v, 0.0), float(hi))

    return Box(
        clamp(b.x_min, page_width),
        clamp(b.y_min, page_height),
        clamp(b.x_max, page_width),
        clamp(b.y_max, page_height),
    )


def union_area(boxes) -> float:
    """Exact area covered by the union of ``boxes`` (coordinate compression)."""
    boxes = [b for b in boxes if b.area > 0]
    if not boxes:
        return 0.0
    xs = sorted({v for b in boxes for v in (b.x_min, b.x_max)})
    ys = sorted({v for b in boxes for v in (b.y_min, b.y_max)})
    xi = {v: i for i, v in enumerate(xs)}
    yi = {v: i for i, v in enumerate(ys)}
    covered = np.zeros((len(ys) - 1, len(xs) - 1), dtype=bool)
    for b in boxes:
        covered[yi[b.y_min]:yi[b.y_max], xi[b.x_min]:xi[b.x_max]] = True
    cell = np.outer(np.diff(ys), np.diff(xs))
    return float(cell[covered].sum())


def area_inside_union(box: Box, others) -> float:
    """Area of ``box`` covered by the union of ``others``."""
    parts = []
    for o in others:
        x0, y0 = max(box.x_min, o.x_min), max(box.y_min, o.y_min)
        x1, y1 = min(box.x_max, o.x_max), min(box.y_max, o.y_max)
        if x1 > x0 and y1 > y0:
            parts.append(Box(x0, y0, x1, y1))
    return union_area(parts)
