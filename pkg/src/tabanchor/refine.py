"""Snap the horizontal extent of row detections to the ink found in the page.

A probe strip ``[x, x + probe_width) x band`` qualifies as ink when it holds
at least ``black_pixel_threshold`` ink pixels, where ``band`` is the
detection's vertical extent. Heights are never changed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import PageMismatch
from .geometry import Box
from .ingest import BoxClass, Detection, GrayImage


class RefineMode(str, Enum):
    PAPER_FAITHFUL = "paper"
    GAP_LIMITED = "gap"


@dataclass(frozen=True)
class RefineParams:
    intensity_threshold: int = 128
    black_pixel_threshold: int = 2
    probe_width: int = 1
    mode: RefineMode = RefineMode.PAPER_FAITHFUL
    gap_limit: int = 50
    refine_columns: bool = False
    clamp: Optional[Box] = None

    def __post_init__(self):
        if self.black_pixel_threshold < 1:
            raise ValueError("black_pixel_threshold must be >= 1")
        if self.probe_width < 1:
            raise ValueError("probe_width must be >= 1")
        if self.gap_limit < 1:
            raise ValueError("gap_limit must be >= 1")
        if not 0 <= self.intensity_threshold <= 256:
            raise ValueError("intensity_threshold must lie in 0..256")
        object.__setattr__(self, "mode", RefineMode(self.mode))


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Ink mask of shape ``(height, width)``; True marks a black pixel."""

    ink: np.ndarray

    @property
    def width(self):
        return self.ink.shape[1]

    @property
    def height(self):
        return self.ink.shape[0]

    def transposed(self):
        return BinaryImage(np.ascontiguousarray(self.ink.T))


def binarize(image: GrayImage, intensity_threshold=128) -> BinaryImage:
    return BinaryImage(image.pixels < intensity_threshold)


def otsu_threshold(image: GrayImage) -> int:
    """Intensity threshold from Otsu's method, usable with the strict ``<`` rule."""
    from skimage.filters import threshold_otsu

    if image.pixels.min() == image.pixels.max():
        return 128
    return int(math.floor(threshold_otsu(image.pixels))) + 1


def _band_rows(binary, box):
    y0 = max(0, int(math.floor(box.y_min)))
    y1 = min(binary.height, int(math.ceil(box.y_max)))
    return y0, y1


def column_ink_count(binary: BinaryImage, x, band, probe_width=1) -> int:
    """Ink pixels in the strip ``[x, x + probe_width) x [y_min, y_max)``, clipped to the image."""
    y0 = max(0, int(math.floor(band[0])))
    y1 = min(binary.height, int(math.ceil(band[1])))
    x0 = max(0, x)
    x1 = min(binary.width, x + probe_width)
    if y1 <= y0 or x1 <= x0:
        return 0
    return int(binary.ink[y0:y1, x0:x1].sum())


def qualifying_columns(binary: BinaryImage, band, params: RefineParams) -> np.ndarray:
    """Boolean per image column: does the probe strip starting there qualify?"""
    y0 = max(0, int(math.floor(band[0])))
    y1 = min(binary.height, int(math.ceil(band[1])))
    if y1 <= y0:
        return np.zeros(binary.width, dtype=bool)
    per_col = binary.ink[y0:y1].sum(axis=0, dtype=np.int64)
    csum = np.concatenate(([0], np.cumsum(per_col)))
    xs = np.arange(binary.width)
    strip = csum[np.minimum(xs + params.probe_width, binary.width)] - csum[xs]
    return strip >= params.black_pixel_threshold


def _scan_range(binary, params):
    lo, hi = 0, binary.width
    if params.clamp is not None:
        lo = max(lo, int(math.floor(params.clamp.x_min)))
        hi = min(hi, int(math.ceil(params.clamp.x_max)))
    return lo, hi


def _gap_limited_hits(qual, box, lo, hi, gap_limit):
    a = min(max(int(math.floor(box.x_min)), lo), hi)
    b = min(max(int(math.ceil(box.x_max)), lo), hi)
    hits = [int(x) for x in np.flatnonzero(qual[a:b]) + a]
    gap, x = 0, b
    while x < hi and gap < gap_limit:
        if qual[x]:
            hits.append(x)
            gap = 0
        else:
            gap += 1
        x += 1
    gap, x = 0, a - 1
    while x >= lo and gap < gap_limit:
        if qual[x]:
            hits.append(x)
            gap = 0
        else:
            gap += 1
        x -= 1
    return hits


def refine_row_box(binary: BinaryImage, box: Box, params: RefineParams = RefineParams()) -> Box:
    """Move the left/right edges of ``box`` to the outermost qualifying ink columns.

    The default full-scan mode ("paper") scans the row band to both image borders;
    gap-limited mode walks outward from the box edges and gives up after
    ``gap_limit`` consecutive empty columns. Degenerate inputs and bands
    without ink return ``box`` as given.
    """
    y0, y1 = _band_rows(binary, box)
    if y1 <= y0:
        return box
    lo, hi = _scan_range(binary, params)
    if hi <= lo:
        return box
    qual = qualifying_columns(binary, (box.y_min, box.y_max), params)
    if params.mode is RefineMode.PAPER_FAITHFUL:
        hits = np.flatnonzero(qual[lo:hi]) + lo
        if hits.size == 0:
            return box
        left, right = int(hits[0]), int(hits[-1])
    else:
        hits = _gap_limited_hits(qual, box, lo, hi, params.gap_limit)
        if not hits:
            return box
        left, right = min(hits), max(hits)
    # y is left exactly as given; x already lies inside [0, width]
    x_max = min(right + params.probe_width, binary.width)
    return box.with_x(float(left), float(x_max))


def refine_column_box(binary: BinaryImage, box: Box, params: RefineParams = RefineParams(), transposed=None) -> Box:
    """Transposed procedure: snaps the vertical extent of a column box.

    ``transposed`` may carry ``binary.transposed()`` precomputed.
    """
    clamp = params.clamp.transposed() if params.clamp is not None else None
    tbinary = transposed if transposed is not None else binary.transposed()
    return refine_row_box(tbinary, box.transposed(), replace(params, clamp=clamp)).transposed()


def refine_detections(image: GrayImage, detections, params: RefineParams = RefineParams(), page_id=None, jobs=1):
    """Refine every Row detection of one page; other detections pass through.

    Output order and scores match the input.
    """
    detections = list(detections)
    if page_id is None and detections:
        page_id = detections[0].page_id
    for d in detections:
        if d.page_id != page_id:
            raise PageMismatch(f"detection for page {d.page_id!r} passed with page {page_id!r}")
    binary = binarize(image, params.intensity_threshold)
    tbinary = binary.transposed() if params.refine_columns else None

    def one(d: Detection):
        if d.cls is BoxClass.ROW:
            return Detection(d.page_id, d.cls, refine_row_box(binary, d.box, params), d.score)
        if params.refine_columns:
            return Detection(d.page_id, d.cls, refine_column_box(binary, d.box, params, tbinary), d.score)
        return d

    if jobs > 1 and len(detections) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, detections))
    return [one(d) for d in detections]


def audit_record(before: Detection, after: Detection):
    return {
        "page_id": before.page_id,
        "class": before.cls.value,
        "before": before.box.as_list(),
        "after": after.box.as_list(),
        "delta_x_min": after.box.x_min - before.box.x_min,
        "delta_x_max": after.box.x_max - before.box.x_max,
    }
