"""Deterministic synthetic table pages with exact ground truth.

Pseudo-text is drawn as filled rectangles ("words") and 2-pixel dash runs,
so the ink extent of every row and column is known exactly.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, LayoutOverflow
from .geometry import Box
from .ingest import BoxClass, Dataset, Detection, GrayImage, PageRecord, dumps_dataset, dumps_detections, write_pgm
from .rng import XorShift64Star, derive_seed


@dataclass(frozen=True)
class TableLayoutSpec:
    n_rows: int = 5
    n_cols: int = 3
    page_width: int = 600
    page_height: int = 400
    cell_pad: int = 6
    row_gap: int = 8
    col_gap: int = 24
    line_height: int = 12
    margin: int = 20
    ink_intensity: int = 0
    draw_rulings: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise LayoutOverflow("table needs at least one row and one column")
        if self.line_height < 2:
            raise LayoutOverflow("line_height must be at least 2 pixels")
        if not 0 <= self.ink_intensity <= 255:
            raise ConfigError("ink_intensity must lie in 0..255")


@dataclass(frozen=True)
class PerturbSpec:
    width_jitter_frac: float = 0.15
    drop_prob: float = 0.0
    include_columns: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.width_jitter_frac < 0:
            raise ConfigError("width_jitter_frac must be >= 0")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ConfigError("drop_prob must lie in [0, 1]")


def _from_dict(cls, data, what):
    if not isinstance(data, dict):
        raise ConfigError(f"{what} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {what} keys: {', '.join(unknown)}")
    return cls(**data)


def _grid(spec: TableLayoutSpec):
    """Cell origins: x offsets of columns, y offsets of row bands, cell width, band height."""
    band_h = spec.line_height + 2 * spec.cell_pad
    cell_w = (spec.page_width - 2 * spec.margin - (spec.n_cols - 1) * spec.col_gap) // spec.n_cols
    text_w = cell_w - 2 * spec.cell_pad
    total_h = spec.n_rows * band_h + (spec.n_rows - 1) * spec.row_gap
    if text_w < 4:
        raise LayoutOverflow(
            f"{spec.n_cols} columns do not fit a {spec.page_width}px wide page (text width {text_w}px)"
        )
    if total_h > spec.page_height - 2 * spec.margin:
        raise LayoutOverflow(
            f"{spec.n_rows} rows need {total_h}px but the page leaves {spec.page_height - 2 * spec.margin}px"
        )
    xs = [spec.margin + c * (cell_w + spec.col_gap) for c in range(spec.n_cols)]
    ys = [spec.margin + r * (band_h + spec.row_gap) for r in range(spec.n_rows)]
    return xs, ys, cell_w, band_h


def _draw_cell_text(ink, rng, left, top, avail, line_height, align_right):
    text_len = rng.randint(max(4, math.ceil(0.3 * avail)), avail)
    start = left + (avail - text_len if align_right else 0)
    end = start + text_len
    baseline = top + line_height
    x = start
    while x < end:
        word_w = min(rng.randint(3, 24), end - x)
        if rng.random() < 0.15:
            # dash run, vertically centred
            y0 = top + (line_height - 2) // 2
            ink[y0:y0 + 2, x:x + word_w] = True
        else:
            h = rng.randint(max(2, line_height // 2), line_height)
            ink[baseline - h:baseline, x:x + word_w] = True
        x += word_w + rng.randint(2, 6)
        if end - x < 2:
            break


def _ink_bbox(mask, x_off=0, y_off=0):
    ys = np.flatnonzero(mask.any(axis=1))
    xs = np.flatnonzero(mask.any(axis=0))
    return Box(float(x_off + xs[0]), float(y_off + ys[0]), float(x_off + xs[-1] + 1), float(y_off + ys[-1] + 1))


def generate_page(spec: TableLayoutSpec, page_id="page"):
    """Render one table page; returns ``(GrayImage, PageRecord)``.

    Ground-truth boxes are the tight ink extents of each row band and each
    column band, in half-open pixel coordinates.
    """
    xs, ys, cell_w, band_h = _grid(spec)
    rng = XorShift64Star(spec.seed)
    ink = np.zeros((spec.page_height, spec.page_width), dtype=bool)
    align_right = [rng.random() < 0.3 for _ in range(spec.n_cols)]
    for y in ys:
        for c, x in enumerate(xs):
            _draw_cell_text(
                ink, rng, x + spec.cell_pad, y + spec.cell_pad, cell_w - 2 * spec.cell_pad, spec.line_height, align_right[c]
            )

    rows = tuple(_ink_bbox(ink[y:y + band_h], 0, y) for y in ys)
    table_top, table_bottom = ys[0], ys[-1] + band_h
    columns = tuple(_ink_bbox(ink[table_top:table_bottom, x:x + cell_w], x, table_top) for x in xs)

    pixels = np.full((spec.page_height, spec.page_width), 255, dtype=np.uint8)
    pixels[ink] = spec.ink_intensity
    if spec.draw_rulings:
        # horizontal rules only, drawn in the gaps so no row band gains ink
        x0, x1 = xs[0], xs[-1] + cell_w
        rule_ys = [y - 1 - spec.row_gap // 2 for y in ys[1:]]
        rule_ys += [ys[0] - 1 - spec.row_gap // 2, table_bottom + spec.row_gap // 2]
        for ry in rule_ys:
            if 0 <= ry < spec.page_height:
                pixels[ry, x0:x1] = spec.ink_intensity
    record = PageRecord(page_id, spec.page_width, spec.page_height, rows, columns)
    return GrayImage(pixels), record


def perturb_detections(record: PageRecord, spec: PerturbSpec):
    """Jitter the horizontal edges of every ground-truth row box.

    Each edge moves by uniform noise of half-width ``width_jitter_frac * width``;
    heights are never touched. Column boxes pass through unchanged when
    ``include_columns`` is set.
    """
    rng = XorShift64Star(spec.seed)
    dets = []
    for box in record.rows:
        dropped = rng.random() < spec.drop_prob
        half = spec.width_jitter_frac * box.width
        d0 = rng.uniform(-half, half)
        d1 = rng.uniform(-half, half)
        if dropped:
            continue
        x0 = min(max(box.x_min + d0, 0.0), float(record.page_width))
        x1 = min(max(box.x_max + d1, 0.0), float(record.page_width))
        if x0 > x1:
            x0 = x1 = (box.x_min + box.x_max) / 2
        shift = abs(x0 - box.x_min) + abs(x1 - box.x_max)
        score = 1.0 - shift / (2 * box.width) if box.width > 0 else 1.0
        dets.append(Detection(record.page_id, BoxClass.ROW, box.with_x(x0, x1), min(max(score, 0.0), 1.0)))
    if spec.include_columns:
        dets.extend(Detection(record.page_id, BoxClass.COLUMN, b, 1.0) for b in record.columns)
    return dets


@dataclass(frozen=True)
class SynthSpec:
    """A batch of pages sharing one layout; per-page seeds derive from ``seed``."""

    n_pages: int = 10
    seed: int = 0
    layout: TableLayoutSpec = TableLayoutSpec()
    perturb: PerturbSpec = PerturbSpec()

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("synth spec must be a JSON object")
        data = dict(data)
        known = {"n_pages", "seed", "layout", "perturb"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown synth spec keys: {', '.join(unknown)}")
        layout = _from_dict(TableLayoutSpec, data.pop("layout", {}), "layout")
        perturb = _from_dict(PerturbSpec, data.pop("perturb", {}), "perturb")
        n_pages = data.get("n_pages", 10)
        if not isinstance(n_pages, int) or n_pages < 1:
            raise ConfigError("n_pages must be a positive integer")
        return cls(n_pages=n_pages, seed=int(data.get("seed", 0)), layout=layout, perturb=perturb)

    def page_specs(self):
        """Yield ``(page_id, layout, perturb)`` with seeds ``derive_seed(seed, 2i)`` and ``2i+1``."""
        for i in range(self.n_pages):
            layout = TableLayoutSpec(**{**asdict(self.layout), "seed": derive_seed(self.seed, 2 * i)})
            perturb = PerturbSpec(**{**asdict(self.perturb), "seed": derive_seed(self.seed, 2 * i + 1)})
            yield f"page_{i:04d}", layout, perturb


def _one_page(item):
    page_id, layout, perturb = item
    image, record = generate_page(layout, page_id)
    record = PageRecord(
        record.page_id, record.page_width, record.page_height, record.rows, record.columns, f"images/{page_id}.pgm"
    )
    return page_id, image, record, perturb_detections(record, perturb)


def generate_batch(spec: SynthSpec, jobs=1):
    """Return ``(images, Dataset, detections)`` for every page of the batch."""
    items = list(spec.page_specs())
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_page, items))
    else:
        results = [_one_page(item) for item in items]
    images = {pid: image for pid, image, _, _ in results}
    dets = [d for _, _, _, page_dets in results for d in page_dets]
    return images, Dataset([record for _, _, record, _ in results]), dets


def write_synth_dir(spec: SynthSpec, out_dir, jobs=1):
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    images, dataset, dets = generate_batch(spec, jobs)
    for page_id, image in images.items():
        write_pgm(out / "images" / f"{page_id}.pgm", image)
    (out / "gt.jsonl").write_text(dumps_dataset(dataset), encoding="utf-8", newline="\n")
    (out / "dets.jsonl").write_text(dumps_detections(dets), encoding="utf-8", newline="\n")
    manifest = {
        "prng": "xorshift64* (12,25,27; 0x2545F4914F6CDD1D), seeded via splitmix64",
        "page_seed_rule": "layout: derive_seed(seed, 2*i); perturb: derive_seed(seed, 2*i+1)",
        "n_pages": spec.n_pages,
        "seed": spec.seed,
        "layout": asdict(spec.layout),
        "perturb": asdict(spec.perturb),
        "pages": [
            {"page_id": pid, "layout_seed": lay.seed, "perturb_seed": per.seed}
            for pid, lay, per in spec.page_specs()
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8", newline="\n")
    return dataset, dets
