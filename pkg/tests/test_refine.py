import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import scan_refine
from tabanchor.errors import PageMismatch
from tabanchor.geometry import Box, iou
from tabanchor.ingest import BoxClass, Detection, GrayImage
from tabanchor.refine import (
    RefineMode,
    RefineParams,
    audit_record,
    binarize,
    column_ink_count,
    otsu_threshold,
    qualifying_columns,
    refine_column_box,
    refine_detections,
    refine_row_box,
)

GAP = RefineParams(mode=RefineMode.GAP_LIMITED, gap_limit=50)


def refine_px(image, box, params=RefineParams()):
    return refine_row_box(binarize(image, params.intensity_threshold), Box(*box), params).as_list()


def oracle(image, box, params=RefineParams()):
    mode = "paper" if params.mode is RefineMode.PAPER_FAITHFUL else "gap"
    return list(
        scan_refine(
            image.pixels.tolist(), box, params.black_pixel_threshold, params.probe_width,
            params.intensity_threshold, mode, params.gap_limit,
        )
    )


class TestBinarize:
    def test_blank(self):
        assert not binarize(GrayImage(np.full((4, 5), 255, np.uint8))).ink.any()

    def test_black(self):
        assert binarize(GrayImage(np.zeros((4, 5), np.uint8))).ink.all()

    def test_strict_boundary(self):
        ink = binarize(GrayImage(np.array([[127, 128]], np.uint8)), 128).ink
        assert ink.tolist() == [[True, False]]

    def test_otsu_splits_bimodal(self):
        px = np.full((10, 10), 230, np.uint8)
        px[:, :3] = 20
        t = otsu_threshold(GrayImage(px))
        assert 20 < t <= 230
        assert binarize(GrayImage(px), t).ink.sum() == 30


class TestInkCount:
    def test_blank_strip(self, ink_page):
        assert column_ink_count(binarize(ink_page(50, 30, [])), 5, (10, 20)) == 0

    def test_full_strip(self, ink_page):
        assert column_ink_count(binarize(ink_page(50, 30, [(0, 49)])), 5, (10, 20)) == 10

    def test_clipped_at_border(self, ink_page):
        binary = binarize(ink_page(50, 30, [(0, 49)]))
        assert column_ink_count(binary, 48, (10, 20), probe_width=4) == 20
        assert column_ink_count(binary, 5, (25, 40)) == 0


class TestRowBox:
    def test_shrinks_whitespace(self, ink_page):
        page = ink_page(120, 30, [(20, 80)])
        assert refine_px(page, (10, 10, 95, 20)) == [20, 10, 81, 20]
        assert refine_px(page, (10, 10, 95, 20)) == oracle(page, (10, 10, 95, 20))

    def test_expands_overlooked(self, ink_page):
        page = ink_page(120, 30, [(20, 80)])
        assert refine_px(page, (30, 10, 60, 20)) == [20, 10, 81, 20]
        assert refine_px(page, (30, 10, 60, 20)) == oracle(page, (30, 10, 60, 20))

    def test_blank_band_unchanged(self, ink_page):
        page = ink_page(120, 30, [])
        assert refine_px(page, (10.5, 10, 95, 20)) == [10.5, 10, 95, 20]

    def test_probe_width_extends_right_edge(self, ink_page):
        page = ink_page(120, 30, [(20, 80)])
        params = RefineParams(probe_width=3)
        assert refine_px(page, (10, 10, 95, 20), params)[2] == 83

    def test_gap_mode_stops_at_gap(self, ink_page):
        page = ink_page(300, 30, [(20, 40), (200, 220)])
        assert refine_px(page, (15, 10, 45, 20), GAP) == [20, 10, 41, 20]
        assert refine_px(page, (15, 10, 45, 20)) == [20, 10, 221, 20]
        assert refine_px(page, (15, 10, 45, 20), GAP) == oracle(page, (15, 10, 45, 20), GAP)

    def test_single_noise_pixel_ignored(self, ink_page):
        page = ink_page(120, 30, [(20, 80)])
        page.pixels[15, 100] = 0
        assert refine_px(page, (10, 10, 95, 20))[2] == 81

    def test_clamp_limits_scan(self, ink_page):
        page = ink_page(300, 30, [(20, 40), (200, 220)])
        params = RefineParams(clamp=Box(0, 0, 150, 30))
        assert refine_px(page, (15, 10, 45, 20), params) == [20, 10, 41, 20]

    def test_fractional_y_kept(self, ink_page):
        page = ink_page(120, 30, [(20, 80)])
        assert refine_px(page, (10, 10.25, 95, 19.75)) == [20, 10.25, 81, 19.75]

    def test_column_transposed(self):
        px = np.full((100, 40), 255, np.uint8)
        px[20:70, 10:20] = 0
        out = refine_column_box(binarize(GrayImage(px)), Box(10, 5, 20, 90))
        assert out.as_list() == [10, 20, 20, 70]


bitmap_st = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s))


def make_case(rng):
    h, w = int(rng.integers(5, 40)), int(rng.integers(5, 80))
    px = np.full((h, w), 255, np.uint8)
    for _ in range(int(rng.integers(0, 6))):
        y0, x0 = int(rng.integers(0, h)), int(rng.integers(0, w))
        px[y0:y0 + int(rng.integers(1, 6)), x0:x0 + int(rng.integers(1, 20))] = rng.integers(0, 256)
    y0 = float(rng.uniform(0, h - 1))
    y1 = float(rng.uniform(y0 + 0.5, h))
    x0 = float(rng.uniform(-5, w))
    x1 = float(rng.uniform(x0, w + 5))
    return GrayImage(px), (x0, y0, x1, y1)


params_st = st.builds(
    RefineParams,
    black_pixel_threshold=st.integers(1, 4),
    probe_width=st.integers(1, 3),
    mode=st.sampled_from(list(RefineMode)),
    gap_limit=st.integers(1, 10),
)


@settings(max_examples=200, deadline=None)
@given(bitmap_st, params_st)
def test_matches_rescan_oracle(rng, params):
    image, box = make_case(rng)
    assert refine_px(image, box, params) == pytest.approx(oracle(image, box, params))


@settings(max_examples=200, deadline=None)
@given(bitmap_st, st.integers(1, 4), st.integers(1, 3))
def test_idempotent_and_height_exact(rng, black, probe):
    image, box = make_case(rng)
    params = RefineParams(black_pixel_threshold=black, probe_width=probe)
    binary = binarize(image)
    once = refine_row_box(binary, Box(*box), params)
    assert refine_row_box(binary, once, params) == once
    assert (once.y_min, once.y_max) == (box[1], box[3])
    assert once.x_min <= once.x_max


@settings(max_examples=100, deadline=None)
@given(bitmap_st)
def test_qualifying_columns_inside_result(rng):
    image, box = make_case(rng)
    binary = binarize(image)
    out = refine_row_box(binary, Box(*box))
    qual = np.flatnonzero(qualifying_columns(binary, (box[1], box[3]), RefineParams()))
    assert all(out.x_min <= x < out.x_max for x in qual)


class TestDetections:
    def dets(self, *items):
        return [Detection("p", BoxClass(c), Box(*b), s) for c, b, s in items]

    def test_columns_pass_through(self, ink_page):
        dets = self.dets(("column", (0, 0, 10, 30), 0.5), ("column", (30, 0, 50, 30), 0.7))
        assert refine_detections(ink_page(60, 30, [(2, 40)]), dets) == dets

    def test_blank_page_identity(self):
        blank = GrayImage(np.full((50, 80), 255, np.uint8))
        dets = self.dets(("row", (3.5, 10, 60, 20), 0.9), ("column", (0, 0, 10, 50), 0.4))
        assert refine_detections(blank, dets) == dets

    def test_order_scores_and_jobs(self, ink_page):
        page = ink_page(120, 30, [(20, 80)])
        dets = self.dets(("row", (10, 10, 95, 20), 0.3), ("column", (0, 0, 5, 30), 0.2), ("row", (30, 10, 60, 20), 0.1))
        out = refine_detections(page, dets)
        assert [d.score for d in out] == [0.3, 0.2, 0.1]
        assert out[0].box == out[2].box == Box(20, 10, 81, 20)
        assert refine_detections(page, dets, jobs=4) == out

    def test_page_mismatch(self, ink_page):
        dets = self.dets(("row", (0, 10, 5, 20), 1.0)) + [Detection("q", BoxClass.ROW, Box(0, 10, 5, 20), 1.0)]
        with pytest.raises(PageMismatch):
            refine_detections(ink_page(10, 30, []), dets)

    def test_audit(self):
        before = Detection("p", BoxClass.ROW, Box(10, 0, 90, 5), 1.0)
        after = Detection("p", BoxClass.ROW, Box(20, 0, 81, 5), 1.0)
        rec = audit_record(before, after)
        assert rec["delta_x_min"] == 10 and rec["delta_x_max"] == -9

    def test_synthetic_row_iou_improves(self, table_page):
        image, record = table_page
        gt = record.rows[2]
        raw = Detection(record.page_id, BoxClass.ROW, Box(gt.x_min - 30, gt.y_min, gt.x_max + 25, gt.y_max), 0.8)
        (refined,) = refine_detections(image, [raw])
        assert iou(refined.box, gt) > iou(raw.box, gt)
