from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from tabanchor import errors
from tabanchor.geometry import Box
from tabanchor.ingest import (
    BoxClass,
    Dataset,
    Detection,
    GrayImage,
    PageRecord,
    apply_resize_policy,
    dumps_dataset,
    dumps_detections,
    load_gray_image,
    load_voc_dir,
    luma,
    parse_detections_jsonl,
    parse_jsonl,
    parse_voc_xml,
    write_pgm,
)

MALFORMED = Path(__file__).parent / "data" / "malformed"


def voc(width=100, height=80, objects=()):
    objs = "".join(
        f"<object><name>{name}</name><bndbox><xmin>{b[0]}</xmin><ymin>{b[1]}</ymin>"
        f"<xmax>{b[2]}</xmax><ymax>{b[3]}</ymax></bndbox></object>"
        for name, b in objects
    )
    return f"<annotation><size><width>{width}</width><height>{height}</height></size>{objs}</annotation>".encode()


class TestVoc:
    def test_single_row(self):
        rec = parse_voc_xml(voc(objects=[("row", (10, 10, 90, 20))]), page_id="doc1")
        assert rec == PageRecord("doc1", 100, 80, (Box(10, 10, 90, 20),), ())

    def test_no_objects(self):
        rec = parse_voc_xml(voc())
        assert rec.rows == () and rec.columns == ()

    def test_unknown_class_named(self):
        with pytest.raises(errors.UnknownClass) as exc:
            parse_voc_xml(voc(objects=[("table", (1, 1, 5, 5))]))
        assert exc.value.name == "table"
        assert "table" in str(exc.value)

    def test_case_insensitive_class(self):
        rec = parse_voc_xml(voc(objects=[("Row", (1, 1, 5, 5)), ("COLUMN", (1, 1, 3, 70))]))
        assert len(rec.rows) == 1 and len(rec.columns) == 1

    def test_overshoot_is_clipped(self):
        rec = parse_voc_xml(voc(objects=[("row", (-3, 10, 105, 20))]))
        assert rec.rows == (Box(0, 10, 100, 20),)

    def test_missing_field(self):
        with pytest.raises(errors.MissingField):
            parse_voc_xml(b"<annotation><size><width>4</width></size></annotation>")

    def test_directory_listing_sorted(self, tmp_path):
        (tmp_path / "b.xml").write_bytes(voc(objects=[("row", (0, 0, 10, 5))]))
        (tmp_path / "a.xml").write_bytes(voc())
        ds = load_voc_dir(tmp_path)
        assert [p.page_id for p in ds] == ["a", "b"]


class TestJsonl:
    def test_empty(self):
        assert len(parse_jsonl(b"")) == 0

    def test_duplicate_page_id_line(self):
        line = b'{"page_id":"a","width":10,"height":10,"rows":[],"columns":[]}\n'
        with pytest.raises(errors.DuplicatePageId) as exc:
            parse_jsonl(line + line)
        assert exc.value.line == 2

    def test_detection_line(self):
        dets = parse_detections_jsonl(b'{"page_id":"p1","class":"row","box":[0,0,50,10],"score":0.9}\n')
        assert dets == [Detection("p1", BoxClass.ROW, Box(0, 0, 50, 10), 0.9)]

    def test_score_out_of_range(self):
        with pytest.raises(errors.ScoreOutOfRange):
            parse_detections_jsonl(b'{"page_id":"p1","class":"row","box":[0,0,5,1],"score":-0.1}')

    def test_order_preserved(self):
        text = dumps_dataset(Dataset([PageRecord(pid, 10, 10) for pid in ("z", "a", "m")]))
        assert [p.page_id for p in parse_jsonl(text.encode())] == ["z", "a", "m"]


@pytest.mark.parametrize(
    "name, exc_type, line",
    [
        ("gt_bad_json.jsonl", errors.MalformedJson, 2),
        ("gt_duplicate_id.jsonl", errors.DuplicatePageId, 2),
        ("gt_inverted_box.jsonl", errors.InvertedBox, 1),
        ("gt_missing_width.jsonl", errors.MissingField, 1),
        ("gt_negative_width.jsonl", errors.MalformedJson, 3),
        ("det_score_range.jsonl", errors.ScoreOutOfRange, 1),
        ("det_unknown_class.jsonl", errors.UnknownClass, 2),
        ("det_inverted_box.jsonl", errors.InvertedBox, 1),
        ("det_short_box.jsonl", errors.MalformedJson, 1),
        ("det_not_json.jsonl", errors.MalformedJson, 1),
        ("voc_truncated.xml", errors.MalformedXml, None),
        ("voc_unknown_class.xml", errors.UnknownClass, None),
        ("voc_missing_width.xml", errors.MissingField, None),
        ("voc_inverted_box.xml", errors.InvertedBox, None),
        ("image_truncated.pgm", errors.UnsupportedFormat, None),
        ("image_wrong_format.pgm", errors.UnsupportedFormat, None),
    ],
)
def test_malformed_corpus(name, exc_type, line):
    path = MALFORMED / name
    with pytest.raises(exc_type) as exc:
        if name.startswith("gt_"):
            parse_jsonl(path.read_bytes(), source=path)
        elif name.startswith("det_"):
            parse_detections_jsonl(path.read_bytes(), source=path)
        elif name.endswith(".xml"):
            parse_voc_xml(path.read_bytes(), source=path)
        else:
            load_gray_image(path)
    err = exc.value
    assert err.exit_code == 2
    assert name in str(err)
    if line is not None:
        assert err.line == line
        assert f"{name}:{line}" in str(err)


def test_missing_image_is_io_error(tmp_path):
    with pytest.raises(errors.ImageIoError):
        load_gray_image(tmp_path / "nope.png")


class TestImages:
    def test_pgm_decode(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 255, 0]))
        img = load_gray_image(path)
        assert img.pixels.tolist() == [[0, 255], [255, 0]]

    def test_white_png(self, tmp_path):
        path = tmp_path / "w.png"
        Image.new("RGB", (5, 3), (255, 255, 255)).save(path)
        assert (load_gray_image(path).pixels == 255).all()

    def test_color_luma_rule(self, tmp_path):
        path = tmp_path / "c.png"
        rgb = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255], [10, 20, 30]]], dtype=np.uint8)
        Image.fromarray(rgb).save(path)
        # round(0.299*R + 0.587*G + 0.114*B) worked by hand
        assert load_gray_image(path).pixels.tolist() == [[76, 150, 29, 18]]

    def test_luma_rounding(self):
        assert luma(np.array([[5, 0, 0]])).tolist() == [1]  # 1.495
        assert luma(np.array([[0, 0, 5]])).tolist() == [1]  # 0.57
        assert luma(np.array([[0, 0, 13]])).tolist() == [1]  # 1.482

    def test_pgm_roundtrip(self, tmp_path):
        img = GrayImage(np.arange(12, dtype=np.uint8).reshape(3, 4))
        write_pgm(tmp_path / "r.pgm", img)
        assert load_gray_image(tmp_path / "r.pgm") == img


class TestResize:
    def test_small_page_untouched(self):
        rec = PageRecord("p", 500, 400, (Box(1, 2, 3, 4),))
        out, img, s = apply_resize_policy(rec)
        assert s == 1.0 and out is rec and img is None

    def test_wide_page_halved(self):
        rec = PageRecord("p", 2048, 800, (Box(100, 100, 300, 300),))
        img = GrayImage(np.full((800, 2048), 255, dtype=np.uint8))
        out, img2, s = apply_resize_policy(rec, img)
        assert s == 0.5
        assert (out.page_width, out.page_height) == (1024, 400)
        assert out.rows == (Box(50, 50, 150, 150),)
        assert (img2.width, img2.height) == (1024, 400)

    def test_tall_page_height_bound(self):
        out, _, s = apply_resize_policy(PageRecord("p", 1024, 1600))
        assert s == 0.5 and (out.page_width, out.page_height) == (512, 800)

    @given(st.integers(1, 5000), st.integers(1, 5000))
    def test_idempotent(self, w, h):
        rec = PageRecord("p", w, h, (Box(0, 0, w / 2, h / 3),))
        once, _, _ = apply_resize_policy(rec)
        twice, _, s2 = apply_resize_policy(once)
        assert s2 == 1.0 and twice == once
        assert once.page_width <= 1024 and once.page_height <= 800


box_coords = st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50)).map(
    lambda t: Box(min(t[0], t[2]), min(t[1], t[3]), max(t[0], t[2]), max(t[1], t[3]))
)
page_st = st.builds(
    lambda pid, rows, cols, frac: PageRecord(pid, 60, 60, tuple(rows), tuple(cols)),
    st.text("abcdefgh0123456789_-", min_size=1, max_size=8),
    st.lists(box_coords, max_size=4),
    st.lists(box_coords, max_size=4),
    st.floats(0, 1),
)


@settings(max_examples=100)
@given(st.lists(page_st, max_size=5, unique_by=lambda p: p.page_id))
def test_dataset_roundtrip_bytes(pages):
    ds = Dataset(pages)
    first = dumps_dataset(ds)
    parsed = parse_jsonl(first.encode())
    assert parsed == ds
    assert dumps_dataset(parsed) == first


def test_detection_roundtrip():
    dets = [Detection("p", BoxClass.COLUMN, Box(0.25, 1, 3.125, 9), 0.123456789), Detection("q", BoxClass.ROW, Box(0, 0, 1, 1), 1.0)]
    text = dumps_detections(dets)
    assert parse_detections_jsonl(text.encode()) == dets
    assert dumps_detections(parse_detections_jsonl(text.encode())) == text
