"""Annotation parsing, page bitmaps and the input resize policy."""

from __future__ import annotations

import io
import json
import logging
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DuplicatePageId,
    ImageIoError,
    InvertedBox,
    MalformedJson,
    MalformedXml,
    MissingField,
    ScoreOutOfRange,
    UnknownClass,
    UnsupportedFormat,
)
from .geometry import Box, clip_box

logger = logging.getLogger(__name__)

MAX_WIDTH = 1024
MAX_HEIGHT = 800


class BoxClass(str, Enum):
    ROW = "row"
    COLUMN = "column"

    @classmethod
    def parse(cls, name):
        key = str(name).strip().lower()
        for member in cls:
            if member.value == key:
                return member
        raise UnknownClass(name)


@dataclass(frozen=True)
class PageRecord:
    page_id: str
    page_width: int
    page_height: int
    rows: tuple = ()
    columns: tuple = ()
    image_path: Optional[str] = None

    def boxes(self, cls: BoxClass):
        return self.rows if BoxClass(cls) is BoxClass.ROW else self.columns


@dataclass(frozen=True)
class Detection:
    page_id: str
    cls: BoxClass
    box: Box
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ScoreOutOfRange(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit intensities, shape ``(height, width)``; 0 is black ink, 255 white."""

    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 2 or self.pixels.dtype != np.uint8:
            raise ValueError("GrayImage expects a 2-D uint8 array")

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


@dataclass
class ParseReport:
    """Non-fatal events seen while parsing."""

    clipped_boxes: int = 0


@dataclass
class Dataset:
    pages: list = field(default_factory=list)
    report: ParseReport = field(default_factory=ParseReport, compare=False)

    def __post_init__(self):
        seen = set()
        for p in self.pages:
            if p.page_id in seen:
                raise DuplicatePageId(f"duplicate page_id {p.page_id!r}")
            seen.add(p.page_id)

    def __len__(self):
        return len(self.pages)

    def __iter__(self):
        return iter(self.pages)

    def by_id(self):
        return {p.page_id: p for p in self.pages}


def _make_box(coords, width, height, report, where=""):
    try:
        x0, y0, x1, y1 = (float(c) for c in coords)
    except (TypeError, ValueError) as exc:
        raise MalformedJson(f"{where}box must be four numbers, got {coords!r}") from exc
    if x1 < x0 or y1 < y0:
        raise InvertedBox(f"{where}inverted box {[x0, y0, x1, y1]}")
    try:
        box = Box(x0, y0, x1, y1)
    except ValueError as exc:
        raise MalformedJson(f"{where}{exc}") from exc
    if width is None:
        return box
    clipped = clip_box(box, width, height)
    if clipped != box:
        report.clipped_boxes += 1
        logger.warning("%sbox %s clipped to page %dx%d", where, box.as_list(), width, height)
    return clipped


# --- VOC-style XML -------------------------------------------------------


def _child_text(elem, path, source):
    node = elem.find(path)
    if node is None or node.text is None or not node.text.strip():
        raise MissingField(f"missing <{path}>", source)
    return node.text.strip()


def _number(text, path, source):
    try:
        return float(text)
    except ValueError:
        raise MalformedXml(f"<{path}> is not a number: {text!r}", source) from None


def parse_voc_xml(file_bytes, page_id="page", source=None, report=None):
    """Parse one VOC-style annotation holding ``row``/``column`` objects."""
    report = report if report is not None else ParseReport()
    try:
        root = ET.fromstring(file_bytes)
    except ET.ParseError as exc:
        raise MalformedXml(f"XML syntax error: {exc}", source, exc.position[0]) from None

    width = int(_number(_child_text(root, "size/width", source), "size/width", source))
    height = int(_number(_child_text(root, "size/height", source), "size/height", source))
    if width <= 0 or height <= 0:
        raise MalformedXml(f"page size must be positive, got {width}x{height}", source)

    image_path = root.findtext("path") or root.findtext("filename")
    rows, columns = [], []
    for obj in root.iter("object"):
        name = _child_text(obj, "name", source)
        try:
            cls = BoxClass.parse(name)
        except UnknownClass:
            raise UnknownClass(name, source) from None
        coords = [
            _number(_child_text(obj, f"bndbox/{k}", source), f"bndbox/{k}", source)
            for k in ("xmin", "ymin", "xmax", "ymax")
        ]
        try:
            box = _make_box(coords, width, height, report)
        except InvertedBox as exc:
            raise exc.located(source) from None
        (rows if cls is BoxClass.ROW else columns).append(box)
    return PageRecord(page_id, width, height, tuple(rows), tuple(columns), image_path or None)


def load_voc_dir(directory, jobs=1):
    """Parse every ``*.xml`` file in ``directory`` (sorted by name) into a Dataset."""
    paths = sorted(Path(directory).glob("*.xml"))

    def one(path):
        report = ParseReport()
        return parse_voc_xml(path.read_bytes(), page_id=path.stem, source=path, report=report), report

    if jobs > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parsed = list(pool.map(one, paths))
    else:
        parsed = [one(p) for p in paths]
    report = ParseReport(sum(r.clipped_boxes for _, r in parsed))
    return Dataset([page for page, _ in parsed], report)


# --- JSONL ----------------------------------------------------------------


def _jsonl_objects(file_bytes, source):
    if isinstance(file_bytes, bytes):
        try:
            text = file_bytes.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedJson(f"not UTF-8: {exc}", source) from None
    else:
        text = file_bytes
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedJson(f"invalid JSON: {exc.msg}", source, lineno) from None
        if not isinstance(obj, dict):
            raise MalformedJson("expected a JSON object", source, lineno)
        yield lineno, obj


def _require(obj, key, source, lineno):
    if key not in obj:
        raise MissingField(f"missing key {key!r}", source, lineno)
    return obj[key]


def parse_jsonl(file_bytes, source=None):
    """Parse PageRecord lines into a Dataset, preserving order."""
    report = ParseReport()
    pages, seen = [], set()
    for lineno, obj in _jsonl_objects(file_bytes, source):
        page_id = _require(obj, "page_id", source, lineno)
        if not isinstance(page_id, str) or not page_id:
            raise MalformedJson("page_id must be a nonempty string", source, lineno)
        if page_id in seen:
            raise DuplicatePageId(f"duplicate page_id {page_id!r}", source, lineno)
        seen.add(page_id)
        width = _require(obj, "width", source, lineno)
        height = _require(obj, "height", source, lineno)
        if not (isinstance(width, int) and isinstance(height, int)) or width <= 0 or height <= 0:
            raise MalformedJson("width and height must be positive integers", source, lineno)
        boxes = {}
        for key in ("rows", "columns"):
            raw = obj.get(key, [])
            if not isinstance(raw, list):
                raise MalformedJson(f"{key!r} must be a list", source, lineno)
            try:
                boxes[key] = tuple(_make_box(c, width, height, report) for c in raw)
            except (InvertedBox, MalformedJson) as exc:
                raise exc.located(source, lineno) from None
        image_path = obj.get("image_path")
        pages.append(PageRecord(page_id, width, height, boxes["rows"], boxes["columns"], image_path))
    return Dataset(pages, report)


def parse_detections_jsonl(file_bytes, source=None):
    """Parse Detection lines into a list, preserving order."""
    dets = []
    for lineno, obj in _jsonl_objects(file_bytes, source):
        page_id = _require(obj, "page_id", source, lineno)
        try:
            cls = BoxClass.parse(_require(obj, "class", source, lineno))
        except UnknownClass as exc:
            raise exc.located(source, lineno) from None
        score = _require(obj, "score", source, lineno)
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise MalformedJson("score must be a number", source, lineno)
        if not 0.0 <= score <= 1.0:
            raise ScoreOutOfRange(f"score {score} outside [0, 1]", source, lineno)
        try:
            box = _make_box(_require(obj, "box", source, lineno), None, None, None)
        except (InvertedBox, MalformedJson) as exc:
            raise exc.located(source, lineno) from None
        dets.append(Detection(str(page_id), cls, box, float(score)))
    return dets


def _num(v):
    # integral floats are written as integers so files stay readable
    return int(v) if float(v).is_integer() else v


def _box_json(box):
    return [_num(c) for c in box.as_list()]


def dumps_dataset(dataset) -> str:
    """Canonical JSONL: one record per line, fixed key order, LF endings."""
    lines = []
    for p in dataset:
        obj = {
            "page_id": p.page_id,
            "width": p.page_width,
            "height": p.page_height,
            "rows": [_box_json(b) for b in p.rows],
            "columns": [_box_json(b) for b in p.columns],
        }
        if p.image_path:
            obj["image_path"] = p.image_path
        lines.append(json.dumps(obj, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def dumps_detections(dets) -> str:
    lines = []
    for d in dets:
        obj = {"page_id": d.page_id, "class": d.cls.value, "box": _box_json(d.box), "score": _num(d.score)}
        lines.append(json.dumps(obj, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def read_dataset(path, jobs=1):
    """Load ground truth from a JSONL file or a directory of VOC XML files."""
    path = Path(path)
    if path.is_dir():
        return load_voc_dir(path, jobs)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageIoError(f"cannot read: {exc.strerror}", path) from None
    return parse_jsonl(data, source=path)


def read_detections(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageIoError(f"cannot read: {exc.strerror}", path) from None
    return parse_detections_jsonl(data, source=path)


# --- images ---------------------------------------------------------------


def luma(rgb: np.ndarray) -> np.ndarray:
    """round(0.299 R + 0.587 G + 0.114 B), half-up, in exact integer arithmetic."""
    rgb = rgb.astype(np.int64)
    return ((299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000).astype(np.uint8)


def load_gray_image(path) -> GrayImage:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageIoError(f"cannot read image: {exc.strerror}", path) from None
    if not (data.startswith(b"\x89PNG") or data.startswith(b"P5")):
        raise UnsupportedFormat("expected a PNG or binary PGM (P5) file", path)
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode in ("L", "1"):
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
            elif im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.uint16) >> 8
                arr = arr.astype(np.uint8)
            else:
                if im.mode == "P" or im.mode == "LA" or im.mode == "RGBA":
                    im = im.convert("RGB")
                arr = luma(np.asarray(im.convert("RGB")))
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise UnsupportedFormat(f"cannot decode image: {exc}", path) from None
    return GrayImage(np.ascontiguousarray(arr))


def write_pgm(path, image: GrayImage):
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.pixels.tobytes())


def find_page_image(directory, page_id):
    for ext in (".png", ".pgm"):
        candidate = Path(directory) / f"{page_id}{ext}"
        if candidate.is_file():
            return candidate
    return None


# --- resize policy --------------------------------------------------------


def resize_scale(width, height, max_width=MAX_WIDTH, max_height=MAX_HEIGHT):
    return min(1.0, max_width / width, max_height / height)


def apply_resize_policy(record: PageRecord, image: Optional[GrayImage] = None):
    """Shrink pages larger than 1024x800 by one aspect-preserving factor.

    Returns ``(record, image, scale)``; with ``scale == 1`` the inputs are
    returned untouched.
    """
    s = resize_scale(record.page_width, record.page_height)
    if s >= 1.0:
        return record, image, 1.0
    new_w = max(1, min(MAX_WIDTH, int(round(record.page_width * s))))
    new_h = max(1, min(MAX_HEIGHT, int(round(record.page_height * s))))

    def scale_all(boxes):
        return tuple(clip_box(b.scaled(s), new_w, new_h) for b in boxes)

    scaled = replace(
        record,
        page_width=new_w,
        page_height=new_h,
        rows=scale_all(record.rows),
        columns=scale_all(record.columns),
    )
    if image is not None:
        im = Image.fromarray(image.pixels).resize((new_w, new_h), Image.Resampling.BOX)
        image = GrayImage(np.asarray(im, dtype=np.uint8).copy())
    return scaled, image, s
