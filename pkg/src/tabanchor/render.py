"""Anchor galleries (SVG) and detection overlays (PNG)."""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

CANVAS = 512
MARGIN = 16

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _fmt(v):
    return f"{v:.3f}".rstrip("0").rstrip(".")


def anchor_gallery_svg(anchor_set, title=None) -> str:
    """Co-centred anchor rectangles scaled so the largest dimension fits the canvas."""
    shapes = anchor_set.shapes
    extent = max(max(s.width, s.height) for s in shapes)
    k = (CANVAS - 2 * MARGIN) / extent
    cx = cy = CANVAS / 2
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" viewBox="0 0 {CANVAS} {CANVAS}">',
        f'<rect x="0" y="0" width="{CANVAS}" height="{CANVAS}" fill="white"/>',
    ]
    if title:
        lines.append(f'<title>{title}</title>')
    for i, s in enumerate(shapes):
        w, h = s.width * k, s.height * k
        lines.append(
            f'<rect class="anchor" x="{_fmt(cx - w / 2)}" y="{_fmt(cy - h / 2)}" '
            f'width="{_fmt(w)}" height="{_fmt(h)}" fill="none" '
            f'stroke="{_PALETTE[i % len(_PALETTE)]}" stroke-width="1"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


STROKES = {"gt": (0, 160, 0), "raw": (220, 0, 0), "refined": (0, 70, 230)}


def overlay_png(image, layers, path):
    """Draw box layers over a page: ``layers`` maps "gt"/"raw"/"refined" to box lists."""
    rgb = Image.fromarray(np.repeat(image.pixels[:, :, None], 3, axis=2))
    draw = ImageDraw.Draw(rgb)
    for name in ("gt", "raw", "refined"):
        for box in layers.get(name, ()):
            draw.rectangle(
                [box.x_min, box.y_min, max(box.x_min, box.x_max - 1), max(box.y_min, box.y_max - 1)],
                outline=STROKES[name],
                width=1,
            )
    rgb.save(path, format="PNG")
