import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tabanchor.ingest import GrayImage  # noqa: E402
from tabanchor.synth import TableLayoutSpec, generate_page  # noqa: E402


def page_with_ink(width, height, spans, band=(10, 20)):
    """White page with solid ink over ``band`` rows for each ``(x_start, x_end)`` inclusive span."""
    pixels = np.full((height, width), 255, dtype=np.uint8)
    for x_start, x_end in spans:
        pixels[band[0]:band[1], x_start:x_end + 1] = 0
    return GrayImage(pixels)


@pytest.fixture
def ink_page():
    return page_with_ink


@pytest.fixture(scope="session")
def table_page():
    return generate_page(TableLayoutSpec(n_rows=5, n_cols=3, seed=11), "p0")
