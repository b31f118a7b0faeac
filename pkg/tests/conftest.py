from __future__ import annotations

import numpy as np
import pytest

from hoptrack.core_types import BBox
from hoptrack.io import FrameBuffer


def textured_frame(width: int = 160, height: int = 120, seed: int = 0) -> FrameBuffer:
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    return FrameBuffer.from_array(pixels)


def solid_frame(width: int, height: int, color=(128, 128, 128)) -> FrameBuffer:
    pixels = np.empty((height, width, 3), dtype=np.uint8)
    pixels[:] = color
    return FrameBuffer.from_array(pixels)


@pytest.fixture
def box() -> BBox:
    return BBox(10.0, 20.0, 30.0, 60.0)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
