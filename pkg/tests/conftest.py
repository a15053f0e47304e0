import numpy as np
import pytest
from fractions import Fraction

from dpvid.analysis import (CASE_SAMPLE, RgbLedger, RgbRecord, classify_rgbs)
from dpvid.model import VeAnnotation, Video

BLUE = (0, 0, 255)
GREEN = (0, 255, 0)
ORANGE = (255, 165, 0)
PURPLE = (128, 0, 128)
RED = (255, 0, 0)
BG = (200, 200, 200)


def make_record(rgb, per_ve, extra_background=0, case=CASE_SAMPLE):
    """Ledger record with placeholder positions (enough for count math)."""
    total = sum(per_ve.values()) + extra_background
    positions = np.zeros((total, 3), dtype=np.int32)
    positions[:, 2] = np.arange(total)
    return RgbRecord(rgb=rgb, total=total, per_ve=dict(per_ve), case=case,
                     positions=positions)


@pytest.fixture
def worked_ledger():
    """The shared three-element allocation fixture with its stated masses.

    Element masses are taken as given (75, 130, 70) even though the third is
    smaller than its listed color counts; the allocator only reads masses and
    counts, so the fixture exercises exactly the documented arithmetic.
    """
    records = {
        BLUE: make_record(BLUE, {1: 20, 2: 30, 3: 15}, extra_background=1),
        GREEN: make_record(GREEN, {2: 50, 3: 35}, extra_background=1),
        ORANGE: make_record(ORANGE, {1: 55}, extra_background=1),
        PURPLE: make_record(PURPLE, {2: 5}, extra_background=1),
        RED: make_record(RED, {3: 30}, extra_background=1),
    }
    ledger = RgbLedger(
        records=records, n=3, sensitive=frozenset({1, 2, 3}),
        ve_mass={1: 75, 2: 130, 3: 70}, dims=(32, 32, 1),
    )
    ledger.mark_selected({
        1: {BLUE, ORANGE},
        2: {BLUE, GREEN, PURPLE},
        3: {BLUE, GREEN, RED},
    })
    return ledger


def build_worked_video():
    """A real single-frame video shaped like the worked allocation example.

    Counts inside the elements match the fixture (blue 20/30/15, green 50/35,
    orange 55, purple 5, red 30); each selected color also occurs once in the
    background so all five are shared (case 3). The third element's true mass
    here is 80: the stated 70 cannot be realized by any actual video.
    """
    h, w = 40, 40
    pix = np.zeros((1, h, w, 3), np.uint8)
    lab = np.zeros((1, h, w), np.uint16)
    pix[0, :, :] = BG

    def fill(region_rows, region_cols, ve, colors_counts):
        rr = [(a, b) for a in region_rows for b in region_cols]
        it = iter(rr)
        for color, count in colors_counts:
            for _ in range(count):
                a, b = next(it)
                pix[0, a, b] = color
                lab[0, a, b] = ve
        for a, b in it:  # exhaust leftover region cells as element filler
            pix[0, a, b] = (10, 10, ve)
            lab[0, a, b] = ve

    fill(range(0, 5), range(0, 15), 1, [(BLUE, 20), (ORANGE, 55)])        # 75
    fill(range(7, 20), range(0, 10), 2, [(BLUE, 30), (GREEN, 50), (PURPLE, 5)])  # 130
    fill(range(22, 30), range(0, 10), 3, [(BLUE, 15), (GREEN, 35), (RED, 30)])   # 80
    for i, color in enumerate((BLUE, GREEN, ORANGE, PURPLE, RED)):
        pix[0, 38, i] = color
    return Video(pix), VeAnnotation(lab, 3)


@pytest.fixture
def worked_video():
    return build_worked_video()


def single_color_video(width=4, height=3, frames=2, color=(9, 99, 199)):
    pix = np.zeros((frames, height, width, 3), np.uint8)
    pix[:] = color
    return Video(pix)


def checker_fixture(vh=4, vw=4, frames=1, copies=33, lo=90, hi=130,
                    origin=(10, 3)):
    """High-contrast element where every pixel carries its own color and each
    color recurs `copies` times in the background: retention can then sit
    near 1 and the per-pixel sampling events are exactly independent."""
    H, W = 24, 48
    pix = np.zeros((frames, H, W, 3), np.uint8)
    lab = np.zeros((frames, H, W), np.uint16)
    pix[:, :, :] = (30, 40, 50)
    a0, b0 = origin
    colors = []
    for t in range(frames):
        for i in range(vh):
            for j in range(vw):
                base = hi if (i + j) % 2 == 0 else lo
                c = (base, base + i + 6 * t, base + j)
                colors.append(c)
                pix[t, a0 + i, b0 + j] = c
                lab[t, a0 + i, b0 + j] = 1
    slots = [(t, a, b) for t in range(frames)
             for a in range(H) for b in range(W // 2 + 2, W)]
    assert len(slots) >= len(colors) * copies
    it = iter(slots)
    for c in colors:
        for _ in range(copies):
            t, a, b = next(it)
            pix[t, a, b] = c
    return Video(pix), VeAnnotation(lab, 1)
