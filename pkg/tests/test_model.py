from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpvid.model import (SampledVideo, VeAnnotation, Video, pixel_count,
                         rgb_histogram, ve_extent)


def rand_video(seed, frames=2, h=4, w=5, colors=4):
    gen = np.random.default_rng(seed)
    palette = gen.integers(0, 256, size=(colors, 3), dtype=np.uint8)
    idx = gen.integers(0, colors, size=(frames, h, w))
    return Video(palette[idx])


class TestPixelCount:
    def test_small(self):
        assert pixel_count(rand_video(0, frames=2, h=4, w=4)) == 32

    def test_single(self):
        assert pixel_count(rand_video(0, frames=1, h=1, w=1)) == 1

    def test_full_scale_dims(self):
        dims = SimpleNamespace(width=1920, height=1080, frame_count=1050)
        assert pixel_count(dims) == 2_177_280_000


class TestVideo:
    def test_immutable(self):
        video = rand_video(1)
        with pytest.raises(ValueError):
            video.pixels[0, 0, 0] = 0
        with pytest.raises(AttributeError):
            video.pixels = None

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            Video(np.zeros((3, 3, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            Video(np.zeros((0, 2, 2, 3), dtype=np.uint8))


class TestHistogram:
    def test_single_color(self):
        pix = np.zeros((1, 1, 2, 3), np.uint8)
        assert rgb_histogram(Video(pix)) == {(0, 0, 0): 2}

    def test_filter_restricts(self):
        pix = np.zeros((1, 1, 2, 3), np.uint8)
        pix[0, 0, 1] = (255, 255, 255)
        lab = np.zeros((1, 1, 2), np.uint16)
        lab[0, 0, 0] = 1
        hist = rgb_histogram(Video(pix), VeAnnotation(lab, 1), ve_id=1)
        assert hist == {(0, 0, 0): 1}

    def test_dimension_mismatch(self):
        video = rand_video(2)
        bad = VeAnnotation(np.zeros((1, 1, 1), np.uint16), 0)
        with pytest.raises(ValueError):
            rgb_histogram(video, bad, ve_id=None)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_counts_sum_to_scope_size(self, seed):
        video = rand_video(seed)
        assert sum(rgb_histogram(video).values()) == pixel_count(video)

    def test_worked_example_counts(self, worked_video):
        video, ann = worked_video
        hist = rgb_histogram(video, ann, ve_id=2)
        assert hist[(0, 0, 255)] == 30
        assert hist[(0, 255, 0)] == 50
        assert hist[(128, 0, 128)] == 5
        assert sum(hist.values()) == 130


class TestVeExtent:
    def test_absent_everywhere(self):
        ann = VeAnnotation(np.zeros((3, 4, 4), np.uint16), 1)
        extents = ve_extent(ann, 1)
        assert all(e.empty and e.bbox is None for e in extents)

    def test_block_in_one_frame(self):
        lab = np.zeros((2, 5, 5), np.uint16)
        lab[0, 0:3, 0:3] = 1
        extents = ve_extent(ann := VeAnnotation(lab, 1), 1)
        assert extents[0].bbox == (0, 2, 0, 2)
        assert extents[0].coords.shape == (9, 2)
        assert extents[1].empty
        assert ann.mass(1) == 9

    def test_span_matches_construction(self):
        frames = 10
        lab = np.zeros((frames, 4, 4), np.uint16)
        for t in range(2, 8):
            lab[t, 1, 1] = 1
        extents = ve_extent(VeAnnotation(lab, 1), 1)
        present = [t for t, e in enumerate(extents) if not e.empty]
        assert present == list(range(2, 8))

    def test_unknown_id(self):
        ann = VeAnnotation(np.zeros((1, 2, 2), np.uint16), 1)
        with pytest.raises(ValueError):
            ve_extent(ann, 2)


class TestAnnotation:
    def test_label_exceeding_n(self):
        lab = np.full((1, 2, 2), 3, np.uint16)
        with pytest.raises(ValueError):
            VeAnnotation(lab, 2)

    def test_restrict_to(self):
        lab = np.zeros((1, 2, 3), np.uint16)
        lab[0, 0] = (1, 2, 0)
        ann = VeAnnotation(lab, 2).restrict_to({2})
        assert ann.n == 2
        assert ann.mass(1) == 0 and ann.mass(2) == 1


class TestSampledVideo:
    def test_round_trip_all_pixels(self):
        video = rand_video(3)
        sampled = SampledVideo.from_video(video)
        assert sampled.to_video() == video

    def test_duplicate_position_rejected(self):
        with pytest.raises(ValueError):
            SampledVideo(2, 2, 1, [0, 0], [0, 0], [1, 1],
                         [[1, 2, 3], [4, 5, 6]], [0, 0])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            SampledVideo(2, 2, 1, [0], [2], [0], [[1, 2, 3]], [0])

    def test_to_video_requires_completeness(self):
        sparse = SampledVideo(2, 2, 1, [0], [0], [0], [[1, 2, 3]], [0])
        with pytest.raises(ValueError):
            sparse.to_video()

    def test_entries_canonical_order(self):
        sampled = SampledVideo(3, 3, 2, [1, 0], [0, 2], [2, 1],
                               [[1, 1, 1], [2, 2, 2]], [0, 1])
        assert sampled.t.tolist() == [0, 1]
        assert sampled.rgb[0].tolist() == [2, 2, 2]

    def test_ve_frame_counts(self):
        sampled = SampledVideo(3, 3, 2, [0, 0, 1], [0, 1, 0], [0, 0, 0],
                               [[1, 1, 1]] * 3, [1, 1, 2])
        assert sampled.ve_frame_counts() == {(1, 0): 2, (2, 1): 1}
