import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpvid.analysis import (CASE_RETAIN, CASE_SAMPLE, CASE_SUPPRESS,
                            classify_rgbs, multi_scale_select, prioritize)
from dpvid.model import VeAnnotation, Video

from conftest import BLUE, GREEN, ORANGE, PURPLE, RED


def tiny(pixels, labels, n):
    return Video(np.asarray(pixels, np.uint8)[None]), \
        VeAnnotation(np.asarray(labels, np.uint16)[None], n)


class TestClassify:
    def test_three_cases(self):
        x = (5, 5, 5)
        video, ann = tiny(
            [[x, x, x, x, x],
             [(1, 1, 1), (2, 2, 2), (2, 2, 2), (2, 2, 2), (3, 3, 3)]],
            [[1, 1, 1, 0, 0],
             [1, 0, 0, 0, 0]],
            n=1,
        )
        ledger = classify_rgbs(video, ann)
        rec = ledger.records[x]
        assert rec.case == CASE_SAMPLE and rec.per_ve == {1: 3} and rec.total == 5
        assert ledger.records[(1, 1, 1)].case == CASE_SUPPRESS
        assert ledger.records[(2, 2, 2)].case == CASE_RETAIN
        assert ledger.records[(3, 3, 3)].case == CASE_RETAIN

    def test_non_sensitive_counts_as_background(self):
        video, ann = tiny(
            [[(7, 7, 7), (7, 7, 7)]],
            [[1, 2]],
            n=2,
        )
        full = classify_rgbs(video, ann)
        assert full.records[(7, 7, 7)].case == CASE_SAMPLE
        only1 = classify_rgbs(video, ann, sensitive={1})
        rec = only1.records[(7, 7, 7)]
        assert rec.case == CASE_SAMPLE and rec.per_ve == {1: 1}
        only_none = classify_rgbs(video, ann, sensitive=set())
        assert only_none.records[(7, 7, 7)].case == CASE_RETAIN

    def test_exclusive_to_one_element(self):
        video, ann = tiny([[(9, 9, 9), (8, 8, 8)]], [[1, 0]], n=1)
        ledger = classify_rgbs(video, ann)
        assert ledger.records[(9, 9, 9)].case == CASE_SUPPRESS

    @given(seed=st.integers(0, 5000))
    @settings(max_examples=25, deadline=None)
    def test_cases_partition_everything(self, seed):
        gen = np.random.default_rng(seed)
        pix = gen.integers(0, 4, size=(2, 5, 5, 3), dtype=np.uint8) * 60
        lab = gen.integers(0, 3, size=(2, 5, 5)).astype(np.uint16)
        video, ann = Video(pix), VeAnnotation(lab, 2)
        ledger = classify_rgbs(video, ann)
        # Exhaustive rescan: recompute per-color facts with plain loops.
        seen = {}
        for t in range(2):
            for a in range(5):
                for b in range(5):
                    rgb = tuple(int(v) for v in pix[t, a, b])
                    info = seen.setdefault(rgb, {"total": 0, "ve": {}})
                    info["total"] += 1
                    j = int(lab[t, a, b])
                    if j:
                        info["ve"][j] = info["ve"].get(j, 0) + 1
        assert set(seen) == set(ledger.records)
        for rgb, info in seen.items():
            rec = ledger.records[rgb]
            assert rec.total == info["total"]
            assert rec.per_ve == info["ve"]
            if not info["ve"]:
                assert rec.case == CASE_RETAIN
            elif len(info["ve"]) == 1 and sum(info["ve"].values()) == info["total"]:
                assert rec.case == CASE_SUPPRESS
            else:
                assert rec.case == CASE_SAMPLE

    def test_worked_video_counts(self, worked_video):
        video, ann = worked_video
        ledger = classify_rgbs(video, ann)
        assert ledger.records[BLUE].per_ve == {1: 20, 2: 30, 3: 15}
        assert ledger.records[GREEN].per_ve == {2: 50, 3: 35}
        assert ledger.ve_mass == {1: 75, 2: 130, 3: 80}
        for color in (BLUE, GREEN, ORANGE, PURPLE, RED):
            assert ledger.records[color].case == CASE_SAMPLE


def brute_force_select(video, ann, ve_id, k, suppressed):
    """Independent re-implementation of the cell selection rule with loops."""
    winners = {}
    lab = ann.labels
    grid = math.isqrt(k)
    if grid * grid < k:
        grid += 1
    for t in range(video.frame_count):
        cells_pop = {}
        coords = [(a, b) for a in range(video.height) for b in range(video.width)
                  if lab[t, a, b] == ve_id]
        if not coords:
            continue
        a0 = min(c[0] for c in coords); a1 = max(c[0] for c in coords)
        b0 = min(c[1] for c in coords); b1 = max(c[1] for c in coords)

        def edges(lo, hi, parts):
            length = hi - lo + 1
            base, extra = divmod(length, parts)
            out, start = [], lo
            for i in range(parts):
                size = base + (1 if i < extra else 0)
                if size:
                    out.append((start, start + size - 1))
                    start += size
            return out

        cells = []
        for ci, (ra0, ra1) in enumerate(edges(a0, a1, grid)):
            for cj, (cb0, cb1) in enumerate(edges(b0, b1, grid)):
                members = [c for c in coords
                           if ra0 <= c[0] <= ra1 and cb0 <= c[1] <= cb1]
                if members:
                    cells.append((-len(members), ci, cj, members))
        cells.sort(key=lambda c: c[:3])
        for _, _, _, members in cells[:k]:
            freq = {}
            for a, b in members:
                rgb = tuple(int(v) for v in video.pixels[t, a, b])
                if rgb in suppressed:
                    continue
                freq[rgb] = freq.get(rgb, 0) + 1
            if freq:
                best = min(freq, key=lambda r: (-freq[r], r))
                winners[best] = None
    counts = {}
    for t in range(video.frame_count):
        for a in range(video.height):
            for b in range(video.width):
                if lab[t, a, b] == ve_id:
                    rgb = tuple(int(v) for v in video.pixels[t, a, b])
                    counts[rgb] = counts.get(rgb, 0) + 1
    ranked = sorted(winners, key=lambda r: (-counts[r], r))
    return set(ranked[:k])


class TestSelection:
    def test_k1_single_frame_is_global_top(self):
        x, y = (50, 0, 0), (60, 0, 0)
        video, ann = tiny(
            [[x, x, x, y], [y, y, (1, 1, 1), (1, 1, 1)]],
            [[1, 1, 1, 1], [1, 1, 0, 0]],
            n=1,
        )
        assert multi_scale_select(video, ann, 1, 1) == {x}

    def test_uniform_element_merges_duplicates(self):
        c = (90, 90, 90)
        video, ann = tiny(
            [[c, c, (5, 5, 5)], [c, c, (5, 5, 5)]],
            [[1, 1, 0], [1, 1, 0]],
            n=1,
        )
        assert multi_scale_select(video, ann, 1, 4) == {c}

    def test_split_element_prefers_spread(self):
        x, y, z = (10, 0, 0), (20, 0, 0), (30, 0, 0)
        pix = np.zeros((1, 9, 8, 3), np.uint8)
        lab = np.zeros((1, 9, 8), np.uint16)
        pix[0, 8, :] = (77, 77, 77)  # background row keeps the colors shared
        pix[0, 8, 0] = x; pix[0, 8, 1] = y; pix[0, 8, 2] = z
        lab[0, :8, :] = 1
        pix[0, :8, :4] = x                      # left half: 32 of X
        flat = [(a, b) for a in range(8) for b in range(4, 8)]
        for i, (a, b) in enumerate(flat):       # right half: 20 Y then 12 Z
            pix[0, a, b] = y if i < 20 else z
        video, ann = Video(pix), VeAnnotation(lab, 1)
        chosen = multi_scale_select(video, ann, 1, 2)
        assert chosen == {x, y}
        ledger = classify_rgbs(video, ann)
        suppressed = {r for r, rec in ledger.records.items()
                      if rec.case == CASE_SUPPRESS}
        assert chosen == brute_force_select(video, ann, 1, 2, suppressed)

    @given(seed=st.integers(0, 2000), k=st.integers(1, 5))
    @settings(max_examples=20, deadline=None)
    def test_matches_brute_force(self, seed, k):
        gen = np.random.default_rng(seed)
        pix = gen.integers(0, 5, size=(2, 7, 7, 3), dtype=np.uint8) * 40
        lab = np.zeros((2, 7, 7), np.uint16)
        lab[:, 2:6, 1:6] = 1
        video, ann = Video(pix), VeAnnotation(lab, 1)
        ledger = classify_rgbs(video, ann)
        suppressed = {r for r, rec in ledger.records.items()
                      if rec.case == CASE_SUPPRESS}
        expected = brute_force_select(video, ann, 1, k, suppressed)
        assert multi_scale_select(video, ann, 1, k, ledger) == expected

    def test_outputs_subset_of_element_colors(self):
        gen = np.random.default_rng(0)
        pix = gen.integers(0, 6, size=(1, 8, 8, 3), dtype=np.uint8) * 30
        lab = np.zeros((1, 8, 8), np.uint16)
        lab[0, 1:5, 2:7] = 1
        video, ann = Video(pix), VeAnnotation(lab, 1)
        chosen = multi_scale_select(video, ann, 1, 3)
        element_colors = {tuple(int(v) for v in video.pixels[0, a, b])
                          for a in range(8) for b in range(8) if lab[0, a, b] == 1}
        assert chosen <= element_colors

    def test_empty_element_rejected(self):
        video, ann = tiny([[(1, 1, 1)]], [[0]], n=1)
        with pytest.raises(ValueError, match="no pixels"):
            multi_scale_select(video, ann, 1, 2)


class TestPrioritize:
    def test_worked_example_partitions(self, worked_ledger):
        parts = prioritize(worked_ledger)
        assert parts.partitions[0] == (BLUE,)
        assert parts.partitions[1] == (GREEN,)
        assert parts.partitions[2] == tuple(sorted((ORANGE, PURPLE, RED)))
        assert parts.membership[BLUE] == (1, 2, 3)

    def test_single_element(self, worked_video):
        video, ann = worked_video
        ledger = classify_rgbs(video, ann, sensitive={1})
        ledger.mark_selected({1: {BLUE, ORANGE}})
        parts = prioritize(ledger)
        assert parts.n == 3
        assert parts.partitions[-1] == tuple(sorted((BLUE, ORANGE)))
        assert all(not p for p in parts.partitions[:-1])

    def test_disjoint_selections(self):
        video, ann = tiny(
            [[(1, 0, 0), (2, 0, 0), (1, 0, 0), (2, 0, 0)]],
            [[1, 2, 0, 0]],
            n=2,
        )
        ledger = classify_rgbs(video, ann)
        ledger.mark_selected({1: {(1, 0, 0)}, 2: {(2, 0, 0)}})
        parts = prioritize(ledger)
        assert parts.partitions[0] == ()
        assert set(parts.partitions[1]) == {(1, 0, 0), (2, 0, 0)}

    def test_partition_sizes_sum_to_union(self, worked_ledger):
        parts = prioritize(worked_ledger)
        union = set().union(*worked_ledger.selected_sets.values())
        assert sum(len(p) for p in parts.partitions) == len(union)

    def test_requires_selection(self, worked_video):
        video, ann = worked_video
        ledger = classify_rgbs(video, ann)
        with pytest.raises(ValueError, match="selection has not run"):
            prioritize(ledger)
