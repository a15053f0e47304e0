"""Pixel sampling: suppress element-exclusive colors, retain background-only
colors, and draw a bounded uniform subset of each selected shared color.

The output count bound for a shared color is the largest x such that for
every member element j

    C(c, x) / C(c - c_j, x) <= exp(eps_rgb)

where c is the color's total count and c_j its count inside element j. The
ratio is monotone in both x and c_j, so only the largest member count binds
and the maximum is found by binary search. Ratios are evaluated in log space
with log-gamma; beyond x = c - max_j c_j the denominator binomial vanishes
and the ratio is treated as infinite.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma

import numpy as np

from . import rng
from .analysis import CASE_RETAIN, CASE_SAMPLE, CASE_SUPPRESS, RgbLedger
from .budget import BudgetAllocation
from .model import Rgb, SampledVideo, VeAnnotation, Video


def log_binom(n: int, k: int) -> float:
    if k < 0 or k > n:
        raise ValueError(f"C({n}, {k}) is undefined here")
    return lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1)


def log_ratio(c_total: int, c_ve: int, x: int) -> float:
    """log of C(c_total, x) / C(c_total - c_ve, x); inf when x pixels cannot
    be drawn from the c_total - c_ve occurrences left without the element."""
    if x > c_total - c_ve:
        return float("inf")
    return log_binom(c_total, x) - log_binom(c_total - c_ve, x)


def max_output_count(c_total: int, per_ve_counts, eps_rgb: float) -> int:
    """Largest output count satisfying the ratio bound for every member."""
    if eps_rgb <= 0:
        return 0
    counts = list(per_ve_counts.values()) if isinstance(per_ve_counts, dict) \
        else list(per_ve_counts)
    if any(c < 0 or c > c_total for c in counts):
        raise ValueError("member counts must lie in [0, c_total]")
    worst = max(counts, default=0)
    if worst == 0:
        return c_total  # the ratio is identically 1
    lo, hi = 0, c_total - worst  # feasible domain of the ratio
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if log_ratio(c_total, worst, mid) <= eps_rgb:
            lo = mid
        else:
            hi = mid - 1
    return lo


@dataclass(frozen=True)
class SampleBound:
    rgb: Rgb
    c_total: int
    per_ve: dict[int, int]
    eps_rgb: float
    max_out: int

    def to_dict(self) -> dict:
        return {
            "rgb": list(self.rgb),
            "c_total": self.c_total,
            "per_ve": {str(j): c for j, c in sorted(self.per_ve.items())},
            "eps_rgb": self.eps_rgb,
            "max_out": self.max_out,
        }


def compute_bounds(ledger: RgbLedger,
                   allocation: BudgetAllocation) -> dict[Rgb, SampleBound]:
    """Max output count for every selected color under its allocated budget."""
    bounds: dict[Rgb, SampleBound] = {}
    for rec in ledger.selected_records():
        eps_rgb = allocation.epsilon_for(rec.rgb)
        x = max_output_count(rec.total, rec.per_ve, eps_rgb)
        bounds[rec.rgb] = SampleBound(
            rgb=rec.rgb, c_total=rec.total, per_ve=dict(rec.per_ve),
            eps_rgb=eps_rgb, max_out=x,
        )
        rec.max_out = x
    return bounds


def draw_subset(seed: int, rgb: Rgb, total: int, x: int) -> np.ndarray:
    """Uniform x-subset of range(total) for one color's substream, sorted.

    This is the only source of randomness in the sampler; the audit replays
    it directly.
    """
    gen = rng.borrow_stream(seed, rng.SAMPLE, rng.pack_rgb(rgb))
    return np.sort(gen.permutation(total)[:x])


def sample_phase1(video: Video, annotation: VeAnnotation, ledger: RgbLedger,
                  allocation: BudgetAllocation, seed: int,
                  bounds: dict[Rgb, SampleBound] | None = None) -> SampledVideo:
    """Draw the sampled video: all retained pixels plus per-color subsets.

    Deterministic in (inputs, seed); each color draws from its own substream,
    so results do not depend on iteration order.
    """
    if bounds is None:
        bounds = compute_bounds(ledger, allocation)
    labels = annotation.labels
    parts_t, parts_a, parts_b, parts_rgb = [], [], [], []
    for rgb in ledger.rgbs():
        rec = ledger.records[rgb]
        if rec.case == CASE_SUPPRESS:
            continue
        if rec.case == CASE_RETAIN:
            chosen = rec.positions
        else:
            if not rec.selected:
                continue
            x = bounds[rgb].max_out
            if x == 0:
                continue
            chosen = rec.positions[draw_subset(seed, rgb, rec.total, x)]
        parts_t.append(chosen[:, 0])
        parts_a.append(chosen[:, 1])
        parts_b.append(chosen[:, 2])
        parts_rgb.append(np.broadcast_to(np.array(rgb, dtype=np.uint8),
                                         (chosen.shape[0], 3)))
    if parts_t:
        t = np.concatenate(parts_t)
        a = np.concatenate(parts_a)
        b = np.concatenate(parts_b)
        colors = np.concatenate(parts_rgb)
        ve = labels[t, a, b]
    else:
        t = a = b = np.empty(0, dtype=np.int32)
        colors = np.empty((0, 3), dtype=np.uint8)
        ve = np.empty(0, dtype=np.uint16)
    return SampledVideo(video.width, video.height, video.frame_count,
                        t, a, b, colors, ve)


def background_median(video: Video, annotation: VeAnnotation) -> np.ndarray:
    """Per-frame, per-channel lower median of background pixels, (T, 3) uint8.

    Frames without background fall back to the global background median, and
    an all-element video falls back to mid-gray.
    """
    out = np.empty((video.frame_count, 3), dtype=np.uint8)
    bg_all = video.pixels[annotation.labels == 0]
    if bg_all.size:
        global_med = np.sort(bg_all, axis=0)[(bg_all.shape[0] - 1) // 2]
    else:
        global_med = np.array([128, 128, 128], dtype=np.uint8)
    for t in range(video.frame_count):
        bg = video.pixels[t][annotation.labels[t] == 0]
        if bg.size:
            out[t] = np.sort(bg, axis=0)[(bg.shape[0] - 1) // 2]
        else:
            out[t] = global_med
    return out


def neighboring_video(video: Video, annotation: VeAnnotation,
                      ve_id: int) -> tuple[Video, VeAnnotation]:
    """The adjacent input without one element: its pixels are painted over
    with the frame's background median and its labels cleared.

    The privacy argument depends only on color counts, never on the filler;
    the audit checks that empirically.
    """
    annotation._check_id(ve_id)
    mask = annotation.labels == ve_id
    pixels = video.pixels.copy()
    fill = background_median(video, annotation)
    for t in range(video.frame_count):
        pixels[t][mask[t]] = fill[t]
    labels = annotation.labels.copy()
    labels[mask] = 0
    return Video(pixels), VeAnnotation(labels, annotation.n)
