"""Iterative fill of unsampled pixels: each element's region and the
background are interpolated separately, never reading across the boundary.

Within a scope the fill proceeds in snapshot passes: a pass computes, for
every missing pixel, the per-channel mean (rounded half to even) of its
4-neighbors that were finalized in earlier passes or sampled outright, so the
result does not depend on traversal order. Frames where an element exists but
has no sampled pixel at all are reconstructed afterwards from its nearest
sampled frames, matching positions through bounding-box-normalized
coordinates. An element with no sampled pixel in any frame is handed to the
background fill instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import SampledVideo, VeAnnotation, Video


class InterpolationError(RuntimeError):
    """A scope ended up with no usable value source anywhere."""


@dataclass
class InterpolationStats:
    passes_by_scope: dict[int, int] = field(default_factory=dict)  # 0 = background
    inserted_frames: dict[int, list[int]] = field(default_factory=dict)
    stuck_filled: int = 0
    merged_into_background: list[int] = field(default_factory=list)

    @property
    def max_passes(self) -> int:
        return max(self.passes_by_scope.values(), default=0)


def _neighbor_sums(values: np.ndarray, mask: np.ndarray):
    """Sum and count of finalized 4-neighbors for every pixel of the stack."""
    t, h, w, _ = values.shape
    nb_sum = np.zeros((t, h, w, 3))
    nb_cnt = np.zeros((t, h, w))
    masked = np.where(mask[..., None], values, 0.0)
    nb_sum[:, 1:, :] += masked[:, :-1, :]
    nb_cnt[:, 1:, :] += mask[:, :-1, :]
    nb_sum[:, :-1, :] += masked[:, 1:, :]
    nb_cnt[:, :-1, :] += mask[:, 1:, :]
    nb_sum[:, :, 1:] += masked[:, :, :-1]
    nb_cnt[:, :, 1:] += mask[:, :, :-1]
    nb_sum[:, :, :-1] += masked[:, :, 1:]
    nb_cnt[:, :, :-1] += mask[:, :, 1:]
    return nb_sum, nb_cnt


def _fill_scope(values: np.ndarray, known: np.ndarray, scope3: np.ndarray) -> tuple[int, np.ndarray]:
    """Snapshot passes over one scope; returns (passes, still-missing mask)."""
    passes = 0
    while True:
        missing = scope3 & ~known
        if not missing.any():
            return passes, missing
        finalized = known & scope3
        nb_sum, nb_cnt = _neighbor_sums(values, finalized)
        fillable = missing & (nb_cnt > 0)
        if not fillable.any():
            return passes, missing
        values[fillable] = np.rint(nb_sum[fillable] / nb_cnt[fillable][:, None])
        known[fillable] = True
        passes += 1


def _bbox(mask2: np.ndarray):
    aa, bb = np.nonzero(mask2)
    return int(aa.min()), int(aa.max()), int(bb.min()), int(bb.max())


def _map_region(values: np.ndarray, source_scope: np.ndarray,
                coords: np.ndarray, target_box) -> np.ndarray:
    """Sample a source frame's region at normalized target coordinates.

    Targets that land on a gap inside the source bounding box take the
    region's mean instead (shapes differ between frames).
    """
    a0, a1, b0, b1 = target_box
    sa0, sa1, sb0, sb1 = _bbox(source_scope)
    th, tw = a1 - a0 + 1, b1 - b0 + 1
    sh, sw = sa1 - sa0 + 1, sb1 - sb0 + 1
    u = (coords[:, 0] - a0 + 0.5) / th
    v = (coords[:, 1] - b0 + 0.5) / tw
    src_a = sa0 + np.minimum((u * sh).astype(np.int64), sh - 1)
    src_b = sb0 + np.minimum((v * sw).astype(np.int64), sw - 1)
    out = values[src_a, src_b].astype(np.float64)
    inside = source_scope[src_a, src_b]
    if not inside.all():
        region_mean = values[source_scope].mean(axis=0)
        out[~inside] = region_mean
    return out


def insert_missing_ve_frames(values: np.ndarray, known: np.ndarray,
                             scope3: np.ndarray, seed_frames: list[int],
                             stats: InterpolationStats, ve_id: int) -> None:
    """Fill frames where the element exists but nothing of it was sampled.

    Sources are the nearest frames (by |dt|) with at least one sampled pixel
    of the element; a tie uses both sides averaged per mapped position. The
    sources must already be fully interpolated.
    """
    frames = np.nonzero(scope3.reshape(scope3.shape[0], -1).any(axis=1))[0]
    seeds = np.array(sorted(seed_frames))
    for t in frames:
        if t in seed_frames:
            continue
        missing = scope3[t] & ~known[t]
        if not missing.any():
            continue
        dist = np.abs(seeds - t)
        nearest = seeds[dist == dist.min()]
        coords = np.stack(np.nonzero(missing), axis=1)
        box = _bbox(scope3[t])
        mapped = [
            _map_region(values[s], scope3[s] & known[s], coords, box)
            for s in nearest[:2]
        ]
        fill = np.rint(np.mean(mapped, axis=0))
        values[t][missing] = fill
        known[t][missing] = True
        stats.inserted_frames.setdefault(ve_id, []).append(int(t))


def _fill_stuck(values: np.ndarray, known: np.ndarray, scope3: np.ndarray,
                missing: np.ndarray, stats: InterpolationStats) -> None:
    """Last resort for scope components with no reachable seed: use the
    frame's finalized scope mean, then the global scope mean."""
    finalized = known & scope3
    if not finalized.any():
        raise InterpolationError("a scope has no sampled pixel anywhere")
    global_mean = np.rint(values[finalized].mean(axis=0))
    for t in np.nonzero(missing.reshape(missing.shape[0], -1).any(axis=1))[0]:
        frame_src = finalized[t]
        fill = np.rint(values[t][frame_src].mean(axis=0)) if frame_src.any() else global_mean
        values[t][missing[t]] = fill
        known[t][missing[t]] = True
        stats.stuck_filled += int(missing[t].sum())


def interpolate_with_stats(sampled: SampledVideo,
                           annotation: VeAnnotation) -> tuple[Video, InterpolationStats]:
    width, height, frames = sampled.dims
    if annotation.dims != (width, height, frames):
        raise ValueError("annotation dimensions do not match the sampled video")
    labels = annotation.labels
    values = sampled.dense_rgb().astype(np.float64)
    known = sampled.known_mask()
    stats = InterpolationStats()

    sampled_mask = sampled.known_mask()
    sampled_labels = set(np.unique(sampled.ve).tolist())
    background3 = labels == 0
    for j in sorted(annotation.ve_ids()):
        scope3 = labels == j
        if not scope3.any():
            continue
        if j not in sampled_labels:
            # Nothing of this element survived sampling: treat its region as
            # background so the fill can draw on the surrounding scene.
            background3 |= scope3
            stats.merged_into_background.append(j)
            continue
        passes, missing = _fill_scope(values, known, scope3)
        stats.passes_by_scope[j] = passes
        if missing.any():
            seed_frames = np.nonzero(
                (scope3 & sampled_mask).reshape(frames, -1).any(axis=1)
            )[0].tolist()
            # Components with seeds elsewhere in their own frame come first,
            # so cross-frame sources below are complete.
            stuck = missing.copy()
            stuck[[t for t in range(frames) if t not in seed_frames]] = False
            if stuck.any():
                _fill_stuck(values, known, scope3, stuck, stats)
            if (scope3 & ~known).any():
                insert_missing_ve_frames(values, known, scope3, seed_frames,
                                         stats, j)

    passes, missing = _fill_scope(values, known, background3)
    stats.passes_by_scope[0] = passes
    if missing.any():
        _fill_stuck(values, known, background3, missing, stats)

    if not known.all():
        raise InterpolationError("interpolation left pixels unfilled")
    return Video(values.astype(np.uint8)), stats


def interpolate(sampled: SampledVideo, annotation: VeAnnotation) -> Video:
    """Produce the dense private video from the sampled pixels."""
    video, _ = interpolate_with_stats(sampled, annotation)
    return video
