"""RGB bookkeeping: case classification, representative-color selection per
visual element, and prioritization of selected colors into partitions.

Every distinct RGB of the input falls into exactly one case:
  1. exclusive to one element            -> suppressed outright,
  2. background only                     -> retained outright,
  3. inside an element and also outside  -> sampled under a privacy budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import Rgb, VeAnnotation, Video, pack_keys, unpack_key

CASE_SUPPRESS = 1
CASE_RETAIN = 2
CASE_SAMPLE = 3


@dataclass
class RgbRecord:
    """Per-color ledger entry; budget and max_out are filled by later stages."""

    rgb: Rgb
    total: int                       # occurrences in the whole video
    per_ve: dict[int, int]           # element id -> occurrences inside it
    case: int
    positions: np.ndarray            # (total, 3) int32 rows (t, a, b), sorted
    selected: bool = False
    budget: Fraction | None = None   # allocated share of epsilon
    max_out: int | None = None       # largest safe output count

    @property
    def member_ves(self) -> tuple[int, ...]:
        return tuple(sorted(self.per_ve))


@dataclass
class RgbLedger:
    records: dict[Rgb, RgbRecord]
    n: int                            # declared element count
    sensitive: frozenset[int]
    ve_mass: dict[int, int]           # element id -> total pixel count
    dims: tuple[int, int, int]        # (width, height, frame_count)
    selected_sets: dict[int, set[Rgb]] | None = None  # None until selection ran

    def rgbs(self) -> list[Rgb]:
        return sorted(self.records)

    def by_case(self, case: int) -> list[RgbRecord]:
        return [self.records[c] for c in self.rgbs() if self.records[c].case == case]

    def selected_records(self) -> list[RgbRecord]:
        return [self.records[c] for c in self.rgbs() if self.records[c].selected]

    def nonempty_ves(self) -> list[int]:
        return [j for j in sorted(self.ve_mass) if self.ve_mass[j] > 0]

    def require_selection(self) -> dict[int, set[Rgb]]:
        if self.selected_sets is None:
            raise ValueError("selection has not run yet")
        return self.selected_sets

    def mark_selected(self, selected_sets: dict[int, set[Rgb]]) -> None:
        self.selected_sets = {j: set(s) for j, s in selected_sets.items()}
        chosen = set().union(*self.selected_sets.values()) if self.selected_sets else set()
        for rec in self.records.values():
            rec.selected = rec.rgb in chosen


def classify_rgbs(video: Video, annotation: VeAnnotation,
                  sensitive=None) -> RgbLedger:
    """Build the ledger over all distinct RGBs of the video.

    Pixels of non-sensitive elements count as background, so their colors can
    only land in cases 2 and 3.
    """
    if not annotation.congruent_with(video):
        raise ValueError("annotation dimensions do not match the video")
    if sensitive is None:
        sensitive = frozenset(annotation.ve_ids())
    else:
        sensitive = frozenset(sensitive)
        for j in sensitive:
            annotation._check_id(j)

    labels = annotation.labels.reshape(-1)
    if sensitive != frozenset(annotation.ve_ids()):
        keep = np.zeros(annotation.n + 1, dtype=bool)
        keep[list(sensitive)] = True
        labels = np.where(keep[labels], labels, 0)

    keys = pack_keys(video.pixels.reshape(-1, 3))
    order = np.argsort(keys, kind="stable")  # stable keeps (t, a, b) order in groups
    sorted_keys = keys[order]
    uniq, starts, counts = np.unique(sorted_keys, return_index=True, return_counts=True)

    t_h_w = video.pixels.shape[:3]
    flat = order  # flattened row-major index equals ((t * H) + a) * W + b
    tt = flat // (t_h_w[1] * t_h_w[2])
    rem = flat % (t_h_w[1] * t_h_w[2])
    aa = rem // t_h_w[2]
    bb = rem % t_h_w[2]
    positions_all = np.stack([tt, aa, bb], axis=1).astype(np.int32)

    per_ve_by_key: dict[int, dict[int, int]] = {int(k): {} for k in uniq}
    for j in sorted(sensitive):
        mask = labels == j
        if not mask.any():
            continue
        k_j, c_j = np.unique(keys[mask], return_counts=True)
        for k, c in zip(k_j, c_j):
            per_ve_by_key[int(k)][j] = int(c)

    records: dict[Rgb, RgbRecord] = {}
    for k, start, count in zip(uniq, starts, counts):
        rgb = unpack_key(int(k))
        per_ve = per_ve_by_key[int(k)]
        total = int(count)
        if not per_ve:
            case = CASE_RETAIN
        elif len(per_ve) == 1 and next(iter(per_ve.values())) == total:
            case = CASE_SUPPRESS
        else:
            case = CASE_SAMPLE
        records[rgb] = RgbRecord(
            rgb=rgb,
            total=total,
            per_ve=per_ve,
            case=case,
            positions=positions_all[start:start + count],
        )

    ve_mass = {j: int(np.count_nonzero(labels == j)) for j in sorted(sensitive)}
    return RgbLedger(
        records=records,
        n=annotation.n,
        sensitive=sensitive,
        ve_mass=ve_mass,
        dims=(video.width, video.height, video.frame_count),
    )


def _cell_edges(lo: int, hi: int, parts: int) -> list[tuple[int, int]]:
    """Split the inclusive range [lo, hi] into `parts` near-equal intervals."""
    length = hi - lo + 1
    base, extra = divmod(length, parts)
    edges = []
    start = lo
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        if size == 0:
            continue
        edges.append((start, start + size - 1))
        start += size
    return edges


def multi_scale_select(video: Video, annotation: VeAnnotation, ve_id: int,
                       k: int, ledger: RgbLedger | None = None) -> set[Rgb]:
    """Pick at most k representative colors for one element.

    Per frame, the element's bounding box is split into a ceil(sqrt(k)) grid;
    the k most populated cells each nominate their most frequent non-exclusive
    color. Nominees are ranked by their total in-element count and the top k
    survive. Exclusive (case 1) colors are never selected: they are suppressed
    regardless. Ties always resolve to the lexicographically smallest RGB.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    annotation._check_id(ve_id)
    if ledger is None:
        ledger = classify_rgbs(video, annotation)
    if ledger.ve_mass.get(ve_id, 0) == 0:
        raise ValueError(f"element {ve_id} has no pixels")

    grid = math.isqrt(k)
    if grid * grid < k:
        grid += 1

    suppressed = {
        rgb for rgb, rec in ledger.records.items() if rec.case == CASE_SUPPRESS
    }
    winners: set[Rgb] = set()
    labels = annotation.labels
    for t in range(video.frame_count):
        mask = labels[t] == ve_id
        if not mask.any():
            continue
        aa, bb = np.nonzero(mask)
        a0, a1 = int(aa.min()), int(aa.max())
        b0, b1 = int(bb.min()), int(bb.max())
        cells = []
        for ci, (ra0, ra1) in enumerate(_cell_edges(a0, a1, grid)):
            for cj, (cb0, cb1) in enumerate(_cell_edges(b0, b1, grid)):
                inside = (aa >= ra0) & (aa <= ra1) & (bb >= cb0) & (bb <= cb1)
                pop = int(inside.sum())
                if pop:
                    cells.append((-pop, ci, cj, inside))
        cells.sort(key=lambda c: c[:3])
        for _, _, _, inside in cells[:k]:
            colors = video.pixels[t][aa[inside], bb[inside]]
            keys, counts = np.unique(pack_keys(colors), return_counts=True)
            best: Rgb | None = None
            best_count = 0
            for key, count in zip(keys, counts):  # keys ascend: ties go lexicographic
                rgb = unpack_key(int(key))
                if rgb in suppressed:
                    continue
                if count > best_count:
                    best, best_count = rgb, int(count)
            if best is not None:
                winners.add(best)

    ranked = sorted(winners, key=lambda rgb: (-ledger.records[rgb].per_ve[ve_id], rgb))
    return set(ranked[:k])


def select_representatives(video: Video, annotation: VeAnnotation,
                           ledger: RgbLedger, k_by_ve: dict[int, int]) -> None:
    """Run selection for every non-empty element and record it in the ledger."""
    selected: dict[int, set[Rgb]] = {}
    for j in ledger.nonempty_ves():
        selected[j] = multi_scale_select(video, annotation, j, k_by_ve[j], ledger)
    ledger.mark_selected(selected)


@dataclass(frozen=True)
class Partitioning:
    """Selected colors grouped by how many elements selected them.

    Partition index l (1-based) holds colors selected by exactly n - l + 1
    elements, so the first partition is the most shared and the last holds
    the element-exclusive colors.
    """

    n: int
    partitions: tuple[tuple[Rgb, ...], ...]
    membership: dict[Rgb, tuple[int, ...]]

    def all_rgbs(self) -> list[Rgb]:
        return [rgb for part in self.partitions for rgb in part]


def prioritize(ledger: RgbLedger) -> Partitioning:
    """Group the union of selected colors into the n sharing partitions."""
    selected_sets = ledger.require_selection()
    n = ledger.n
    membership: dict[Rgb, tuple[int, ...]] = {}
    for j, chosen in sorted(selected_sets.items()):
        for rgb in chosen:
            membership.setdefault(rgb, ())
            membership[rgb] = tuple(sorted(set(membership[rgb]) | {j}))
    partitions: list[tuple[Rgb, ...]] = []
    for level in range(1, n + 1):
        want = n - level + 1
        partitions.append(tuple(sorted(
            rgb for rgb, js in membership.items() if len(js) == want
        )))
    return Partitioning(n=n, partitions=tuple(partitions), membership=membership)
