"""Synthetic scenario generator: a static textured background plus moving
rectangular elements, with ground truth for stay-time and count queries.

Colors are laid out so the three sampling cases all occur by construction:
each element mixes colors of its own (suppressed), colors borrowed from the
background palette (sampled under budget), and the rest of the scene keeps
background-only colors (retained). Everything derives from the seed, so a
scenario can be regenerated bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .io import Manifest, save_manifest, save_masks, save_video
from .model import VeAnnotation, Video

# Background colors live in the low-red region, element-unique colors in the
# high-red region, so the two pools can never collide.
_BG_RED_MAX = 120
_VE_RED_MIN = 128


@dataclass(frozen=True)
class ScenarioSpec:
    width: int = 48
    height: int = 48
    frame_count: int = 24
    ve_count: int = 6
    ve_height: int = 5
    ve_width: int = 5
    palette_unique: int = 4        # element-only colors per element
    palette_shared: int = 4        # background colors reused inside an element
    background_colors: int = 48
    max_speed: float = 1.0         # pixels per frame, per axis
    stay_min: int = 8
    stay_max: int = 20
    name: str = "custom"

    def validate(self) -> None:
        if self.ve_height > self.height or self.ve_width > self.width:
            raise ValueError("element larger than the frame")
        if not 1 <= self.stay_min <= self.stay_max <= self.frame_count:
            raise ValueError("stay range must fit the frame count")
        if self.background_colors < self.palette_shared:
            raise ValueError("not enough background colors to share")
        if self.ve_count > 0 and (self.palette_unique + self.palette_shared) < 1:
            raise ValueError("elements need at least one color")


def ped_mini(frame_count: int = 32) -> ScenarioSpec:
    """Many slow walkers with long stays."""
    return ScenarioSpec(
        width=64, height=48, frame_count=frame_count, ve_count=12,
        ve_height=6, ve_width=4, palette_unique=4, palette_shared=4,
        background_colors=64, max_speed=0.6,
        stay_min=max(frame_count // 2, 1), stay_max=frame_count,
        name="ped-mini",
    )


def veh_mini(frame_count: int = 32) -> ScenarioSpec:
    """More, faster elements with short stays."""
    return ScenarioSpec(
        width=64, height=48, frame_count=frame_count, ve_count=16,
        ve_height=4, ve_width=7, palette_unique=3, palette_shared=3,
        background_colors=64, max_speed=2.5,
        stay_min=max(frame_count // 6, 1), stay_max=max(frame_count // 3, 1),
        name="veh-mini",
    )


PRESETS = {"ped-mini": ped_mini, "veh-mini": veh_mini}


def _background_palette(count: int) -> np.ndarray:
    idx = np.arange(count)
    r = (16 + idx * 7) % (_BG_RED_MAX + 1)
    g = (40 + idx * 23) % 256
    b = (90 + idx * 61) % 256
    return np.stack([r, g, b], axis=1).astype(np.uint8)


def _unique_palette(ve_id: int, count: int) -> np.ndarray:
    idx = np.arange(count)
    r = _VE_RED_MIN + (ve_id * 5 + idx // 32) % (256 - _VE_RED_MIN)
    g = (ve_id * 37 + idx * 11) % 256
    b = (ve_id * 101 + idx * 53) % 256
    return np.stack([r, g, b], axis=1).astype(np.uint8)


@dataclass(frozen=True)
class GroundTruth:
    stay_frames: dict[int, list[int]]   # element -> frames where it is visible
    counts_per_frame: list[int]

    def stay_times(self) -> dict[int, int]:
        return {j: len(f) for j, f in self.stay_frames.items() if f}

    def to_dict(self) -> dict:
        return {
            "stay_frames": {str(j): f for j, f in sorted(self.stay_frames.items())},
            "stay_times": {str(j): len(f) for j, f in sorted(self.stay_frames.items())},
            "counts_per_frame": self.counts_per_frame,
        }


def synthesize(spec: ScenarioSpec, seed: int) -> tuple[Video, VeAnnotation, GroundTruth]:
    spec.validate()
    gen = rng.substream(seed, rng.SCENARIO)

    bg_palette = _background_palette(spec.background_colors)
    aa, bb = np.meshgrid(np.arange(spec.height), np.arange(spec.width), indexing="ij")
    tile = ((aa // 2) * 7 + (bb // 2) * 3) % spec.background_colors
    background = bg_palette[tile]

    pixels = np.broadcast_to(
        background, (spec.frame_count, spec.height, spec.width, 3)
    ).copy()
    labels = np.zeros((spec.frame_count, spec.height, spec.width), dtype=np.uint16)

    local = np.arange(spec.ve_height * spec.ve_width)
    for j in range(1, spec.ve_count + 1):
        uniq = _unique_palette(j, max(spec.palette_unique, 1))
        shared_idx = gen.choice(spec.background_colors,
                                size=spec.palette_shared, replace=False)
        shared = bg_palette[np.sort(shared_idx)]
        palette = np.concatenate([p for p in (uniq[: spec.palette_unique], shared)
                                  if p.size]) if spec.palette_unique else shared
        sprite = palette[local % len(palette)].reshape(
            spec.ve_height, spec.ve_width, 3
        )

        stay = int(gen.integers(spec.stay_min, spec.stay_max + 1))
        t0 = int(gen.integers(0, spec.frame_count - stay + 1))
        a0 = float(gen.integers(0, spec.height - spec.ve_height + 1))
        b0 = float(gen.integers(0, spec.width - spec.ve_width + 1))
        va = float(gen.uniform(-spec.max_speed, spec.max_speed))
        vb = float(gen.uniform(-spec.max_speed, spec.max_speed))
        for f in range(t0, t0 + stay):
            a = int(np.clip(round(a0 + va * (f - t0)), 0, spec.height - spec.ve_height))
            b = int(np.clip(round(b0 + vb * (f - t0)), 0, spec.width - spec.ve_width))
            pixels[f, a:a + spec.ve_height, b:b + spec.ve_width] = sprite
            labels[f, a:a + spec.ve_height, b:b + spec.ve_width] = j

    video = Video(pixels)
    annotation = VeAnnotation(labels, spec.ve_count)

    # Ground truth is recounted from the final masks: a later element can
    # fully occlude an earlier one in a frame.
    stay_frames = {
        j: [int(t) for t in range(spec.frame_count)
            if bool((labels[t] == j).any())]
        for j in range(1, spec.ve_count + 1)
    }
    counts = [
        int(len(set(np.unique(labels[t])) - {0})) for t in range(spec.frame_count)
    ]
    return video, annotation, GroundTruth(stay_frames=stay_frames, counts_per_frame=counts)


def write_scenario(spec: ScenarioSpec, seed: int, directory) -> Manifest:
    """Materialize frames, masks, manifest and ground truth on disk."""
    from pathlib import Path

    from .io import save_json

    directory = Path(directory)
    video, annotation, truth = synthesize(spec, seed)
    save_video(video, directory / "frames")
    save_masks(annotation, directory / "masks")
    manifest = Manifest(
        width=spec.width, height=spec.height, frame_count=spec.frame_count,
        frame_pattern="frames/{t:04d}.ppm", mask_pattern="masks/{t:04d}.pgm",
        ve_count=spec.ve_count, root=directory,
    )
    save_manifest(manifest, directory / "manifest.json")
    save_json(
        {"scenario": spec.name, "seed": seed, **truth.to_dict()},
        directory / "ground_truth.json",
    )
    return manifest
