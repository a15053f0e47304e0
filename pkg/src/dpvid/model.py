"""Core video model: dense RGB frames, element label maps, sparse sampled pixels.

Conventions used throughout the package:
  * a = row index, b = column index, t = frame index;
  * iteration order is row-major within a frame, frames in order, and RGB
    triples sorted lexicographically, so seeded runs are reproducible;
  * all model types are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

Rgb = tuple[int, int, int]

# Luma weights for the gray metric domain.
_GRAY_W = np.array([0.299, 0.587, 0.114])


def gray_values(rgb: np.ndarray) -> np.ndarray:
    """Normalized [0, 1] gray for an (..., 3) uint8 array."""
    return (np.asarray(rgb, dtype=np.float64) @ _GRAY_W) / 255.0


def pack_keys(rgb: np.ndarray) -> np.ndarray:
    """(..., 3) uint8 -> int32 keys ordered like lexicographic RGB."""
    arr = np.asarray(rgb, dtype=np.int32)
    return (arr[..., 0] << 16) | (arr[..., 1] << 8) | arr[..., 2]


def unpack_key(key: int) -> Rgb:
    return (int(key) >> 16 & 0xFF, int(key) >> 8 & 0xFF, int(key) & 0xFF)


class Video:
    """A dense sequence of RGB frames stored as a (T, H, W, 3) uint8 array."""

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray):
        arr = np.asarray(pixels, dtype=np.uint8)
        if arr.ndim != 4 or arr.shape[3] != 3:
            raise ValueError(f"expected (T, H, W, 3) pixel array, got {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("a video needs at least one frame")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Video is immutable")

    @classmethod
    def from_frames(cls, frames) -> "Video":
        return cls(np.stack([np.asarray(f, dtype=np.uint8) for f in frames]))

    @property
    def frame_count(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.width, self.height, self.frame_count)

    def frame(self, t: int) -> np.ndarray:
        return self.pixels[t]

    def gray(self) -> np.ndarray:
        return gray_values(self.pixels)

    def __eq__(self, other) -> bool:
        return isinstance(other, Video) and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.dims, self.pixels.tobytes()))


def pixel_count(video) -> int:
    """Total number of pixels; accepts anything exposing the three dims."""
    return video.width * video.height * video.frame_count


class VeAnnotation:
    """Per-frame label map: 0 is background, j in [1, n] is visual element j."""

    __slots__ = ("labels", "n")

    def __init__(self, labels: np.ndarray, n: int):
        arr = np.asarray(labels, dtype=np.uint16)
        if arr.ndim != 3:
            raise ValueError(f"expected (T, H, W) label array, got {arr.shape}")
        if n < 0 or (arr.size and int(arr.max()) > n):
            raise ValueError(f"label {int(arr.max())} exceeds declared element count {n}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "labels", arr)
        object.__setattr__(self, "n", int(n))

    def __setattr__(self, name, value):
        raise AttributeError("VeAnnotation is immutable")

    @classmethod
    def background_only(cls, width: int, height: int, frame_count: int) -> "VeAnnotation":
        return cls(np.zeros((frame_count, height, width), dtype=np.uint16), 0)

    @property
    def dims(self) -> tuple[int, int, int]:
        t, h, w = self.labels.shape
        return (w, h, t)

    def ve_ids(self) -> range:
        return range(1, self.n + 1)

    def mass(self, ve_id: int) -> int:
        """Total pixel count of one element over all frames."""
        self._check_id(ve_id)
        return int(np.count_nonzero(self.labels == ve_id))

    def is_empty(self, ve_id: int) -> bool:
        return self.mass(ve_id) == 0

    def _check_id(self, ve_id: int) -> None:
        if not 1 <= ve_id <= self.n:
            raise ValueError(f"unknown visual element id {ve_id} (have 1..{self.n})")

    def congruent_with(self, video: Video) -> bool:
        return self.labels.shape == video.pixels.shape[:3]

    def restrict_to(self, sensitive) -> "VeAnnotation":
        """Relabel elements outside `sensitive` as background; n is kept."""
        keep = np.zeros(self.n + 1, dtype=bool)
        for j in sensitive:
            self._check_id(j)
            keep[j] = True
        labels = np.where(keep[self.labels], self.labels, 0)
        return VeAnnotation(labels, self.n)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, VeAnnotation)
            and self.n == other.n
            and np.array_equal(self.labels, other.labels)
        )

    def __hash__(self):
        return hash((self.n, self.labels.tobytes()))


@dataclass(frozen=True)
class FrameExtent:
    """One frame's slice of an element: pixel coordinates and bounding box."""

    coords: np.ndarray  # (K, 2) int32 rows of (a, b), row-major order
    bbox: tuple[int, int, int, int] | None  # (a_min, a_max, b_min, b_max) inclusive

    @property
    def empty(self) -> bool:
        return self.coords.shape[0] == 0


def ve_extent(annotation: VeAnnotation, ve_id: int) -> list[FrameExtent]:
    """Per-frame coordinates and bounding boxes of one element.

    Frames where the element is absent get an empty extent.
    """
    annotation._check_id(ve_id)
    out = []
    for t in range(annotation.labels.shape[0]):
        aa, bb = np.nonzero(annotation.labels[t] == ve_id)
        if aa.size == 0:
            out.append(FrameExtent(np.empty((0, 2), dtype=np.int32), None))
        else:
            coords = np.stack([aa, bb], axis=1).astype(np.int32)
            bbox = (int(aa.min()), int(aa.max()), int(bb.min()), int(bb.max()))
            out.append(FrameExtent(coords, bbox))
    return out


class SampledVideo:
    """Sparse set of retained pixels: coordinates, frame, RGB and element id.

    Entries are kept sorted by (t, a, b); no two entries share a position.
    """

    __slots__ = ("width", "height", "frame_count", "t", "a", "b", "rgb", "ve")

    def __init__(self, width, height, frame_count, t, a, b, rgb, ve):
        t = np.asarray(t, dtype=np.int32)
        a = np.asarray(a, dtype=np.int32)
        b = np.asarray(b, dtype=np.int32)
        rgb = np.asarray(rgb, dtype=np.uint8).reshape(-1, 3)
        ve = np.asarray(ve, dtype=np.uint16)
        n = t.shape[0]
        if not (a.shape[0] == b.shape[0] == rgb.shape[0] == ve.shape[0] == n):
            raise ValueError("entry arrays must share one length")
        if n:
            if t.min() < 0 or t.max() >= frame_count:
                raise ValueError("frame index out of range")
            if a.min() < 0 or a.max() >= height or b.min() < 0 or b.max() >= width:
                raise ValueError("pixel coordinate out of range")
        order = np.lexsort((b, a, t))
        t, a, b, rgb, ve = t[order], a[order], b[order], rgb[order], ve[order]
        if n > 1:
            flat = (t.astype(np.int64) * height + a) * width + b
            if np.any(np.diff(flat) == 0):
                raise ValueError("duplicate pixel position")
        for arr in (t, a, b, rgb, ve):
            arr.flags.writeable = False
        object.__setattr__(self, "width", int(width))
        object.__setattr__(self, "height", int(height))
        object.__setattr__(self, "frame_count", int(frame_count))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "ve", ve)

    def __setattr__(self, name, value):
        raise AttributeError("SampledVideo is immutable")

    @classmethod
    def empty(cls, width: int, height: int, frame_count: int) -> "SampledVideo":
        z = np.empty(0, dtype=np.int32)
        return cls(width, height, frame_count, z, z, z,
                   np.empty((0, 3), dtype=np.uint8), np.empty(0, dtype=np.uint16))

    @classmethod
    def from_video(cls, video: Video, annotation: VeAnnotation | None = None) -> "SampledVideo":
        """All pixels of a video as a (trivially complete) sampled video."""
        tt, aa, bb = np.indices(video.pixels.shape[:3]).reshape(3, -1)
        rgb = video.pixels.reshape(-1, 3)
        if annotation is None:
            ve = np.zeros(tt.shape[0], dtype=np.uint16)
        else:
            if not annotation.congruent_with(video):
                raise ValueError("annotation dimensions do not match the video")
            ve = annotation.labels.reshape(-1)
        return cls(video.width, video.height, video.frame_count, tt, aa, bb, rgb, ve)

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.width, self.height, self.frame_count)

    def entries(self) -> set[tuple]:
        return {
            (int(t), int(a), int(b), (int(r), int(g), int(bl)), int(v))
            for t, a, b, (r, g, bl), v in zip(self.t, self.a, self.b, self.rgb, self.ve)
        }

    def known_mask(self) -> np.ndarray:
        mask = np.zeros((self.frame_count, self.height, self.width), dtype=bool)
        mask[self.t, self.a, self.b] = True
        return mask

    def dense_rgb(self, fill: int = 0) -> np.ndarray:
        dense = np.full((self.frame_count, self.height, self.width, 3), fill, dtype=np.uint8)
        dense[self.t, self.a, self.b] = self.rgb
        return dense

    def to_video(self) -> Video:
        """Densify a complete sampled video; missing pixels are an error."""
        if len(self) != self.frame_count * self.height * self.width:
            raise ValueError("sampled video has missing pixels; interpolate first")
        return Video(self.dense_rgb())

    def rgb_counts(self) -> dict[Rgb, int]:
        keys, counts = np.unique(pack_keys(self.rgb), return_counts=True)
        return {unpack_key(k): int(c) for k, c in zip(keys, counts)}

    def ve_frame_counts(self) -> dict[tuple[int, int], int]:
        """(ve_id, frame) -> number of retained pixels, elements only."""
        out: dict[tuple[int, int], int] = {}
        mask = self.ve > 0
        if mask.any():
            pairs = np.stack([self.ve[mask].astype(np.int64), self.t[mask]], axis=1)
            uniq, counts = np.unique(pairs, axis=0, return_counts=True)
            for (j, t), c in zip(uniq, counts):
                out[(int(j), int(t))] = int(c)
        return out

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SampledVideo)
            and self.dims == other.dims
            and len(self) == len(other)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.rgb, other.rgb)
            and np.array_equal(self.ve, other.ve)
        )

    def __hash__(self):
        return hash((self.dims, self.t.tobytes(), self.rgb.tobytes()))


def rgb_histogram(video: Video, annotation: VeAnnotation | None = None,
                  ve_id: int | None = None) -> dict[Rgb, int]:
    """Counts per distinct RGB, optionally restricted to one element's pixels."""
    if ve_id is not None:
        if annotation is None:
            raise ValueError("an annotation is required to filter by element")
        if not annotation.congruent_with(video):
            raise ValueError("annotation dimensions do not match the video")
        annotation._check_id(ve_id)
        pixels = video.pixels[annotation.labels == ve_id]
    else:
        if annotation is not None and not annotation.congruent_with(video):
            raise ValueError("annotation dimensions do not match the video")
        pixels = video.pixels.reshape(-1, 3)
    keys, counts = np.unique(pack_keys(pixels), return_counts=True)
    return {unpack_key(k): int(c) for k, c in zip(keys, counts)}
