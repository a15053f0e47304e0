"""File formats: P6 frames, 16-bit P5 masks, the VDPS sparse-pixel format,
JSON reports and flat key=value run configuration.

Every loader validates dimensions against what the caller declared; a
mismatch is always an error, never a silent reinterpretation.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .model import SampledVideo, VeAnnotation, Video

VDPS_MAGIC = b"VDPS"
VDPS_VERSION = 1
_VDPS_HEADER = struct.Struct("<4sIIIII")  # magic, version, width, height, frames, entries
_VDPS_ENTRY = struct.Struct("<III3BH")  # t, a, b, r, g, b, ve_id


class FormatError(ValueError):
    """Malformed or inconsistent file content."""


@dataclass(frozen=True)
class Manifest:
    """Locates a video's frame and mask files relative to its own directory."""

    width: int
    height: int
    frame_count: int
    frame_pattern: str  # str.format pattern with {t}, e.g. "frames/{t:04d}.ppm"
    mask_pattern: str | None
    ve_count: int
    root: Path = field(default=Path("."), compare=False)

    def frame_path(self, t: int) -> Path:
        return self.root / self.frame_pattern.format(t=t)

    def mask_path(self, t: int) -> Path:
        if self.mask_pattern is None:
            raise FormatError("manifest declares no mask files")
        return self.root / self.mask_pattern.format(t=t)


def load_manifest(path) -> Manifest:
    path = Path(path)
    data = json.loads(path.read_text())
    try:
        return Manifest(
            width=int(data["width"]),
            height=int(data["height"]),
            frame_count=int(data["frame_count"]),
            frame_pattern=str(data["frame_pattern"]),
            mask_pattern=data.get("mask_pattern"),
            ve_count=int(data.get("ve_count", 0)),
            root=path.parent,
        )
    except KeyError as missing:
        raise FormatError(f"manifest is missing key {missing}") from None


def save_manifest(manifest: Manifest, path) -> None:
    payload = {
        "width": manifest.width,
        "height": manifest.height,
        "frame_count": manifest.frame_count,
        "frame_pattern": manifest.frame_pattern,
        "mask_pattern": manifest.mask_pattern,
        "ve_count": manifest.ve_count,
    }
    Path(path).write_text(dump_json(payload))


K_SOLVER_MODES = ("full", "single-frame", "per-frame-avg")


@dataclass
class RunConfig:
    """Sanitization parameters; every field is mirrored by a CLI flag."""

    epsilon: float = 1.0
    seed: int = 0
    k_min: int = 1
    k_max: int = 8
    k_fixed: int | None = None
    k_solver: str = "full"
    sensitive_ves: tuple[int, ...] | None = None  # None means all elements
    trials: int = 100_000
    min_pixels: int = 1

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.k_min < 1 or self.k_max < self.k_min:
            raise ValueError("need 1 <= k_min <= k_max")
        if self.k_solver not in K_SOLVER_MODES:
            raise ValueError(f"k_solver must be one of {K_SOLVER_MODES}")


_CONFIG_INT_KEYS = {"seed", "k_min", "k_max", "k_fixed", "trials", "min_pixels"}


def load_config(path) -> RunConfig:
    """Parse flat utf-8 key=value lines; blank lines and '#' comments allowed."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "epsilon":
            values[key] = float(value)
        elif key in _CONFIG_INT_KEYS:
            values[key] = int(value)
        elif key == "k_solver":
            values[key] = value
        elif key == "sensitive_ves":
            values[key] = tuple(int(v) for v in value.split(",") if v.strip()) or None
        else:
            raise FormatError(f"{path}:{lineno}: unknown config key {key!r}")
    return RunConfig(**values)


def save_config(config: RunConfig, path) -> None:
    lines = [
        f"epsilon={format_float(config.epsilon)}",
        f"seed={config.seed}",
        f"k_min={config.k_min}",
        f"k_max={config.k_max}",
        f"k_solver={config.k_solver}",
        f"trials={config.trials}",
        f"min_pixels={config.min_pixels}",
    ]
    if config.k_fixed is not None:
        lines.append(f"k_fixed={config.k_fixed}")
    if config.sensitive_ves is not None:
        lines.append("sensitive_ves=" + ",".join(str(v) for v in config.sensitive_ves))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Netpbm frames and masks

def _read_pnm_header(data: bytes, magic: bytes, path) -> tuple[list[int], int]:
    """Parse 'P6'/'P5' header tokens, skipping comments; returns (tokens, offset)."""
    if not data.startswith(magic):
        raise FormatError(f"{path}: expected {magic.decode()} header")
    tokens: list[int] = []
    pos = len(magic)
    while len(tokens) < 3:
        if pos >= len(data):
            raise FormatError(f"{path}: truncated header")
        c = data[pos:pos + 1]
        if c == b"#":
            pos = data.find(b"\n", pos)
            if pos == -1:
                raise FormatError(f"{path}: truncated header comment")
            pos += 1
        elif c in b" \t\r\n":
            pos += 1
        else:
            end = pos
            while end < len(data) and data[end:end + 1] not in b" \t\r\n#":
                end += 1
            tok = data[pos:end]
            if not tok.isdigit():
                raise FormatError(f"{path}: malformed header token {tok!r}")
            tokens.append(int(tok))
            pos = end
    if pos >= len(data) or data[pos:pos + 1] not in b" \t\r\n":
        raise FormatError(f"{path}: missing whitespace after header")
    return tokens, pos + 1


def read_ppm(path) -> np.ndarray:
    """Binary P6, maxval 255 -> (H, W, 3) uint8."""
    path = Path(path)
    data = path.read_bytes()
    (width, height, maxval), offset = _read_pnm_header(data, b"P6", path)
    if maxval != 255:
        raise FormatError(f"{path}: maxval must be 255, got {maxval}")
    expected = width * height * 3
    raw = data[offset:]
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} pixel bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)


def write_ppm(path, frame: np.ndarray) -> None:
    frame = np.ascontiguousarray(frame, dtype=np.uint8)
    height, width, _ = frame.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode())
        fh.write(frame.tobytes())


def read_pgm16(path) -> np.ndarray:
    """Binary P5, maxval 65535, big-endian samples -> (H, W) uint16."""
    path = Path(path)
    data = path.read_bytes()
    (width, height, maxval), offset = _read_pnm_header(data, b"P5", path)
    if maxval != 65535:
        raise FormatError(f"{path}: maxval must be 65535, got {maxval}")
    expected = width * height * 2
    raw = data[offset:]
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} sample bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=">u2").reshape(height, width).astype(np.uint16)


def write_pgm16(path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint16)
    height, width = labels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n65535\n".encode())
        fh.write(labels.astype(">u2").tobytes())


def load_video(manifest: Manifest) -> Video:
    frames = []
    for t in range(manifest.frame_count):
        path = manifest.frame_path(t)
        if not path.exists():
            raise FormatError(f"missing frame {t}: {path}")
        frame = read_ppm(path)
        if frame.shape[:2] != (manifest.height, manifest.width):
            raise FormatError(
                f"frame {t}: got {frame.shape[1]}x{frame.shape[0]}, "
                f"manifest declares {manifest.width}x{manifest.height}"
            )
        frames.append(frame)
    return Video.from_frames(frames)


def load_masks(manifest: Manifest) -> VeAnnotation:
    """Load label maps; ids above ve_count are an error, gaps only a warning."""
    layers = []
    for t in range(manifest.frame_count):
        path = manifest.mask_path(t)
        if not path.exists():
            raise FormatError(f"missing mask {t}: {path}")
        labels = read_pgm16(path)
        if labels.shape != (manifest.height, manifest.width):
            raise FormatError(
                f"mask {t}: got {labels.shape[1]}x{labels.shape[0]}, "
                f"manifest declares {manifest.width}x{manifest.height}"
            )
        layers.append(labels)
    stack = np.stack(layers)
    observed = int(stack.max()) if stack.size else 0
    if observed > manifest.ve_count:
        raise FormatError(
            f"mask label {observed} exceeds declared element count {manifest.ve_count}"
        )
    present = set(np.unique(stack).tolist()) - {0}
    gaps = sorted(set(range(1, manifest.ve_count + 1)) - present)
    if gaps:
        warnings.warn(
            f"element ids {gaps} declared but absent from the masks; "
            "they will be skipped downstream",
            stacklevel=2,
        )
    return VeAnnotation(stack, manifest.ve_count)


def save_video(video: Video, directory, pattern: str = "{t:04d}.ppm") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t in range(video.frame_count):
        write_ppm(directory / pattern.format(t=t), video.frame(t))


def save_masks(annotation: VeAnnotation, directory, pattern: str = "{t:04d}.pgm") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t in range(annotation.labels.shape[0]):
        write_pgm16(directory / pattern.format(t=t), annotation.labels[t])


# ---------------------------------------------------------------------------
# VDPS sparse sampled-pixel format

_VDPS_DTYPE = np.dtype([
    ("t", "<u4"), ("a", "<u4"), ("b", "<u4"), ("rgb", "u1", (3,)), ("ve", "<u2"),
])
assert _VDPS_DTYPE.itemsize == _VDPS_ENTRY.size == 17


def save_sampled(sampled: SampledVideo, path) -> None:
    # Entries are already sorted by (t, a, b) inside SampledVideo.
    entries = np.empty(len(sampled), dtype=_VDPS_DTYPE)
    entries["t"] = sampled.t
    entries["a"] = sampled.a
    entries["b"] = sampled.b
    entries["rgb"] = sampled.rgb
    entries["ve"] = sampled.ve
    with open(path, "wb") as fh:
        fh.write(_VDPS_HEADER.pack(
            VDPS_MAGIC, VDPS_VERSION,
            sampled.width, sampled.height, sampled.frame_count, len(sampled),
        ))
        fh.write(entries.tobytes())


def load_sampled(path) -> SampledVideo:
    data = Path(path).read_bytes()
    if len(data) < _VDPS_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, width, height, frames, count = _VDPS_HEADER.unpack_from(data)
    if magic != VDPS_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VDPS_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = data[_VDPS_HEADER.size:]
    if len(body) != count * _VDPS_ENTRY.size:
        raise FormatError(
            f"{path}: expected {count} entries ({count * _VDPS_ENTRY.size} bytes), "
            f"got {len(body)} bytes"
        )
    entries = np.frombuffer(body, dtype=_VDPS_DTYPE)
    t = entries["t"].astype(np.int64)
    flat = (t * height + entries["a"]) * width + entries["b"]
    if count > 1 and np.any(np.diff(flat) <= 0):
        where = int(np.nonzero(np.diff(flat) <= 0)[0][0]) + 1
        raise FormatError(f"{path}: entries out of order at index {where}")
    return SampledVideo(
        width, height, frames,
        entries["t"].astype(np.int32), entries["a"].astype(np.int32),
        entries["b"].astype(np.int32), entries["rgb"].copy(), entries["ve"].copy(),
    )


# ---------------------------------------------------------------------------
# JSON reports

def format_float(x: float) -> str:
    """17 significant digits: enough to round-trip doubles and diff runs."""
    if x != x or x in (float("inf"), float("-inf")):
        raise ValueError("reports must not contain NaN or infinity")
    return format(x, ".17g")


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, Fraction):
        return {"num": obj.numerator, "den": obj.denominator}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    return obj


def dump_json(obj) -> str:
    """Serialize a report with floats at fixed 17-digit precision."""

    def render(value, indent: int) -> str:
        pad = "  " * indent
        if isinstance(value, dict):
            if not value:
                return "{}"
            items = [
                f'{pad}  {json.dumps(str(k))}: {render(v, indent + 1)}'
                for k, v in value.items()
            ]
            return "{\n" + ",\n".join(items) + f"\n{pad}}}"
        if isinstance(value, (list, tuple)):
            if not value:
                return "[]"
            items = [f"{pad}  {render(v, indent + 1)}" for v in value]
            return "[\n" + ",\n".join(items) + f"\n{pad}]"
        if isinstance(value, bool) or value is None:
            return json.dumps(value)
        if isinstance(value, float):
            return format_float(value)
        if isinstance(value, int):
            return str(value)
        return json.dumps(value)

    return render(_jsonify(obj), 0) + "\n"


def save_json(obj, path) -> None:
    Path(path).write_text(dump_json(obj))


def load_json(path):
    return json.loads(Path(path).read_text())
