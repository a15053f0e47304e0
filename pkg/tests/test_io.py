import struct
from fractions import Fraction

import numpy as np
import pytest

from dpvid.io import (FormatError, Manifest, RunConfig, dump_json, load_config,
                      load_manifest, load_masks, load_sampled, load_video,
                      read_ppm, save_config, save_manifest, save_masks,
                      save_sampled, save_video, write_pgm16, write_ppm)
from dpvid.model import SampledVideo, VeAnnotation, Video


def rand_video(seed, frames=8, h=16, w=16):
    gen = np.random.default_rng(seed)
    return Video(gen.integers(0, 256, size=(frames, h, w, 3), dtype=np.uint8))


def write_scene(tmp_path, video, labels=None, ve_count=0):
    save_video(video, tmp_path / "frames")
    mask_pattern = None
    if labels is not None:
        save_masks(VeAnnotation(labels, ve_count), tmp_path / "masks")
        mask_pattern = "masks/{t:04d}.pgm"
    manifest = Manifest(
        width=video.width, height=video.height, frame_count=video.frame_count,
        frame_pattern="frames/{t:04d}.ppm", mask_pattern=mask_pattern,
        ve_count=ve_count, root=tmp_path,
    )
    save_manifest(manifest, tmp_path / "manifest.json")
    return load_manifest(tmp_path / "manifest.json")


class TestPpm:
    def test_minimal_file(self, tmp_path):
        raw = b"P6\n2 2\n255\n" + bytes(range(12))
        (tmp_path / "f.ppm").write_bytes(raw)
        frame = read_ppm(tmp_path / "f.ppm")
        assert frame.shape == (2, 2, 3)
        assert frame[1, 1].tolist() == [9, 10, 11]

    def test_round_trip(self, tmp_path):
        video = rand_video(0)
        manifest = write_scene(tmp_path, video)
        assert load_video(manifest) == video

    def test_missing_frame(self, tmp_path):
        video = rand_video(1, frames=3)
        manifest = write_scene(tmp_path, video)
        (tmp_path / "frames" / "0002.ppm").unlink()
        with pytest.raises(FormatError, match="missing frame 2"):
            load_video(manifest)

    def test_dimension_mismatch(self, tmp_path):
        video = rand_video(2, h=8, w=8)
        manifest = write_scene(tmp_path, video)
        bad = Manifest(width=9, height=8, frame_count=manifest.frame_count,
                       frame_pattern=manifest.frame_pattern, mask_pattern=None,
                       ve_count=0, root=tmp_path)
        with pytest.raises(FormatError, match="declares 9x8"):
            load_video(bad)

    def test_malformed_header(self, tmp_path):
        (tmp_path / "f.ppm").write_bytes(b"P5\n2 2\n255\n" + bytes(12))
        with pytest.raises(FormatError, match="expected P6"):
            read_ppm(tmp_path / "f.ppm")
        (tmp_path / "g.ppm").write_bytes(b"P6\n2 x\n255\n" + bytes(12))
        with pytest.raises(FormatError, match="malformed header"):
            read_ppm(tmp_path / "g.ppm")

    def test_wrong_maxval(self, tmp_path):
        (tmp_path / "f.ppm").write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
        with pytest.raises(FormatError, match="maxval"):
            read_ppm(tmp_path / "f.ppm")

    def test_comment_in_header(self, tmp_path):
        raw = b"P6\n# a comment\n2 1 255\n" + bytes(6)
        (tmp_path / "f.ppm").write_bytes(raw)
        assert read_ppm(tmp_path / "f.ppm").shape == (1, 2, 3)


class TestMasks:
    def test_round_trip(self, tmp_path):
        labels = np.zeros((2, 4, 4), np.uint16)
        labels[0, 0, 0] = 1
        labels[1, 2:, 2:] = 2
        manifest = write_scene(tmp_path, rand_video(3, frames=2, h=4, w=4),
                               labels, ve_count=2)
        ann = load_masks(manifest)
        assert np.array_equal(ann.labels, labels)
        assert ann.n == 2

    def test_label_exceeds_declared(self, tmp_path):
        labels = np.zeros((1, 4, 4), np.uint16)
        labels[0, 0, 0] = 3
        manifest = write_scene(tmp_path, rand_video(4, frames=1, h=4, w=4),
                               labels, ve_count=3)
        bad = Manifest(width=4, height=4, frame_count=1,
                       frame_pattern=manifest.frame_pattern,
                       mask_pattern=manifest.mask_pattern,
                       ve_count=2, root=tmp_path)
        with pytest.raises(FormatError, match="exceeds declared"):
            load_masks(bad)

    def test_gap_warns_but_loads(self, tmp_path):
        labels = np.zeros((1, 4, 4), np.uint16)
        labels[0, 0, 0] = 1
        labels[0, 1, 1] = 3
        manifest = write_scene(tmp_path, rand_video(5, frames=1, h=4, w=4),
                               labels, ve_count=3)
        with pytest.warns(UserWarning, match=r"\[2\] declared but absent"):
            ann = load_masks(manifest)
        assert ann.mass(2) == 0

    def test_big_endian_samples(self, tmp_path):
        write_pgm16(tmp_path / "m.pgm", np.array([[258]], np.uint16))
        raw = (tmp_path / "m.pgm").read_bytes()
        assert raw.endswith(b"\x01\x02")  # 258 = 0x0102 big-endian


class TestVdps:
    def test_empty_is_header_only(self, tmp_path):
        save_sampled(SampledVideo.empty(4, 4, 2), tmp_path / "s.vdps")
        assert (tmp_path / "s.vdps").stat().st_size == 24

    def test_round_trip(self, tmp_path):
        video = rand_video(6, frames=3, h=5, w=7)
        lab = np.zeros((3, 5, 7), np.uint16)
        lab[0, 0, :3] = 1
        sampled = SampledVideo.from_video(video, VeAnnotation(lab, 1))
        save_sampled(sampled, tmp_path / "s.vdps")
        loaded = load_sampled(tmp_path / "s.vdps")
        assert loaded == sampled
        assert loaded.entries() == sampled.entries()

    def test_out_of_order_rejected(self, tmp_path):
        header = struct.pack("<4sIIIII", b"VDPS", 1, 4, 4, 1, 2)
        entry = struct.Struct("<III3BH")
        body = entry.pack(0, 1, 0, 1, 2, 3, 0) + entry.pack(0, 0, 0, 1, 2, 3, 0)
        (tmp_path / "s.vdps").write_bytes(header + body)
        with pytest.raises(FormatError, match="out of order"):
            load_sampled(tmp_path / "s.vdps")

    def test_truncated_body(self, tmp_path):
        header = struct.pack("<4sIIIII", b"VDPS", 1, 4, 4, 1, 2)
        (tmp_path / "s.vdps").write_bytes(header + b"\x00" * 17)
        with pytest.raises(FormatError, match="expected 2 entries"):
            load_sampled(tmp_path / "s.vdps")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "s.vdps").write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(FormatError, match="bad magic"):
            load_sampled(tmp_path / "s.vdps")


class TestConfig:
    def test_round_trip(self, tmp_path):
        config = RunConfig(epsilon=2.5, seed=99, k_min=2, k_max=9,
                           k_fixed=4, k_solver="single-frame",
                           sensitive_ves=(1, 3), trials=5000, min_pixels=2)
        save_config(config, tmp_path / "run.cfg")
        assert load_config(tmp_path / "run.cfg") == config

    def test_comments_and_blanks(self, tmp_path):
        (tmp_path / "run.cfg").write_text("# hi\n\nepsilon = 1.5\nseed=3\n")
        config = load_config(tmp_path / "run.cfg")
        assert config.epsilon == 1.5 and config.seed == 3

    def test_unknown_key(self, tmp_path):
        (tmp_path / "run.cfg").write_text("nope=1\n")
        with pytest.raises(FormatError, match="unknown config key"):
            load_config(tmp_path / "run.cfg")

    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(epsilon=0)
        with pytest.raises(ValueError):
            RunConfig(k_min=3, k_max=2)
        with pytest.raises(ValueError):
            RunConfig(k_solver="magic")


class TestJson:
    def test_float_precision(self):
        text = dump_json({"x": 0.1})
        assert "0.10000000000000001" in text

    def test_fraction_encoding(self):
        text = dump_json({"share": Fraction(15, 70)})
        assert '"num": 3' in text and '"den": 14' in text

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            dump_json({"x": float("nan")})

    def test_deterministic(self):
        payload = {"a": [1.5, 2, None, True], "b": {"c": (1, 2)}}
        assert dump_json(payload) == dump_json(payload)
