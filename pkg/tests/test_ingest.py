"""Ingestion: frame loading, subsampling, resizing, manifests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from advsplat.errors import FrameReadError, NoFramesError, ParameterError
from advsplat.ingest import (
    ImageRecord,
    load_sequence,
    prepare_sequence,
    read_manifest,
    resize_to_input,
    subsample,
    write_manifest,
)


def write_frame(path, value=128, size=(32, 32)):
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.full((size[1], size[0], 3), value, np.uint8)
    Image.fromarray(arr).save(path)


def make_records(count):
    pixels = np.zeros((4, 4, 3), np.uint8)
    return [ImageRecord(id=f"f{i:03d}", class_label="x", frame_index=i, pixels=pixels)
            for i in range(count)]


class TestLoadSequence:
    def test_orders_lexicographically(self, tmp_path):
        for name in ("b.png", "a.png", "c.png"):
            write_frame(tmp_path / name)
        records = load_sequence(tmp_path, "apple")
        assert [r.id for r in records] == ["a", "b", "c"]
        assert [r.frame_index for r in records] == [0, 1, 2]
        assert all(r.split == "unassigned" for r in records)
        assert all(r.class_label == "apple" for r in records)

    def test_singleton(self, tmp_path):
        write_frame(tmp_path / "only.png")
        records = load_sequence(tmp_path, "x")
        assert len(records) == 1
        assert records[0].frame_index == 0

    def test_two_hundred_frames(self, tmp_path):
        for i in range(200):
            write_frame(tmp_path / f"frame{i:06d}.png", size=(8, 8))
        records = load_sequence(tmp_path, "x")
        assert len(records) == 200
        assert [r.frame_index for r in records] == list(range(200))

    def test_empty_directory(self, tmp_path):
        with pytest.raises(NoFramesError):
            load_sequence(tmp_path, "x")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(NoFramesError):
            load_sequence(tmp_path / "nope", "x")

    def test_unreadable_file_named(self, tmp_path):
        bad = tmp_path / "broken.png"
        bad.write_bytes(b"not a png at all")
        with pytest.raises(FrameReadError, match="broken.png"):
            load_sequence(tmp_path, "x")

    def test_duplicate_stems_rejected(self, tmp_path):
        write_frame(tmp_path / "a.png")
        write_frame(tmp_path / "a.jpg")
        with pytest.raises(ParameterError, match="duplicate"):
            load_sequence(tmp_path, "x")

    def test_mixed_formats(self, tmp_path):
        write_frame(tmp_path / "a.jpg")
        write_frame(tmp_path / "b.png")
        assert [r.id for r in load_sequence(tmp_path, "x")] == ["a", "b"]


class TestSubsample:
    def test_stride_five(self):
        kept = subsample(make_records(10), 5)
        assert [r.frame_index for r in kept] == [0, 5]

    def test_stride_one_identity(self):
        records = make_records(7)
        assert subsample(records, 1) == records

    def test_201_records_stride_5(self):
        assert len(subsample(make_records(201), 5)) == 41

    def test_offset(self):
        kept = subsample(make_records(10), 5, offset=2)
        assert [r.frame_index for r in kept] == [2, 7]

    def test_bad_stride(self):
        with pytest.raises(ParameterError):
            subsample(make_records(3), 0)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(0, 120), stride=st.integers(1, 20))
    def test_count_order_uniqueness(self, n, stride):
        kept = subsample(make_records(n), stride)
        assert len(kept) == math.ceil(n / stride)
        indices = [r.frame_index for r in kept]
        assert indices == sorted(indices)
        assert len(set(indices)) == len(indices)


class TestResize:
    def record(self, pixels):
        return ImageRecord(id="r", class_label="x", frame_index=0, pixels=pixels)

    def test_exact_downscale(self):
        out = resize_to_input(self.record(np.zeros((448, 448, 3), np.uint8)), side=224)
        assert out.pixels.shape == (224, 224, 3)

    def test_identity_is_bit_exact(self, rng):
        pixels = rng.integers(0, 256, (224, 224, 3)).astype(np.uint8)
        out = resize_to_input(self.record(pixels), side=224)
        assert np.array_equal(out.pixels, pixels)
        assert out.pixels is not pixels

    def test_constant_color_preserved(self):
        pixels = np.full((480, 640, 3), 137, np.uint8)
        out = resize_to_input(self.record(pixels), side=224)
        assert out.pixels.shape == (224, 224, 3)
        assert (out.pixels == 137).all()

    def test_bad_side(self):
        with pytest.raises(ParameterError):
            resize_to_input(self.record(np.zeros((8, 8, 3), np.uint8)), side=0)

    def test_unknown_filter(self):
        with pytest.raises(ParameterError):
            resize_to_input(self.record(np.zeros((8, 8, 3), np.uint8)),
                            side=4, resample="magic")

    def test_empty_buffer(self):
        with pytest.raises(ParameterError):
            resize_to_input(self.record(np.empty((0, 0, 3), np.uint8)), side=4)


class TestManifest:
    def make_source(self, tmp_path, count=11):
        src = tmp_path / "frames"
        for i in range(count):
            write_frame(src / f"f{i:04d}.png", value=10 * (i % 20), size=(16, 16))
        return src

    def test_prepare_counts(self, tmp_path):
        src = self.make_source(tmp_path, count=11)
        manifest = prepare_sequence(src, "apple", stride=5, side=8)
        assert manifest.source_count == 11
        assert len(manifest.records) == math.ceil(11 / 5)
        assert all(r.pixels.shape == (8, 8, 3) for r in manifest.records)

    def test_write_read_round_trip(self, tmp_path):
        src = self.make_source(tmp_path)
        manifest = prepare_sequence(src, "apple", stride=2, side=8)
        path = tmp_path / "out" / "apple.json"
        write_manifest(manifest, path)
        loaded = read_manifest(path, load_pixels=True)
        assert loaded.object_class == "apple"
        assert loaded.subsample_stride == 2
        assert loaded.ids() == manifest.ids()
        assert [r.frame_index for r in loaded.records] == \
               [r.frame_index for r in manifest.records]

    def test_rewrite_is_byte_identical(self, tmp_path):
        src = self.make_source(tmp_path)
        path = tmp_path / "m.json"
        write_manifest(prepare_sequence(src, "apple", stride=3, side=8), path)
        first = path.read_bytes()
        write_manifest(prepare_sequence(src, "apple", stride=3, side=8), path)
        assert path.read_bytes() == first

    def test_records_ordered_by_frame_index(self, tmp_path):
        src = self.make_source(tmp_path)
        path = tmp_path / "m.json"
        write_manifest(prepare_sequence(src, "apple", stride=1, side=8), path)
        loaded = read_manifest(path, load_pixels=False)
        indices = [r.frame_index for r in loaded.records]
        assert indices == sorted(indices)
