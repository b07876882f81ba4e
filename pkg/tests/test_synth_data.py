"""Tests fuer den synthetischen Datensatz und das CMDS-Format."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from corrmatch_desk.models.dataset import ConfigError, DatasetSpec
from corrmatch_desk.services import synth_data
from corrmatch_desk.services.synth_data import DatasetFormatError, Shape, ShapeKind


@pytest.fixture
def spec() -> DatasetSpec:
    return DatasetSpec(seed=5, n_labeled=2, n_unlabeled=3, n_val=2, height=16, width=12, num_classes=4)


class TestGenerate:
    def test_split_sizes_and_global_ids(self, spec: DatasetSpec) -> None:
        dataset = synth_data.generate(spec)
        assert [s.id for s in dataset.labeled] == [0, 1]
        assert [s.id for s in dataset.unlabeled] == [2, 3, 4]
        assert [s.id for s in dataset.val] == [5, 6]

    def test_only_labeled_samples_carry_labels(self, spec: DatasetSpec) -> None:
        dataset = synth_data.generate(spec)
        assert all(s.is_labeled for s in dataset.labeled)
        assert not any(s.is_labeled for s in [*dataset.unlabeled, *dataset.val])

    def test_shapes_and_ranges(self, spec: DatasetSpec) -> None:
        for sample in synth_data.generate(spec).all_samples():
            assert sample.image.shape == (3, 16, 12)
            assert sample.image.dtype == np.float64
            assert sample.image.min() >= 0.0
            assert sample.image.max() <= 1.0
            assert sample.ground_truth.shape == (16, 12)
            assert sample.ground_truth.max() < spec.num_classes

    def test_sample_depends_only_on_seed_and_id(self, spec: DatasetSpec) -> None:
        small = synth_data.generate(spec)
        large = synth_data.generate(replace(spec, n_val=5))
        for a, b in zip(small.all_samples(), large.all_samples()[:7], strict=True):
            np.testing.assert_array_equal(a.image, b.image)
            np.testing.assert_array_equal(a.ground_truth, b.ground_truth)

    def test_other_seed_gives_other_images(self, spec: DatasetSpec) -> None:
        a = synth_data.generate(spec).labeled[0]
        b = synth_data.generate(replace(spec, seed=6)).labeled[0]
        assert not np.array_equal(a.image, b.image)

    def test_label_matches_last_drawn_shape(self, spec: DatasetSpec) -> None:
        sample = synth_data.generate(spec).labeled[0]
        shapes = synth_data.sample_shapes(spec, 0)
        last = shapes[-1]
        covered = last.mask(spec.height, spec.width)
        assert (sample.ground_truth[covered] == last.class_id).all()

    def test_noise_free_pixels_have_class_colour(self, spec: DatasetSpec) -> None:
        clean = replace(spec, noise_std=0.0)
        colors = synth_data.palette(clean)
        sample = synth_data.generate(clean).labeled[0]
        np.testing.assert_array_equal(sample.image, colors[sample.ground_truth].transpose(2, 0, 1))

    def test_invalid_spec(self, spec: DatasetSpec) -> None:
        with pytest.raises(ConfigError, match="height"):
            synth_data.generate(replace(spec, height=10))
        with pytest.raises(ConfigError, match="num_classes"):
            synth_data.generate(replace(spec, num_classes=1))


class TestShapes:
    def test_kind_cycles_with_class(self) -> None:
        assert synth_data.kind_for_class(1) is ShapeKind.RECTANGLE
        assert synth_data.kind_for_class(2) is ShapeKind.DISC
        assert synth_data.kind_for_class(3) is ShapeKind.TRIANGLE
        assert synth_data.kind_for_class(4) is ShapeKind.RECTANGLE

    def test_background_has_no_shape(self) -> None:
        with pytest.raises(ValueError):
            synth_data.kind_for_class(0)

    def test_rectangle_mask(self) -> None:
        mask = Shape(ShapeKind.RECTANGLE, 1, row=1, col=2, height=2, width=3).mask(5, 6)
        assert mask.sum() == 6
        assert mask[1, 2] and mask[2, 4]
        assert not mask[3, 2]

    def test_disc_mask_is_symmetric(self) -> None:
        mask = Shape(ShapeKind.DISC, 2, row=5, col=5, radius=2.0).mask(11, 11)
        np.testing.assert_array_equal(mask, mask[::-1])
        np.testing.assert_array_equal(mask, mask.T)
        assert mask[5, 7] and not mask[5, 8]


class TestFileFormat:
    def test_round_trip_is_lossless(self, spec: DatasetSpec, tmp_path: Path) -> None:
        dataset = synth_data.generate(spec)
        path = synth_data.save(dataset, tmp_path / "data.cmds")
        loaded = synth_data.load(path)
        assert loaded.spec == spec
        for a, b in zip(dataset.all_samples(), loaded.all_samples(), strict=True):
            assert a.id == b.id
            np.testing.assert_array_equal(a.image, b.image)
            np.testing.assert_array_equal(a.ground_truth, b.ground_truth)
            assert a.is_labeled == b.is_labeled

    def test_same_spec_gives_same_bytes(self, spec: DatasetSpec, tmp_path: Path) -> None:
        first = synth_data.save(synth_data.generate(spec), tmp_path / "a.cmds").read_bytes()
        second = synth_data.save(synth_data.generate(spec), tmp_path / "b.cmds").read_bytes()
        assert first == second
        assert first[:4] == b"CMDS"

    def test_wrong_magic(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.cmds"
        path.write_bytes(b"XXXX" + bytes(synth_data.HEADER_DTYPE.itemsize))
        with pytest.raises(DatasetFormatError):
            synth_data.load(path)

    def test_truncated_file(self, spec: DatasetSpec, tmp_path: Path) -> None:
        path = synth_data.save(synth_data.generate(spec), tmp_path / "data.cmds")
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(DatasetFormatError):
            synth_data.load(path)

    def test_wrong_version(self, spec: DatasetSpec, tmp_path: Path) -> None:
        path = synth_data.save(synth_data.generate(spec), tmp_path / "data.cmds")
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(DatasetFormatError, match="Version"):
            synth_data.load(path)

    def test_seed_too_large_for_header(self, spec: DatasetSpec, tmp_path: Path) -> None:
        dataset = synth_data.generate(spec)
        dataset.spec = replace(spec, seed=2**40)
        with pytest.raises(ConfigError, match="seed"):
            synth_data.save(dataset, tmp_path / "data.cmds")


class TestPreview:
    def test_contact_sheet(self, spec: DatasetSpec, tmp_path: Path) -> None:
        path = synth_data.preview(synth_data.generate(spec), tmp_path / "preview.png", count=3, zoom=2)
        with Image.open(path) as image:
            assert image.size == (3 * 12 * 2, 2 * 16 * 2)
