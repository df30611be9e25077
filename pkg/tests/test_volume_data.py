"""
Tests of volume storage, views, samples, subject folds and phantoms.

Date: 2024-03-26
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import json

import numpy as np
import pytest

from numpy.testing import assert_allclose, assert_array_equal

from common import defines
from common.exceptions import DataError, MissingLabelsError, ShapeError, VolumeFormatError
from train_eval import dice_score
from volume_data import (INTENSITY_BANDS, PhantomConfig, Volume, crop_to, import_raw, kfold_split, load_subjects,
    load_volume, make_samples, normalize_intensity, pad_to_multiple, padded_shape, restack_view, sample_count,
    save_volume, slice_view, synth_phantom, view_array, view_plan, write_subjects_manifest)

ISEG_DIMS = (144, 256, 192)


@pytest.mark.parametrize("view, expected", [
    (defines.VIEW_SAGITTAL, 1152),
    (defines.VIEW_AXIAL, 2048),
    (defines.VIEW_CORONAL, 1536)
])
def test_sample_count_per_view(view, expected):
    assert sample_count([ISEG_DIMS] * 8, view) == expected


@pytest.mark.parametrize("view, slices, shape", [
    (defines.VIEW_SAGITTAL, 144, (256, 192)),
    (defines.VIEW_AXIAL, 256, (144, 192)),
    (defines.VIEW_CORONAL, 192, (144, 256))
])
def test_view_plan(view, slices, shape):
    plan = view_plan(view, ISEG_DIMS)

    assert plan.num_slices == slices
    assert plan.slice_shape == shape


def test_unknown_view():
    with pytest.raises(ValueError):
        view_plan("transverse", ISEG_DIMS)


def test_restack_inverts_view_array(rng):
    volume = rng.normal(size=(3, 4, 5))

    for view in defines.VIEWS:
        arranged = view_array(volume, view)
        assert arranged.shape[2] == volume.shape[defines.VIEW_SLICE_AXIS[view]]
        assert_array_equal(restack_view(arranged, view), volume)


def test_slice_view_normalises(rng):
    volume = Volume(rng.uniform(5.0, 9.0, size=(3, 4, 5)).astype(np.float32))
    slices = slice_view(volume, defines.VIEW_CORONAL)

    assert [idx for idx, _ in slices] == list(range(5))
    assert slices[0][1].shape == (3, 4)
    stacked = np.stack([image for _, image in slices], axis=-1)
    assert stacked.min() == 0.0
    assert_allclose(stacked.max(), 1.0)


def test_constant_image_normalises_to_zero():
    assert_array_equal(normalize_intensity(np.full((2, 2, 2), 4.0)), 0.0)


def test_pad_and_crop():
    array = np.ones((5, 7, 3))
    padded = pad_to_multiple(array, 4)

    assert padded.shape == (8, 8, 3)
    assert padded_shape((5, 7), 4) == (8, 8)
    assert padded[5:].sum() == 0.0
    assert_array_equal(crop_to(padded, (5, 7)), array)

    with pytest.raises(ShapeError):
        crop_to(array, (6, 7))
    with pytest.raises(ShapeError):
        pad_to_multiple(array, 0)


def test_kfold_partitions_subjects():
    ids = ["s{:02d}".format(idx) for idx in range(18)]
    folds = kfold_split(ids, 5, seed=3)

    assert sorted(len(test) for _, test in folds) == [3, 3, 4, 4, 4]
    assert sorted(sid for _, test in folds for sid in test) == ids
    for train, test in folds:
        assert not set(train) & set(test)
        assert len(train) + len(test) == 18


def test_kfold_is_seeded():
    ids = ["s{:02d}".format(idx) for idx in range(10)]

    assert kfold_split(ids, 5, seed=1) == kfold_split(list(reversed(ids)), 5, seed=1)
    assert all(len(test) == 2 for _, test in kfold_split(ids, 5, seed=1))
    assert kfold_split(ids, 5, seed=1) != kfold_split(ids, 5, seed=2)


def test_kfold_needs_enough_subjects():
    with pytest.raises(DataError):
        kfold_split(["a", "b", "c"], 5)


def test_samples_keep_edge_slices(small_phantoms):
    samples = make_samples(small_phantoms, defines.VIEW_AXIAL, pad_multiple=4)

    assert len(samples) == 4 * 16
    assert samples[0].subject_id == "phantom000"
    assert [sample.index for sample in samples[:16]] == list(range(16))
    assert samples[0].image.shape == (12, 16)
    assert samples[0].label.shape == (12, 16)
    assert samples[0].source.original_shape == (12, 14)
    assert samples[0].source.crop(samples[0].source.image).shape == (12, 14, 16)


def test_samples_require_labels(small_phantoms):
    volumes = dict(small_phantoms)
    volumes["phantom000"] = Volume(volumes["phantom000"].image)

    with pytest.raises(MissingLabelsError):
        make_samples(volumes, defines.VIEW_SAGITTAL)
    assert len(make_samples(volumes, defines.VIEW_SAGITTAL, require_labels=False)) == 4 * 12


def test_phantom_bands_and_labels():
    volume = synth_phantom(7, (24, 28, 20), cfg=PhantomConfig.zero_noise())

    assert volume.image.dtype == np.float32
    assert volume.labels.dtype == np.uint8
    assert set(np.unique(volume.labels)) == {0, 1, 2, 3}

    for cls_idx, (low, high) in enumerate(INTENSITY_BANDS):
        values = volume.image[volume.labels == cls_idx]
        assert values.min() >= low - 1e-6
        assert values.max() <= high + 1e-6
        # One intensity per class without noise or bias
        assert_allclose(values, values[0])


@pytest.mark.parametrize("seed", range(4))
def test_zero_noise_phantom_is_segmented_by_thresholds(seed):
    volume = synth_phantom(seed, (20, 24, 18), cfg=PhantomConfig.zero_noise())
    thresholds = [(upper + lower) / 2.0 for (_, upper), (lower, _) in zip(INTENSITY_BANDS, INTENSITY_BANDS[1:])]

    predicted = np.digitize(volume.image, thresholds).astype(np.uint8)

    for cls in range(len(INTENSITY_BANDS)):
        assert dice_score(predicted, volume.labels, cls) == 1.0


def test_phantom_is_seeded():
    first, second = synth_phantom(3, (10, 12, 8)), synth_phantom(3, (10, 12, 8))

    assert_array_equal(first.image, second.image)
    assert_array_equal(first.labels, second.labels)
    assert not np.array_equal(first.image, synth_phantom(4, (10, 12, 8)).image)


def test_phantom_class_range():
    assert set(np.unique(synth_phantom(0, (16, 16, 16), num_classes=2).labels)) == {0, 1}

    with pytest.raises(ValueError):
        synth_phantom(0, (8, 8, 8), num_classes=5)


def test_volume_round_trip(tmp_path):
    volume = synth_phantom(1, (6, 8, 5))
    volume.spacing = (1.0, 0.9, 1.1)
    stem = str(tmp_path / "subject")

    save_volume(volume, stem)
    loaded = load_volume(stem + ".json", require_labels=True)

    assert_array_equal(loaded.image, volume.image)
    assert_array_equal(loaded.labels, volume.labels)
    assert loaded.spacing == (1.0, 0.9, 1.1)
    assert (tmp_path / "subject_labels.raw").exists()


def test_payload_size_must_match_header(tmp_path):
    stem = str(tmp_path / "subject")
    save_volume(Volume(np.zeros((4, 4, 4), dtype=np.float32)), stem)

    with open(stem + ".raw", 'ab') as stream:
        stream.write(b"\x00" * 4)

    with pytest.raises(VolumeFormatError, match="bytes"):
        load_volume(stem)


def test_invalid_header(tmp_path):
    path = tmp_path / "subject.json"
    path.write_text(json.dumps({'dims': [4, 4], 'dtype': "f32"}))

    with pytest.raises(VolumeFormatError, match="dims"):
        load_volume(str(path))

    path.write_text(json.dumps({'dims': [4, 4, 4], 'dtype': "f16"}))
    with pytest.raises(VolumeFormatError, match="dtype"):
        load_volume(str(path))


def test_missing_labels(tmp_path):
    stem = str(tmp_path / "subject")
    save_volume(Volume(np.zeros((2, 2, 2), dtype=np.float32)), stem)

    assert load_volume(stem).labels is None
    with pytest.raises(MissingLabelsError):
        load_volume(stem, require_labels=True)


def test_import_raw(tmp_path, rng):
    image = rng.uniform(size=(3, 4, 5)).astype("<f4")
    labels = rng.integers(0, 4, size=(3, 4, 5)).astype(np.uint8)
    image.tofile(tmp_path / "scan.bin")
    labels.tofile(tmp_path / "scan_seg.bin")

    import_raw(str(tmp_path / "scan.bin"), (3, 4, 5), "f32", str(tmp_path / "subject"),
        labels_raw=str(tmp_path / "scan_seg.bin"))
    loaded = load_volume(str(tmp_path / "subject"), require_labels=True)

    assert_array_equal(loaded.image, image)
    assert_array_equal(loaded.labels, labels)

    with pytest.raises(VolumeFormatError, match="voxels"):
        import_raw(str(tmp_path / "scan.bin"), (3, 4, 6), "f32", str(tmp_path / "other"))


def test_subjects_manifest(tmp_path, small_phantoms):
    entries = []
    for subject_id, volume in small_phantoms.items():
        save_volume(volume, str(tmp_path / subject_id))
        entries.append({'id': subject_id, 'volume': subject_id + ".json"})
    write_subjects_manifest(str(tmp_path), entries)

    volumes = load_subjects(str(tmp_path))

    assert sorted(volumes) == sorted(small_phantoms)
    assert_array_equal(volumes["phantom002"].labels, small_phantoms["phantom002"].labels)


def test_subjects_manifest_errors(tmp_path):
    with pytest.raises(DataError):
        load_subjects(str(tmp_path))

    (tmp_path / defines.SUBJECTS_MANIFEST).write_text(json.dumps({'subjects': [{'id': "a", 'volume': "a.json"}]}))
    with pytest.raises(DataError, match="does not exist"):
        load_subjects(str(tmp_path))
