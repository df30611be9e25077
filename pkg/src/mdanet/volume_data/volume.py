"""
Volume storage: a JSON header next to a raw little-endian voxel payload.

Header fields:
    dims     [d0, d1, d2] voxel counts, payload is d0-major (C order)
    spacing  [s0, s1, s2] millimetres per voxel
    dtype    f32 or u8
    labels   optional path of the label volume header, relative to this header

Date: 2024-03-16
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import json
import logging
import os
import numpy as np

from dataclasses import dataclass

from common.exceptions import MissingLabelsError, VolumeFormatError

logger = logging.getLogger(__name__)

VOLUME_DTYPES = {"f32": "<f4", "u8": "u1"}
HEADER_SUFFIX = ".json"
PAYLOAD_SUFFIX = ".raw"
LABELS_SUFFIX = "_labels"


@dataclass
class Volume:
    """Scalar image with optional integer labels of the same dims."""
    image:   np.ndarray                 # [d0, d1, d2] float32
    spacing: tuple = (1.0, 1.0, 1.0)    # mm per axis
    labels:  np.ndarray | None = None   # [d0, d1, d2] uint8 class indices


    @property
    def dims(self) -> tuple:
        return tuple(int(extent) for extent in self.image.shape)


    def validate(self, num_classes: int | None = None) -> None:
        """Raises VolumeFormatError when the volume breaks its invariants."""

        if self.image.ndim != 3:
            raise VolumeFormatError("Volume image must have three axes, got {}".format(list(self.image.shape)))
        if not np.all(np.isfinite(self.image)):
            raise VolumeFormatError("Volume image contains non-finite values")

        if self.labels is not None:
            if self.labels.shape != self.image.shape:
                raise VolumeFormatError("Label dims {} differ from image dims {}".format(list(self.labels.shape),
                    list(self.image.shape)))
            if num_classes is not None and self.labels.size and int(self.labels.max()) >= num_classes:
                raise VolumeFormatError("Label value {} out of range for {} classes".format(int(self.labels.max()),
                    num_classes))


def header_path(stem: str) -> str:
    return stem if stem.endswith(HEADER_SUFFIX) else stem + HEADER_SUFFIX


def _stem(path: str) -> str:
    return path[:-len(HEADER_SUFFIX)] if path.endswith(HEADER_SUFFIX) else path


def _write_array(array: np.ndarray, stem: str, dtype: str, spacing, labels: str | None = None) -> None:
    header = {'dims': [int(extent) for extent in array.shape], 'spacing': [float(value) for value in spacing],
        'dtype': dtype}
    if labels is not None:
        header['labels'] = labels

    np.ascontiguousarray(array, dtype=VOLUME_DTYPES[dtype]).tofile(stem + PAYLOAD_SUFFIX)

    with open(stem + HEADER_SUFFIX, 'w') as stream:
        json.dump(header, stream, indent=2)


def _read_array(path: str) -> tuple:
    """Reads a header and its payload, returning (array, header)."""

    try:
        with open(header_path(path), 'r') as stream:
            header = json.load(stream)
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise VolumeFormatError("Cannot read volume header {}: {}".format(path, exc)) from exc

    dims = header.get('dims')
    if not isinstance(dims, list) or len(dims) != 3 or not all(isinstance(d, int) and d > 0 for d in dims):
        raise VolumeFormatError("Volume header {} has invalid dims {}".format(path, dims))
    if header.get('dtype') not in VOLUME_DTYPES:
        raise VolumeFormatError("Volume header {} has unknown dtype {!r}, expected one of {}".format(path,
            header.get('dtype'), list(VOLUME_DTYPES)))

    payload = _stem(path) + PAYLOAD_SUFFIX
    dtype = np.dtype(VOLUME_DTYPES[header['dtype']])
    expected = int(np.prod(dims)) * dtype.itemsize

    try:
        actual = os.path.getsize(payload)
    except OSError as exc:
        raise VolumeFormatError("Volume payload {} is missing".format(payload)) from exc

    if actual != expected:
        raise VolumeFormatError("Volume payload {} has {} bytes but header dims {} with dtype {} need {}".format(
            payload, actual, dims, header['dtype'], expected))

    return np.fromfile(payload, dtype=dtype).reshape(dims), header


def save_volume(volume: Volume, path: str) -> None:
    """Writes the image, and the labels when present, next to each other. uint8 images (label maps) are stored as
    u8, everything else as f32.

    Parameters:
        volume Volume to save
        path   Header path or stem, the payload takes the same stem with .raw"""

    volume.validate()
    stem = _stem(path)
    labels_ref = None

    if volume.labels is not None:
        labels_stem = stem + LABELS_SUFFIX
        _write_array(volume.labels, labels_stem, "u8", volume.spacing)
        labels_ref = os.path.basename(labels_stem) + HEADER_SUFFIX

    image_dtype = "u8" if volume.image.dtype == np.uint8 else "f32"
    _write_array(volume.image, stem, image_dtype, volume.spacing, labels_ref)
    logger.debug("Volume %s saved with dims %s", stem, volume.dims)


def load_volume(path: str, require_labels: bool = False) -> Volume:
    """Reads a volume written by save_volume() or import_raw().

    Parameters:
        path           Header path (or stem)
        require_labels Whether a missing label volume is an error

    Raises:
        FileNotFoundError if the header does not exist
        VolumeFormatError on header/payload inconsistencies
        MissingLabelsError if labels are required but absent

    Returns:
        Volume Loaded volume, image as float32"""

    image, header = _read_array(path)
    labels = None

    if header.get('labels'):
        labels_path = os.path.join(os.path.dirname(header_path(path)), header['labels'])
        if not os.path.exists(header_path(labels_path)):
            raise MissingLabelsError("Label volume {} referenced by {} does not exist".format(labels_path, path))
        labels, _ = _read_array(labels_path)
        labels = labels.astype(np.uint8)
    elif require_labels:
        raise MissingLabelsError("Volume {} has no label volume".format(path))

    spacing = tuple(float(value) for value in header.get('spacing', (1.0, 1.0, 1.0)))
    volume = Volume(image.astype(np.float32), spacing, labels)
    volume.validate()

    return volume


def import_raw(raw_path: str, dims, dtype: str, out_path: str, labels_raw: str | None = None,
    spacing=(1.0, 1.0, 1.0)) -> Volume:
    """Converts a caller-provided raw dump (d0-major, little-endian) into the standard volume format.

    Parameters:
        raw_path   Raw image file
        dims       [d0, d1, d2]
        dtype      f32 or u8 of the raw image
        out_path   Destination header path or stem
        labels_raw Optional raw u8 label file of the same dims
        spacing    mm per axis

    Returns:
        Volume The imported volume"""

    if dtype not in VOLUME_DTYPES:
        raise VolumeFormatError("Unknown raw dtype {!r}, expected one of {}".format(dtype, list(VOLUME_DTYPES)))

    def read_raw(path: str, raw_dtype: str) -> np.ndarray:
        data = np.fromfile(path, dtype=VOLUME_DTYPES[raw_dtype])
        if data.size != int(np.prod(dims)):
            raise VolumeFormatError("Raw file {} holds {} voxels but dims {} need {}".format(path, data.size,
                list(dims), int(np.prod(dims))))
        return data.reshape(tuple(dims))

    image = read_raw(raw_path, dtype).astype(np.float32)
    labels = read_raw(labels_raw, "u8") if labels_raw is not None else None

    volume = Volume(image, tuple(float(value) for value in spacing), labels)
    save_volume(volume, out_path)
    logger.info("Imported %s as %s with dims %s", raw_path, header_path(out_path), list(dims))

    return volume
