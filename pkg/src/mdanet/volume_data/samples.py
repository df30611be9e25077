"""
Training samples, subject manifests and subject-level k-fold splitting.

Date: 2024-03-17
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import json
import logging
import os
import numpy as np

from dataclasses import dataclass
from sklearn.model_selection import KFold

from common import defines
from common.exceptions import DataError, MissingLabelsError
from volume_data.views import crop_to, normalize_intensity, pad_to_multiple, view_array, view_plan
from volume_data.volume import Volume, header_path, load_volume

logger = logging.getLogger(__name__)

# Module configuration settings
MODULE_NAME = "volume_data"
MODULE_CONFIG = {
    defines.CONF_PARAMS_MANDATORY: [],
    defines.CONF_PARAMS_DEFAULTS: {'view': defines.VIEW_SAGITTAL, 'folds': 5, 'data': None},
    defines.CONF_PARAMS_INTS: ['folds'],
    defines.CONF_PARAMS_FLOATS: None,
    defines.CONF_PARAMS_STRINGS: {'view': defines.VIEWS},
    defines.CONF_PARAMS_BOOLS: None,
    defines.CONF_PARAMS_LISTS: None
}


@dataclass
class SubjectView:
    """One subject cut along one view: normalised image and labels as [m, n, p], in-plane zero-padded."""
    subject_id:     str
    view:           str
    image:          np.ndarray          # [m', n', p] normalised, padded
    labels:         np.ndarray | None   # [m', n', p] or None
    original_shape: tuple               # (m, n) before padding


    @property
    def num_slices(self) -> int:
        return self.image.shape[2]


    def crop(self, array: np.ndarray) -> np.ndarray:
        """Removes the in-plane padding of an array laid out like image."""

        return crop_to(array, self.original_shape)


@dataclass
class Sample:
    """Slice i of a subject view. The subject view is shared, so neighbouring slices stay reachable."""
    source: SubjectView
    index:  int


    @property
    def subject_id(self) -> str:
        return self.source.subject_id


    @property
    def view(self) -> str:
        return self.source.view


    @property
    def image(self) -> np.ndarray:
        return self.source.image[:, :, self.index]


    @property
    def label(self) -> np.ndarray | None:
        return None if self.source.labels is None else self.source.labels[:, :, self.index]


def subject_view(subject_id: str, volume: Volume, view: str, pad_multiple: int = 1) -> SubjectView:
    """Arranges a volume for one view, normalising intensities and padding in-plane dims to pad_multiple."""

    image = view_array(normalize_intensity(volume.image), view)
    labels = view_array(volume.labels, view) if volume.labels is not None else None

    return SubjectView(subject_id, view, pad_to_multiple(image, pad_multiple),
        pad_to_multiple(labels, pad_multiple) if labels is not None else None, image.shape[:2])


def make_samples(volumes: dict, view: str, pad_multiple: int = 1, require_labels: bool = True) -> list:
    """Every slice of every subject as one sample, edge slices included.

    Parameters:
        volumes        subject id -> Volume
        view           View to cut along
        pad_multiple   In-plane padding multiple, 2^(depth-1) of the network
        require_labels Whether unlabeled volumes are an error

    Raises:
        MissingLabelsError if labels are required and a volume has none

    Returns:
        list Samples ordered by subject id then slice index"""

    samples = []

    for subject_id in sorted(volumes):
        volume = volumes[subject_id]
        if require_labels and volume.labels is None:
            raise MissingLabelsError("Subject {} has no label volume".format(subject_id))

        source = subject_view(subject_id, volume, view, pad_multiple)
        samples.extend(Sample(source, idx) for idx in range(source.num_slices))

    logger.debug("%d samples from %d subjects in the %s view", len(samples), len(volumes), view)

    return samples


def sample_count(dims_per_subject, view: str) -> int:
    """Number of samples a subject set yields in a view without loading any voxel."""

    return sum(view_plan(view, dims).num_slices for dims in dims_per_subject)


def kfold_split(subject_ids, k: int = 5, seed: int = 0) -> list:
    """Subject-level k-fold partition.

    Parameters:
        subject_ids Subject identifiers
        k           Number of folds
        seed        Shuffling seed

    Raises:
        DataError if there are fewer subjects than folds

    Returns:
        list k pairs (train ids, test ids); every subject is in exactly one test fold"""

    ids = sorted(subject_ids)

    if k < 2 or len(ids) < k:
        raise DataError("Cannot split {} subjects into {} folds".format(len(ids), k))

    splitter = KFold(n_splits=k, shuffle=True, random_state=seed)

    return [([ids[idx] for idx in train], [ids[idx] for idx in test])
        for train, test in splitter.split(np.arange(len(ids)))]


def write_subjects_manifest(directory: str, entries: list) -> str:
    """Writes the subject manifest {"subjects": [{"id", "volume"}]}, volume paths relative to the directory."""

    path = os.path.join(directory, defines.SUBJECTS_MANIFEST)

    with open(path, 'w') as stream:
        json.dump({'subjects': [{'id': entry['id'], 'volume': entry['volume']} for entry in entries]}, stream,
            indent=2)

    return path


def load_subjects(data: str, require_labels: bool = True) -> dict:
    """Loads every subject listed by a manifest.

    Parameters:
        data           Manifest file or the directory holding it
        require_labels Whether unlabeled volumes are an error

    Raises:
        DataError if the manifest is missing or malformed

    Returns:
        dict subject id -> Volume"""

    path = os.path.join(data, defines.SUBJECTS_MANIFEST) if os.path.isdir(data) else data

    try:
        with open(path, 'r') as stream:
            manifest = json.load(stream)
        entries = manifest['subjects']
    except FileNotFoundError as exc:
        raise DataError("Subject manifest {} does not exist".format(path)) from exc
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError("Subject manifest {} is malformed: {}".format(path, exc)) from exc

    directory = os.path.dirname(path)
    volumes = {}

    for entry in entries:
        volume_path = header_path(os.path.join(directory, entry['volume']))
        if not os.path.exists(volume_path):
            raise DataError("Volume {} of subject {} does not exist".format(volume_path, entry['id']))
        volumes[entry['id']] = load_volume(volume_path, require_labels)

    return volumes
