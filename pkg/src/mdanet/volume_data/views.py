"""
Anatomical views of a volume. A view cuts the volume along one axis into p
slices of shape [m, n]; the two remaining axes keep their order.

    view      slice axis   iSeg dims 144x256x192
    sagittal  0            p=144, 256x192
    axial     1            p=256, 144x192
    coronal   2            p=192, 144x256

Date: 2024-03-16
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import numpy as np

from dataclasses import dataclass

from common import defines
from common.exceptions import ShapeError
from volume_data.volume import Volume


@dataclass(frozen=True)
class ViewPlan:
    """Axis assignment of one view for given volume dims."""
    view:          str
    slice_axis:    int
    in_plane_axes: tuple
    dims:          tuple


    @property
    def num_slices(self) -> int:
        return self.dims[self.slice_axis]


    @property
    def slice_shape(self) -> tuple:
        return tuple(self.dims[axis] for axis in self.in_plane_axes)


def view_plan(view: str, dims) -> ViewPlan:
    if view not in defines.VIEW_SLICE_AXIS:
        raise ValueError("Unknown view \"{}\", expected one of {}".format(view, defines.VIEWS))

    slice_axis = defines.VIEW_SLICE_AXIS[view]

    return ViewPlan(view, slice_axis, tuple(axis for axis in range(3) if axis != slice_axis),
        tuple(int(extent) for extent in dims))


def normalize_intensity(image: np.ndarray) -> np.ndarray:
    """Min-max normalisation to [0, 1]; a constant image maps to zeros."""

    low, high = float(image.min()), float(image.max())

    if high - low <= 0.0:
        return np.zeros_like(image, dtype=np.float32)

    return ((image - low) / (high - low)).astype(np.float32)


def view_array(array: np.ndarray, view: str) -> np.ndarray:
    """Reorders a volume array to [m, n, p] with the slices of the view along the last axis."""

    return np.moveaxis(array, view_plan(view, array.shape).slice_axis, -1)


def restack_view(view_volume: np.ndarray, view: str) -> np.ndarray:
    """Inverse of view_array(), [m, n, p] back to [d0, d1, d2]."""

    return np.moveaxis(view_volume, -1, defines.VIEW_SLICE_AXIS[view])


def slice_view(volume: Volume, view: str) -> list:
    """Normalised slices of a view.

    Parameters:
        volume Source volume
        view   sagittal, axial or coronal

    Returns:
        list (i, slice [m, n]) for i = 0..p-1"""

    arranged = view_array(normalize_intensity(volume.image), view)

    return [(idx, arranged[:, :, idx]) for idx in range(arranged.shape[2])]


def pad_to_multiple(array: np.ndarray, multiple: int, axes=(0, 1)) -> np.ndarray:
    """Zero-pads the given axes at their end up to the next multiple."""

    if multiple < 1:
        raise ShapeError("Padding multiple must be >= 1, got {}".format(multiple))

    padding = [(0, 0)] * array.ndim
    for axis in axes:
        padding[axis] = (0, -array.shape[axis] % multiple)

    return np.pad(array, padding)


def padded_shape(shape, multiple: int) -> tuple:
    return tuple(int(extent) + (-int(extent) % multiple) for extent in shape)


def crop_to(array: np.ndarray, shape, axes=(0, 1)) -> np.ndarray:
    """Crops the given axes back to shape (one extent per axis)."""

    index = [slice(None)] * array.ndim
    for axis, extent in zip(axes, shape):
        if array.shape[axis] < extent:
            raise ShapeError("Cannot crop axis {} of extent {} to {}".format(axis, array.shape[axis], extent))
        index[axis] = slice(0, extent)

    return array[tuple(index)]
