"""
Synthetic head phantoms: nested deformed ellipsoid shells standing in for
background, CSF, grey matter and white matter, with per-class intensity bands,
a smooth multiplicative bias field and additive Gaussian noise.

Date: 2024-03-17
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import logging
import numpy as np

from dataclasses import dataclass
from scipy.ndimage import gaussian_filter

from common.seeding import make_rng
from volume_data.volume import Volume

logger = logging.getLogger(__name__)

# Outer boundary of each foreground shell in normalised ellipsoid radius, outermost first (CSF, GM, WM)
SHELL_RADII = [1.0, 0.8, 0.55]

# Intensity band per class (background, CSF, GM, WM), bands do not overlap
INTENSITY_BANDS = [(0.0, 0.0), (0.20, 0.30), (0.45, 0.55), (0.75, 0.85)]

# Semi-axes of the outer ellipsoid relative to the half extent of every axis
OUTER_SEMI_AXIS = 0.7
SEMI_AXIS_JITTER = 0.05


@dataclass(frozen=True)
class PhantomConfig:
    noise_std:       float = 0.02
    bias_strength:   float = 0.1
    deform_strength: float = 0.08


    @classmethod
    def zero_noise(cls, deform_strength: float = 0.08) -> "PhantomConfig":
        return cls(0.0, 0.0, deform_strength)


def _smooth_field(rng: np.random.Generator, dims: tuple) -> np.ndarray:
    """Smooth random field scaled to [-1, 1]."""

    sigma = [max(extent / 6.0, 1.0) for extent in dims]
    field = gaussian_filter(rng.standard_normal(dims), sigma=sigma, mode='wrap')
    peak = float(np.abs(field).max())

    return field / peak if peak > 0.0 else field


def synth_phantom(seed: int, dims, num_classes: int = 4, cfg: PhantomConfig = PhantomConfig()) -> Volume:
    """Generates one labeled phantom, fully determined by the seed.

    Parameters:
        seed        Subject seed
        dims        [d0, d1, d2]
        num_classes 2 to 4 classes, background included
        cfg         Noise, bias and deformation strengths

    Returns:
        Volume Phantom with float32 image and uint8 labels"""

    if not 2 <= num_classes <= len(INTENSITY_BANDS):
        raise ValueError("Phantoms support 2 to {} classes, got {}".format(len(INTENSITY_BANDS), num_classes))

    dims = tuple(int(extent) for extent in dims)
    rng_shape = make_rng(seed, "phantom", "shape")

    axes = [np.linspace(-1.0, 1.0, extent) for extent in dims]
    grid = np.meshgrid(*axes, indexing='ij')
    semi_axes = OUTER_SEMI_AXIS + rng_shape.uniform(-SEMI_AXIS_JITTER, SEMI_AXIS_JITTER, size=3)
    center = rng_shape.uniform(-0.05, 0.05, size=3)

    radius = np.sqrt(sum(((coord - c) / a) ** 2 for coord, c, a in zip(grid, center, semi_axes)))
    radius = radius + cfg.deform_strength * _smooth_field(make_rng(seed, "phantom", "deform"), dims)

    labels = np.zeros(dims, dtype=np.uint8)
    for cls_idx, shell_radius in enumerate(SHELL_RADII[:num_classes - 1], start=1):
        labels[radius < shell_radius] = cls_idx

    rng_bands = make_rng(seed, "phantom", "bands")
    image = np.zeros(dims, dtype=np.float64)
    for cls_idx in range(1, num_classes):
        low, high = INTENSITY_BANDS[cls_idx]
        image[labels == cls_idx] = rng_bands.uniform(low, high)

    if cfg.bias_strength > 0.0:
        image *= 1.0 + cfg.bias_strength * _smooth_field(make_rng(seed, "phantom", "bias"), dims)
    if cfg.noise_std > 0.0:
        image += make_rng(seed, "phantom", "noise").normal(0.0, cfg.noise_std, size=dims)

    logger.debug("Phantom %d with dims %s, class histogram %s", seed, list(dims),
        np.bincount(labels.reshape(-1), minlength=num_classes).tolist())

    return Volume(image.astype(np.float32), (1.0, 1.0, 1.0), labels)
