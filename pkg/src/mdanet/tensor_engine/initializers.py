"""
Seeded parameter initialisers.

Date: 2024-03-09
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import numpy as np

from common.seeding import make_rng


def he_uniform(seed: int, name: str, shape: tuple, fan_in: int) -> np.ndarray:
    """He-uniform initialisation U(-sqrt(6/fan_in), sqrt(6/fan_in)) from the stream derived for the name.

    Parameters:
        seed   Base seed of the model
        name   Fully qualified parameter name, keys the random stream
        shape  Parameter shape
        fan_in Number of inputs feeding one output unit

    Returns:
        np.ndarray Initialised values (float64, cast by the Tensor)"""

    limit = np.sqrt(6.0 / max(int(fan_in), 1))

    return make_rng(seed, name).uniform(-limit, limit, size=shape)


def zeros(shape: tuple) -> np.ndarray:
    return np.zeros(shape)


def averaging(shape: tuple) -> np.ndarray:
    """Filter of a depth-wise squeeze along an axis of extent shape[0] that starts as a plain average."""

    return np.full(shape, 1.0 / shape[0])
