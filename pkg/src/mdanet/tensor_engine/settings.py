"""
Run-level numeric settings of the tensor engine: scalar precision and the
non-finite value (anomaly) detection mode.

Date: 2024-03-07
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import numpy as np

PRECISIONS = {"f32": np.float32, "f64": np.float64}

_dtype = np.float32         # Scalar type of every tensor created from now on
_detect_anomaly = False     # Check every op output for NaN/Inf when set


def set_precision(precision: str) -> None:
    """Switches the engine precision. f64 is meant for gradient checks and oracles, f32 for training loops.

    Parameters:
        precision f32 or f64"""

    global _dtype

    if precision not in PRECISIONS:
        raise ValueError("Unknown precision \"{}\", expected one of {}".format(precision, list(PRECISIONS)))

    _dtype = PRECISIONS[precision]


def get_precision() -> str:
    """Returns the name of the active precision (f32 or f64)."""

    return "f64" if _dtype == np.float64 else "f32"


def get_dtype() -> type:
    """Returns the numpy scalar type of the active precision."""

    return _dtype


def set_anomaly_detection(enabled: bool) -> None:
    """Enables or disables non-finite value checks after every recorded operation."""

    global _detect_anomaly
    _detect_anomaly = bool(enabled)


def anomaly_detection_enabled() -> bool:
    return _detect_anomaly


class precision:
    """Context manager temporarily switching the engine precision."""

    def __init__(self, name: str) -> None:
        self._name = name
        self._previous = None

    def __enter__(self):
        self._previous = get_precision()
        set_precision(self._name)
        return self

    def __exit__(self, *exc_info) -> None:
        set_precision(self._previous)
