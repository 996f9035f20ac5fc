"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import DataError

MODES = ("enhanced", "depth_only")


def check_positive(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise DataError(f"{name} must be a positive number, got {value!r}")
    return float(value)


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise DataError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def check_threshold(value) -> float:
    if not isinstance(value, numbers.Real) or not -1.0 < value < 1.0:
        raise DataError(f"occupancy_threshold must lie in (-1, 1), got {value!r}")
    return float(value)


def check_max_weight(value) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise DataError(f"max_weight must be a positive integer, got {value!r}")
    return int(value)


def check_n_jobs(value) -> int:
    if value is None:
        return 1
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise DataError(f"n_jobs must be a positive integer, got {value!r}")
    return int(value)


def check_image(a, name: str, shape=None, allow_nan: bool = True) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.size == 0:
        raise DataError(f"{name} must be a non-empty 2D image, got shape {a.shape}")
    if shape is not None and a.shape != tuple(shape):
        raise DataError(f"{name} has shape {a.shape}, expected {tuple(shape)}")
    if not allow_nan and np.issubdtype(a.dtype, np.floating) and not np.all(np.isfinite(a)):
        raise DataError(f"{name} contains non-finite values")
    return a


def check_same_shape(*named):
    shapes = {name: np.shape(a) for name, a in named}
    if len(set(shapes.values())) > 1:
        raise DataError(f"image shapes disagree: {shapes}")
