"""Finite-difference stencils shared across modules."""

from __future__ import annotations

import numpy as np


def diff_clamped(arr, axis, h):
    """Second-order first derivative along ``axis``; one-sided at the ends.

    Needs at least 3 samples along the axis.
    """
    if arr.shape[axis] < 3:
        raise ValueError("need dims >= 3 along the axis to difference")
    arr = np.moveaxis(arr, axis, 0)
    out = np.empty_like(arr)
    out[1:-1] = (arr[2:] - arr[:-2]) / (2.0 * h)
    out[0] = (-3.0 * arr[0] + 4.0 * arr[1] - arr[2]) / (2.0 * h)
    out[-1] = (3.0 * arr[-1] - 4.0 * arr[-2] + arr[-3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def diff_periodic(arr, axis, h, order=4):
    """Centered first derivative along ``axis`` with wrap-around."""
    if order == 2:
        return (np.roll(arr, -1, axis) - np.roll(arr, 1, axis)) / (2.0 * h)
    if order == 4:
        return (
            8.0 * (np.roll(arr, -1, axis) - np.roll(arr, 1, axis))
            - (np.roll(arr, -2, axis) - np.roll(arr, 2, axis))
        ) / (12.0 * h)
    raise ValueError("order must be 2 or 4")


MAX_SYMBOL_ORDER4 = 1.3722115097139085  # max_k |8 sin k - sin 2k| / 6, for CFL bounds
