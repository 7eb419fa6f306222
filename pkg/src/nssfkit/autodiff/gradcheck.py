"""Finite-difference gradient oracle, independent of the tape."""

from __future__ import annotations

import numpy as np


def numerical_grad(f, x: np.ndarray, h: float = 1e-4, indices=None) -> np.ndarray:
    """Fourth-order central difference of scalar ``f`` w.r.t. array ``x``.

    ``x`` is perturbed in place and restored. With ``indices`` only those
    flat positions are evaluated; the others stay zero.
    """
    grad = np.zeros(x.shape)
    for i in (range(x.size) if indices is None else indices):
        pos = np.unravel_index(i, x.shape)
        orig = x[pos]
        vals = []
        for step in (-2, -1, 1, 2):
            x[pos] = orig + step * h
            vals.append(float(f()))
        x[pos] = orig
        grad[pos] = (vals[0] - 8.0 * vals[1] + 8.0 * vals[2] - vals[3]) / (12.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    return float(np.max(np.abs(analytic - numeric) / (np.abs(numeric) + floor)))
