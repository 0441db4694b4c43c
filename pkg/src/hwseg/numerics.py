"""Dense tensor helpers and the finite-difference gradient oracle.

Tensors are plain :class:`numpy.ndarray` objects in ``[batch, channel,
height, width]`` layout. Training uses float32 ("standard" precision);
gradient checks run in float64 ("high").
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from hwseg.errors import NumericError, ShapeError

STANDARD = np.float32
HIGH = np.float64

_PRECISIONS = {"standard": STANDARD, "high": HIGH}


def as_dtype(precision) -> np.dtype:
    if isinstance(precision, str):
        try:
            return np.dtype(_PRECISIONS[precision])
        except KeyError:
            raise ValueError(f"unknown precision {precision!r}") from None
    return np.dtype(precision)


def tensor_new(shape: Sequence[int], fill: float = 0.0, precision="standard") -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise ShapeError(f"invalid shape {shape}")
    return np.full(shape, fill, dtype=as_dtype(precision))


def elementwise(a: np.ndarray, b: np.ndarray, f: Callable) -> np.ndarray:
    """Apply ``f`` pairwise. No broadcasting: shapes must be identical."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return np.asarray(f(a, b))


def reduce_sum(a: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    a = np.asarray(a)
    axes = tuple(int(ax) for ax in axes)
    if len(set(axes)) != len(axes):
        raise ShapeError(f"repeated axes {axes}")
    for ax in axes:
        if not -a.ndim <= ax < a.ndim:
            raise ShapeError(f"axis {ax} out of range for ndim {a.ndim}")
    return np.sum(a, axis=axes)


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x`` is perturbed in place one coordinate at a time and restored, so
    ``f`` must not keep a reference to it between calls.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    x = np.asarray(x)
    if x.dtype != HIGH:
        raise NumericError("finite differences require float64 input")
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Elementwise max of ``|a-b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=HIGH)
    b = np.asarray(b, dtype=HIGH)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))
