"""Geometric placement of extracted handwriting onto a canvas."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from hwseg.errors import PlacementError, ShapeError


@dataclass(frozen=True)
class TransformParams:
    """Scale and rotation act about the sentence image centre.

    ``translation`` is ``(dy, dx)`` in canvas pixels: with scale 1 and no
    rotation, source pixel ``(r, c)`` lands on ``(r + dy, c + dx)``.
    ``offset`` lightens the ink in inverted space.
    """

    scale: float = 1.0
    rotation: float = 0.0
    translation: Tuple[int, int] = (0, 0)
    offset: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be > 0")
        if self.offset < 0:
            raise ValueError("offset must be >= 0")
        object.__setattr__(self, "translation", tuple(int(v) for v in self.translation))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["translation"] = list(self.translation)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TransformParams":
        return cls(float(d["scale"]), float(d["rotation"]), tuple(d["translation"]), int(d["offset"]))


def _inverse_affine(p: TransformParams, src_shape):
    h, w = src_shape
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    theta = np.deg2rad(p.rotation)
    c, s = np.cos(theta), np.sin(theta)
    # (row, col) coordinates; positive angles turn counter-clockwise on screen
    forward = p.scale * np.array([[c, -s], [s, c]])
    inv = np.linalg.inv(forward)
    shift = center + np.asarray(p.translation, dtype=float)
    return inv, center - inv @ shift


def apply_transform(ink: np.ndarray, mask: np.ndarray, p: TransformParams, canvas: Tuple[int, int]):
    """Resample ``ink`` (bilinear) and ``mask`` with identical geometry.

    The ink is interpolated in inverted space so uncovered canvas is white;
    the mask is interpolated as a float and re-binarized at 0.5.
    """
    ink = np.asarray(ink, dtype=np.uint8)
    mask = np.asarray(mask, dtype=np.uint8)
    if ink.shape != mask.shape:
        raise ShapeError(f"ink {ink.shape} and mask {mask.shape} differ")
    matrix, offset = _inverse_affine(p, ink.shape)
    canvas = tuple(int(v) for v in canvas)
    inv_ink = ndimage.affine_transform(
        (255.0 - ink.astype(np.float64)), matrix, offset, output_shape=canvas, order=1, mode="grid-constant", cval=0.0
    )
    soft = ndimage.affine_transform(
        mask.astype(np.float64), matrix, offset, output_shape=canvas, order=1, mode="grid-constant", cval=0.0
    )
    out_mask = (soft >= 0.5).astype(np.uint8)
    if not out_mask.any():
        raise PlacementError("transformed handwriting falls outside the canvas")
    out_ink = (255 - np.clip(np.rint(inv_ink), 0, 255)).astype(np.uint8)
    return out_ink, out_mask
