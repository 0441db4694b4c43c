"""Ink extraction and compositing in inverted-intensity space.

Adding two scans directly saturates the white background and wipes out
scan noise. Working on ``255 - pixel`` keeps paper at ~0, so layers add
without clipping except where dark strokes overlap.
"""

from __future__ import annotations

from typing import Iterable, Tuple

import numpy as np

from hwseg.errors import ShapeError
from hwseg.synth.otsu import otsu_threshold


def extract_handwritten(sentence: np.ndarray, threshold: int | None = None) -> Tuple[np.ndarray, np.ndarray]:
    """Keep only stroke pixels of a handwriting scan.

    Returns ``(ink, mask)``: ``mask`` is 1 below the Otsu threshold and
    ``ink`` is the original intensity there, pure white elsewhere. This
    removes the pasted-word block edges that otherwise show up as seams.
    """
    sentence = np.asarray(sentence, dtype=np.uint8)
    if threshold is None:
        threshold = otsu_threshold(sentence)
    mask = (sentence < threshold).astype(np.uint8)
    ink = np.where(mask == 1, sentence, np.uint8(255)).astype(np.uint8)
    return ink, mask


def compose_layers(printed: np.ndarray, layers: Iterable[Tuple[np.ndarray, np.ndarray, int]]) -> np.ndarray:
    """Add each ``(ink, mask, offset)`` layer onto ``printed`` with one final clamp."""
    printed = np.asarray(printed, dtype=np.uint8)
    acc = 255 - printed.astype(np.int32)
    for ink, mask, offset in layers:
        ink = np.asarray(ink)
        mask = np.asarray(mask)
        if ink.shape != printed.shape or mask.shape != printed.shape:
            raise ShapeError(f"layer {ink.shape}/{mask.shape} does not match page {printed.shape}")
        if offset < 0:
            raise ValueError("offset must be >= 0")
        contrib = np.maximum(0, (255 - ink.astype(np.int32)) - int(offset))
        acc += mask.astype(np.int32) * contrib
    return (255 - np.minimum(255, acc)).astype(np.uint8)


def invert_compose(printed: np.ndarray, ink: np.ndarray, mask: np.ndarray, offset: int = 0) -> np.ndarray:
    """``255 - min(255, (255 - printed) + mask * max(0, (255 - ink) - offset))``."""
    return compose_layers(printed, [(ink, mask, offset)])
