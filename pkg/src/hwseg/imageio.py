"""PNG reading/writing for 8-bit grayscale pages and binary masks."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

LUMA = np.array([0.299, 0.587, 0.114])


def to_gray(arr: np.ndarray) -> np.ndarray:
    """Luma-weighted grayscale; ``np.rint`` rounds half to even."""
    arr = np.asarray(arr)
    if arr.ndim == 2:
        return arr.astype(np.uint8)
    rgb = arr[..., :3].astype(np.float64)
    return np.clip(np.rint(rgb @ LUMA), 0, 255).astype(np.uint8)


def read_gray(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode == "L":
            return np.array(im, dtype=np.uint8)
        if im.mode == "LA":
            return np.array(im)[..., 0].astype(np.uint8)
        if im.mode in ("1", "I", "I;16", "F"):
            return np.array(im.convert("L"), dtype=np.uint8)
        return to_gray(np.array(im.convert("RGB")))


def write_gray(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise TypeError(f"expected uint8 image, got {img.dtype}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img).save(path, format="PNG", optimize=False)


def read_mask(path) -> np.ndarray:
    return (read_gray(path) >= 128).astype(np.uint8)


def write_mask(path, mask: np.ndarray) -> None:
    write_gray(path, (np.asarray(mask) > 0).astype(np.uint8) * 255)


def write_rgb(path, rgb: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path, format="PNG")
