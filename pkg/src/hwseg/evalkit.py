"""Segmentation and OCR-side metrics, plus handwriting removal."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import List

import numpy as np

from hwseg.errors import ConfigError, DomainError, ShapeError
from hwseg.network.unet import ParameterSet, UNet, UNetConfig, check_params, normalize_input
from hwseg.synth.dataset import load_split

BACKGROUND, HANDWRITTEN = 0, 1
FILL_POLICIES = ("white", "background-median")


def decode_segmentation(y: np.ndarray, tol: float = 1e-4) -> np.ndarray:
    """``[B, 2, H, W]`` probabilities to ``[B, H, W]`` masks; exact ties go to background."""
    y = np.asarray(y)
    if y.ndim != 4 or y.shape[1] != 2:
        raise ShapeError(f"expected [B, 2, H, W] probabilities, got {y.shape}")
    if not np.all(np.isfinite(y)) or np.abs(y.sum(axis=1) - 1).max(initial=0) > tol \
            or y.min(initial=0) < -tol:
        raise DomainError("input is not a per-pixel probability distribution")
    return (y[:, HANDWRITTEN] > y[:, BACKGROUND]).astype(np.uint8)


def iou(pred: np.ndarray, gt: np.ndarray, class_id: int) -> float:
    """IoU of one class; 1.0 when the class is neither present nor predicted."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    a = pred == class_id
    b = gt == class_id
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


@dataclass
class IoUReport:
    intersection: List[int] = field(default_factory=lambda: [0, 0])
    union: List[int] = field(default_factory=lambda: [0, 0])

    @classmethod
    def from_masks(cls, pred, gt, num_classes: int = 2) -> "IoUReport":
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ShapeError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
        inter, union = [], []
        for c in range(num_classes):
            a = pred == c
            b = gt == c
            inter.append(int(np.count_nonzero(a & b)))
            union.append(int(np.count_nonzero(a | b)))
        return cls(inter, union)

    def __add__(self, other: "IoUReport") -> "IoUReport":
        return IoUReport([a + b for a, b in zip(self.intersection, other.intersection)],
                         [a + b for a, b in zip(self.union, other.union)])

    @property
    def iou(self) -> List[float]:
        return [i / u if u else 1.0 for i, u in zip(self.intersection, self.union)]

    def to_dict(self) -> dict:
        names = ["non_handwritten", "handwritten"]
        return {
            names[c] if c < 2 else f"class_{c}": {
                "intersection": self.intersection[c],
                "union": self.union[c],
                "iou": self.iou[c],
            }
            for c in range(len(self.intersection))
        }


@dataclass(frozen=True)
class OcrCounts:
    correct: int
    incorrect: int
    missing: int

    def __post_init__(self):
        if min(self.correct, self.incorrect, self.missing) < 0:
            raise DomainError("OCR counts must be non-negative")


def ocr_accuracy(counts: OcrCounts) -> float:
    """Correct / (correct + incorrect + missing) in percent, 2 decimals half-up."""
    total = counts.correct + counts.incorrect + counts.missing
    if total == 0:
        raise DomainError("accuracy undefined for zero characters")
    pct = Decimal(100 * counts.correct) / Decimal(total)
    return float(pct.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def read_ocr_counts(path) -> OcrCounts:
    """Read ``{"correct": .., "incorrect": .., "missing": ..}``."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or set(data) != {"correct", "incorrect", "missing"}:
        raise ConfigError("OCR counts file needs exactly correct/incorrect/missing")
    return OcrCounts(int(data["correct"]), int(data["incorrect"]), int(data["missing"]))


def remove_handwritten(img: np.ndarray, pred: np.ndarray, fill: str = "background-median") -> np.ndarray:
    img = np.asarray(img, dtype=np.uint8)
    pred = np.asarray(pred)
    if img.shape != pred.shape:
        raise ShapeError(f"image {img.shape} and mask {pred.shape} differ")
    hit = pred == 1
    if fill == "white":
        value = 255
    elif fill == "background-median":
        rest = img[~hit]
        # half-up so an even split between 247 and 248 reads as 248
        value = int(np.floor(np.median(rest) + 0.5)) if rest.size else 255
    else:
        raise ConfigError(f"unknown fill policy {fill!r}; choose from {FILL_POLICIES}")
    out = img.copy()
    out[hit] = value
    return out


def overlay(img: np.ndarray, pred: np.ndarray, alpha: float = 0.6) -> np.ndarray:
    """RGB rendering with predicted handwriting blended towards red."""
    rgb = np.repeat(np.asarray(img, dtype=np.float64)[..., None], 3, axis=2)
    red = np.array([255.0, 0.0, 0.0])
    hit = np.asarray(pred) == 1
    rgb[hit] = (1 - alpha) * rgb[hit] + alpha * red
    return np.rint(rgb).astype(np.uint8)


def predict_masks(config: UNetConfig, params: ParameterSet, images: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Decoded masks for a stack of uint8 pages ``[N, H, W]``."""
    check_params(config, params)
    net = UNet(config)
    dtype = next(iter(params.values())).dtype
    out = []
    for i in range(0, len(images), batch_size):
        x = normalize_input(images[i:i + batch_size], dtype=dtype)
        out.append(decode_segmentation(net.forward(params, x)))
    if not out:
        return np.zeros((0,) + tuple(np.shape(images)[1:]), dtype=np.uint8)
    return np.concatenate(out)


def evaluate_arrays(config: UNetConfig, params: ParameterSet, images, masks, batch_size: int = 16) -> IoUReport:
    if len(images) == 0:
        raise ConfigError("cannot evaluate an empty dataset")
    report = IoUReport([0] * config.num_classes, [0] * config.num_classes)
    for i in range(0, len(images), batch_size):
        pred = predict_masks(config, params, images[i:i + batch_size], batch_size)
        report = report + IoUReport.from_masks(pred, masks[i:i + batch_size], config.num_classes)
    return report


def evaluate_dataset(params: ParameterSet, config: UNetConfig, dataset_dir, split: str = "val",
                     batch_size: int = 16) -> IoUReport:
    """Pooled IoU: counts summed over every image before dividing."""
    images, masks = load_split(dataset_dir, split)
    return evaluate_arrays(config, params, images, masks, batch_size)


def write_report(path, report: IoUReport, config_hash: str, checkpoint_hash: str) -> None:
    doc = {"classes": report.to_dict(), "config_hash": config_hash, "checkpoint_hash": checkpoint_hash}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
