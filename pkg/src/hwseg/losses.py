"""Cross-entropy loss family for imbalanced pixel classification.

All losses share one form::

    L = (1/N) * sum_n sum_c  w_c * (1 - y_nc)**gamma * (-t_nc * log y_nc)

with ``N = batch * height * width``. Plain CE uses ``w_c = 1, gamma = 0``;
the balanced variants weight each class by ``1 / (beta_c + eps)`` where
``beta_c`` is the fraction of pixels of class ``c`` in the whole mini-batch.
``beta`` depends only on the labels and is a constant for differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from hwseg.errors import ConfigError, DomainError, ShapeError
from hwseg.network.layers import softmax_channels_forward

Y_MIN = 1e-7
_Y_TOL = 1e-6


class LossVariant(str, Enum):
    CE = "ce"
    DBCE = "dbce"
    DBCE_F = "dbcef"
    FOCAL = "fce"


@dataclass(frozen=True)
class LossConfig:
    variant: LossVariant = LossVariant.DBCE_F
    epsilon: float = 1e-4
    gamma: float = 1.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "variant", LossVariant(self.variant))
        except ValueError:
            raise ConfigError(f"unknown loss variant {self.variant!r}") from None
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if not self.gamma >= 0:
            raise ConfigError("gamma must be >= 0")

    @property
    def balanced(self) -> bool:
        return self.variant in (LossVariant.DBCE, LossVariant.DBCE_F)

    @property
    def focal_gamma(self) -> float:
        return self.gamma if self.variant in (LossVariant.DBCE_F, LossVariant.FOCAL) else 0.0


def one_hot(labels: np.ndarray, num_classes: int = 2, dtype=np.float32) -> np.ndarray:
    """``[B, H, W]`` integer labels to ``[B, C, H, W]`` indicators."""
    labels = np.asarray(labels)
    if labels.ndim == 4 and labels.shape[1] == 1:
        labels = labels[:, 0]
    if labels.ndim != 3:
        raise ShapeError(f"labels must be [B, H, W], got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DomainError("label out of class range")
    classes = np.arange(num_classes).reshape(1, -1, 1, 1)
    return (labels[:, None] == classes).astype(dtype)


def class_frequency(t: np.ndarray) -> np.ndarray:
    """Pooled per-class pixel fraction over the whole mini-batch."""
    t = np.asarray(t)
    if t.ndim != 4:
        raise ShapeError(f"one-hot target must be [B, C, H, W], got {t.shape}")
    n = t.shape[0] * t.shape[2] * t.shape[3]
    if n == 0:
        raise ShapeError("empty batch")
    counts = np.count_nonzero(t == 1, axis=(0, 2, 3))
    return counts / n


def class_weights(t: np.ndarray, epsilon: float) -> np.ndarray:
    return 1.0 / (class_frequency(t) + epsilon)


def _check_pair(y, t):
    y = np.asarray(y)
    t = np.asarray(t)
    if y.shape != t.shape:
        raise ShapeError(f"prediction {y.shape} and target {t.shape} differ")
    if y.size and (y.min() < -_Y_TOL or y.max() > 1 + _Y_TOL):
        raise DomainError("probabilities outside [0, 1]")
    return y, t


def ce_pixel(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    y, t = _check_pair(y, t)
    return -t * np.log(np.clip(y, Y_MIN, 1.0))


def fce_pixel(y: np.ndarray, t: np.ndarray, gamma: float) -> np.ndarray:
    if gamma < 0:
        raise ConfigError("gamma must be >= 0")
    y, t = _check_pair(y, t)
    yc = np.clip(y, Y_MIN, 1.0)
    return (1.0 - yc) ** gamma * (-t * np.log(yc))


def _reduce(per_pixel: np.ndarray, weights) -> float:
    n = per_pixel.shape[0] * per_pixel.shape[2] * per_pixel.shape[3]
    per_class = per_pixel.sum(axis=(0, 2, 3), dtype=np.float64)
    if weights is not None:
        per_class = per_class * weights
    return float(per_class.sum() / n)


def loss_ce(y, t) -> float:
    return _reduce(ce_pixel(y, t), None)


def loss_fce(y, t, gamma: float = 1.0) -> float:
    return _reduce(fce_pixel(y, t, gamma), None)


def loss_dbce(y, t, epsilon: float = 1e-4) -> float:
    return _reduce(ce_pixel(y, t), class_weights(t, epsilon))


def loss_dbcef(y, t, epsilon: float = 1e-4, gamma: float = 1.0) -> float:
    return _reduce(fce_pixel(y, t, gamma), class_weights(t, epsilon))


def loss_forward(config: LossConfig, y, t) -> float:
    weights = class_weights(t, config.epsilon) if config.balanced else None
    return _reduce(fce_pixel(y, t, config.focal_gamma), weights)


def loss_grad_y(config: LossConfig, y, t) -> np.ndarray:
    """d(loss)/d(y), with zero gradient where ``y`` sits on the clamp."""
    y, t = _check_pair(y, t)
    n = y.shape[0] * y.shape[2] * y.shape[3]
    gamma = config.focal_gamma
    yc = np.clip(y, Y_MIN, 1.0)
    omy = 1.0 - yc
    logy = np.log(yc)
    if gamma == 0:
        g = -t / yc
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            dmod = np.where(omy > 0, gamma * omy ** (gamma - 1.0), 0.0)
        g = t * (dmod * logy - omy ** gamma / yc)
    g = np.where(y < Y_MIN, 0.0, g)
    if config.balanced:
        g = g * class_weights(t, config.epsilon).reshape(1, -1, 1, 1)
    return (g / n).astype(y.dtype, copy=False)


def loss_backward(config: LossConfig, logits: np.ndarray, t: np.ndarray):
    """Loss value and its gradient with respect to the logits."""
    y, _ = softmax_channels_forward(logits)
    value = loss_forward(config, y, t)
    g = loss_grad_y(config, y, t)
    dz = y * (g - (g * y).sum(axis=1, keepdims=True))
    return value, dz.astype(logits.dtype, copy=False)
