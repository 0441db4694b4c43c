"""Adam with step-decayed learning rate, and the training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from hwseg.errors import ConfigError, NumericError, ShapeError
from hwseg.evalkit import evaluate_arrays
from hwseg.losses import LossConfig, loss_backward, one_hot
from hwseg.network.unet import ParameterSet, UNet, UNetConfig, check_params, init_params, normalize_input

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamConfig:
    lr0: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    decay: float = 0.8
    decay_every: int = 30
    batch_size: int = 32

    def __post_init__(self):
        if not 0 < self.decay <= 1:
            raise ConfigError("decay must be in (0, 1]")
        if self.decay_every < 1:
            raise ConfigError("decay_every must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.lr0 > 0:
            raise ConfigError("lr0 must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ParameterSet) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def lr_at(epoch: int, config: AdamConfig = AdamConfig()) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.lr0 * config.decay ** (epoch // config.decay_every)


def adam_step(params: ParameterSet, grads: ParameterSet, state: AdamState, lr: float,
              config: AdamConfig = AdamConfig()) -> None:
    """Bias-corrected Adam update applied to ``params`` in place.

    Every gradient is validated before anything is touched, so a rejected
    step leaves both parameters and state unchanged.
    """
    if set(grads) != set(params):
        raise ShapeError("gradient names do not match parameters")
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape or state.m.get(k, g).shape != p.shape:
            raise ShapeError(f"{k}: gradient/state shape does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {k}")
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    bc1 = 1 - b1 ** t
    bc2 = 1 - b2 ** t
    for k, p in params.items():
        g = grads[k]
        m = state.m.setdefault(k, np.zeros_like(p))
        v = state.v.setdefault(k, np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= (lr * (m / bc1) / (np.sqrt(v / bc2) + config.eps_adam)).astype(p.dtype)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_iou_h: float
    val_iou_nonh: float

    def line(self) -> str:
        return (f"epoch={self.epoch} lr={self.lr:.6g} train_loss={self.train_loss:.6f} "
                f"val_iou_h={self.val_iou_h:.6f} val_iou_nonh={self.val_iou_nonh:.6f}")

    @classmethod
    def parse(cls, line: str) -> "EpochRecord":
        kv = dict(part.split("=", 1) for part in line.split())
        return cls(int(kv["epoch"]), float(kv["lr"]), float(kv["train_loss"]),
                   float(kv["val_iou_h"]), float(kv["val_iou_nonh"]))


@dataclass
class TrainResult:
    params: ParameterSet
    log: List[EpochRecord]
    state: AdamState


def train_step(net: UNet, params: ParameterSet, images: np.ndarray, masks: np.ndarray,
               loss_cfg: LossConfig) -> Tuple[float, ParameterSet]:
    dtype = next(iter(params.values())).dtype
    x = normalize_input(images, dtype=dtype)
    t = one_hot(masks, net.config.num_classes, dtype=dtype)
    z, tape = net.logits(params, x)
    value, dz = loss_backward(loss_cfg, z, t)
    return value, net.backward(dz, tape)


def train(config: AdamConfig, unet: UNetConfig, loss: LossConfig, dataset: Tuple[np.ndarray, np.ndarray],
          epochs: int, seed: int, val: Optional[Tuple[np.ndarray, np.ndarray]] = None,
          params: Optional[ParameterSet] = None, state: Optional[AdamState] = None, start_epoch: int = 0,
          log_path=None, on_epoch: Optional[Callable[[EpochRecord, ParameterSet, AdamState], None]] = None,
          ) -> TrainResult:
    """Train from ``start_epoch`` up to ``epochs`` (exclusive) on ``(images, masks)``.

    Shuffling for epoch ``k`` depends only on ``(seed, k)``, so a run resumed
    from a saved ``params``/``state`` pair continues exactly where it left off.
    Without ``val`` the IoU columns are NaN.
    """
    images, masks = dataset
    if len(images) == 0:
        raise ConfigError("training dataset is empty")
    if len(images) != len(masks):
        raise ConfigError("image and mask counts differ")
    step = 2 ** unet.levels
    if images.shape[1] % step or images.shape[2] % step:
        raise ConfigError(f"patch size {images.shape[1:]} not divisible by {step}")
    if params is None:
        params = init_params(unet, seed)
    check_params(unet, params)
    state = state or AdamState.zeros_like(params)
    net = UNet(unet)
    records: List[EpochRecord] = []
    last_finite = math.nan
    n = len(images)
    for epoch in range(start_epoch, epochs):
        lr = lr_at(epoch, config)
        order = np.random.default_rng([seed, epoch]).permutation(n)
        losses = []
        for b in range(0, n, config.batch_size):
            idx = order[b:b + config.batch_size]
            try:
                value, grads = train_step(net, params, images[idx], masks[idx], loss)
                if not math.isfinite(value):
                    raise NumericError("non-finite loss")
                adam_step(params, grads, state, lr, config)
            except NumericError as exc:
                raise NumericError(f"training diverged at epoch {epoch} ({exc}); "
                                   f"last finite loss {last_finite:.6g}") from exc
            last_finite = value
            losses.append(value)
        if val is not None and len(val[0]):
            rep = evaluate_arrays(unet, params, val[0], val[1])
            iou_nonh, iou_h = rep.iou[0], rep.iou[1]
        else:
            iou_nonh = iou_h = math.nan
        rec = EpochRecord(epoch, lr, float(np.mean(losses)), iou_h, iou_nonh)
        records.append(rec)
        log.info(rec.line())
        if log_path is not None:
            with open(Path(log_path), "a") as fh:
                fh.write(rec.line() + "\n")
        if on_epoch is not None:
            on_epoch(rec, params, state)
    return TrainResult(params, records, state)


def save_state(path, state: AdamState, epoch: int) -> None:
    arrays = {f"m/{k}": v for k, v in state.m.items()}
    arrays.update({f"v/{k}": v for k, v in state.v.items()})
    arrays["__step__"] = np.array(state.step)
    arrays["__epoch__"] = np.array(epoch)
    tmp = Path(str(path) + ".tmp.npz")
    np.savez(tmp, **arrays)
    tmp.replace(path)


def load_state(path) -> Tuple[AdamState, int]:
    with np.load(path) as data:
        state = AdamState(step=int(data["__step__"]))
        for key in data.files:
            if key.startswith("m/"):
                state.m[key[2:]] = data[key]
            elif key.startswith("v/"):
                state.v[key[2:]] = data[key]
        return state, int(data["__epoch__"])
