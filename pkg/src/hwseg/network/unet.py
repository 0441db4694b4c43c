"""Encoder-decoder segmentation network.

Each encoder level is two same-padded 3x3 conv+ReLU blocks followed by a
downsampler (2x2 max-pool, or a 4x4 stride-2 conv+ReLU in ``sconv`` mode).
The decoder upsamples with 4x4 stride-2 transposed convs, concatenates the
encoder skip (skip first), and applies two more conv+ReLU blocks. A 1x1
conv produces the class logits, followed by a channel softmax.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np

from hwseg.errors import ConfigError, ShapeError
from hwseg.network import layers as L
from hwseg.network.layers import LayerSpec

ParameterSet = Dict[str, np.ndarray]


class DownsampleMode(str, Enum):
    MAXPOOL = "maxpool"
    STRIDED_CONV = "sconv"


@dataclass(frozen=True)
class UNetConfig:
    levels: int = 4
    base_channels: int = 64
    downsample_mode: DownsampleMode = DownsampleMode.MAXPOOL
    num_classes: int = 2
    in_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "downsample_mode", DownsampleMode(self.downsample_mode))
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.in_channels < 1:
            raise ConfigError("in_channels must be >= 1")

    def widths(self) -> List[int]:
        """Channel count at each encoder level plus the bottleneck."""
        return [self.base_channels * 2 ** i for i in range(self.levels + 1)]


def _conv3(cin, cout):
    return LayerSpec("conv", cin, cout, (3, 3), (1, 1), (1, 1))


def architecture(config: UNetConfig) -> List[Tuple[str, LayerSpec]]:
    """Named parameterised layers in a stable order."""
    w = config.widths()
    arch = []
    cin = config.in_channels
    for lvl in range(config.levels):
        arch.append((f"enc{lvl}.conv1", _conv3(cin, w[lvl])))
        arch.append((f"enc{lvl}.conv2", _conv3(w[lvl], w[lvl])))
        if config.downsample_mode is DownsampleMode.STRIDED_CONV:
            arch.append((f"enc{lvl}.down", LayerSpec("conv", w[lvl], w[lvl], (4, 4), (2, 2), (1, 1))))
        cin = w[lvl]
    arch.append(("mid.conv1", _conv3(cin, w[-1])))
    arch.append(("mid.conv2", _conv3(w[-1], w[-1])))
    for lvl in reversed(range(config.levels)):
        arch.append((f"dec{lvl}.up", LayerSpec("transposed_conv", w[lvl + 1], w[lvl], (4, 4), (2, 2), (1, 1))))
        arch.append((f"dec{lvl}.conv1", _conv3(2 * w[lvl], w[lvl])))
        arch.append((f"dec{lvl}.conv2", _conv3(w[lvl], w[lvl])))
    arch.append(("head", LayerSpec("conv", w[0], config.num_classes, (1, 1), (1, 1), (0, 0))))
    return arch


def param_count(config: UNetConfig) -> int:
    return sum(spec.param_count() for _, spec in architecture(config))


def init_params(config: UNetConfig, seed: int = 0, dtype=np.float32) -> ParameterSet:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params: ParameterSet = {}
    for name, spec in architecture(config):
        kh, kw = spec.kernel
        fan_in = spec.in_channels * kh * kw
        fan_out = spec.out_channels * kh * kw
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{name}.weight"] = rng.uniform(-limit, limit, spec.weight_shape()).astype(dtype)
        params[f"{name}.bias"] = np.zeros(spec.out_channels, dtype=dtype)
    return params


def check_params(config: UNetConfig, params: ParameterSet) -> None:
    expected = {}
    for name, spec in architecture(config):
        expected[f"{name}.weight"] = spec.weight_shape()
        expected[f"{name}.bias"] = (spec.out_channels,)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ConfigError(f"parameter names do not match config (missing={missing[:3]}, extra={extra[:3]})")
    for k, shape in expected.items():
        if params[k].shape != shape:
            raise ConfigError(f"{k}: shape {params[k].shape} != expected {shape}")


def normalize_input(images: np.ndarray, dtype=np.float32) -> np.ndarray:
    """uint8 ``[B, H, W]`` or ``[B, 1, H, W]`` pages to ``[B, 1, H, W]`` in [0, 1]."""
    x = np.asarray(images)
    if x.ndim == 3:
        x = x[:, None]
    if x.ndim != 4:
        raise ShapeError(f"expected a batch of images, got shape {x.shape}")
    if x.dtype == np.uint8:
        return x.astype(dtype) / np.asarray(255.0, dtype=dtype)
    return x.astype(dtype, copy=False)


class UNet:
    """Forward/backward over a :data:`ParameterSet`; holds no parameters itself."""

    def __init__(self, config: UNetConfig):
        self.config = config
        self.arch = dict(architecture(config))

    def _check_input(self, x):
        H, W = x.shape[2:]
        step = 2 ** self.config.levels
        if H % step or W % step:
            raise ShapeError(f"spatial dims {H}x{W} not divisible by {step}")
        if x.shape[1] != self.config.in_channels:
            raise ShapeError(f"expected {self.config.in_channels} input channels, got {x.shape[1]}")

    def _conv(self, params, name, x, tape):
        spec = self.arch[name]
        out, cache = L.nhwc_conv2d_forward(x, params[f"{name}.weight"], params[f"{name}.bias"],
                                           spec.stride, spec.padding)
        tape.append(("conv", name, cache))
        return out

    def _conv_relu(self, params, name, x, tape):
        out = self._conv(params, name, x, tape)
        out, mask = L.relu_forward(out)
        tape.append(("relu", name, mask))
        return out

    def logits(self, params: ParameterSet, x: np.ndarray):
        """Class logits ``[B, C, H, W]`` and the tape needed by :meth:`backward`.

        Activations run channels-last internally; only the input and the
        logits change layout.
        """
        self._check_input(x)
        cfg = self.config
        tape: list = []
        skips = []
        h = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
        for lvl in range(cfg.levels):
            h = self._conv_relu(params, f"enc{lvl}.conv1", h, tape)
            h = self._conv_relu(params, f"enc{lvl}.conv2", h, tape)
            skips.append(h)
            tape.append(("skip", lvl, None))
            if cfg.downsample_mode is DownsampleMode.MAXPOOL:
                h, cache = L.nhwc_maxpool2x2_forward(h)
                tape.append(("pool", None, cache))
            else:
                h = self._conv_relu(params, f"enc{lvl}.down", h, tape)
        h = self._conv_relu(params, "mid.conv1", h, tape)
        h = self._conv_relu(params, "mid.conv2", h, tape)
        for lvl in reversed(range(cfg.levels)):
            name = f"dec{lvl}.up"
            h, cache = L.nhwc_transposed_conv4x4s2_forward(h, params[f"{name}.weight"], params[f"{name}.bias"])
            tape.append(("tconv", name, cache))
            h, split = L.concat_forward(skips[lvl], h, axis=-1)
            tape.append(("concat", lvl, split))
            h = self._conv_relu(params, f"dec{lvl}.conv1", h, tape)
            h = self._conv_relu(params, f"dec{lvl}.conv2", h, tape)
        z = self._conv(params, "head", h, tape)
        return np.ascontiguousarray(z.transpose(0, 3, 1, 2)), tape

    def forward(self, params: ParameterSet, x: np.ndarray) -> np.ndarray:
        z, _ = self.logits(params, x)
        return L.softmax_channels_forward(z)[0]

    def backward(self, dz: np.ndarray, tape) -> ParameterSet:
        """Parameter gradients given d(loss)/d(logits)."""
        grads: ParameterSet = {}
        skip_grads: Dict[int, np.ndarray] = {}
        d = np.ascontiguousarray(dz.transpose(0, 2, 3, 1))
        for i in range(len(tape) - 1, -1, -1):
            kind, name, cache = tape[i]
            if kind == "relu":
                d = L.relu_backward(d, cache)
            elif kind == "conv":
                d, dw, db = L.nhwc_conv2d_backward(d, cache, need_dx=i > 0)
                grads[f"{name}.weight"] = dw
                grads[f"{name}.bias"] = db
            elif kind == "tconv":
                d, dw, db = L.nhwc_transposed_conv4x4s2_backward(d, cache)
                grads[f"{name}.weight"] = dw
                grads[f"{name}.bias"] = db
            elif kind == "concat":
                dskip, d = L.concat_backward(d, cache, axis=-1)
                skip_grads[name] = dskip
            elif kind == "pool":
                d = L.nhwc_maxpool2x2_backward(d, cache)
            elif kind == "skip":
                d = d + skip_grads.pop(name)
            else:  # pragma: no cover
                raise AssertionError(kind)
        return {k: grads[k] for k in self._param_order()}

    def _param_order(self):
        for name in self.arch:
            yield f"{name}.weight"
            yield f"{name}.bias"


def unet_forward(config: UNetConfig, params: ParameterSet, images: np.ndarray) -> np.ndarray:
    """Per-pixel class probabilities ``[B, C, H, W]`` for a batch of pages."""
    check_params(config, params)
    dtype = next(iter(params.values())).dtype
    x = normalize_input(images, dtype=dtype)
    return UNet(config).forward(params, x)
