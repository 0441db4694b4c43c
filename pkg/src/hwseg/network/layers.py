"""U-Net building blocks with hand-written backward passes.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache. The public functions use the
``[B, C, H, W]`` layout. Internally everything runs channels-last
(``[B, H, W, C]``, the ``nhwc_*`` functions): im2col rows are then pixels,
which keeps the GEMMs tall instead of skinny and roughly doubles throughput
for narrow layers. The network itself calls the ``nhwc_*`` core directly.

Arrays keep the dtype of their inputs, so the same code serves float32
training and float64 gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from hwseg.errors import NumericError, ShapeError

Pair = Tuple[int, int]

KINDS = ("conv", "maxpool", "transposed_conv", "relu", "concat", "softmax")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: Pair = (1, 1)
    stride: Pair = (1, 1)
    padding: Pair = (0, 0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "maxpool" and (self.kernel, self.stride) != ((2, 2), (2, 2)):
            raise ValueError("maxpool is fixed to 2x2 stride 2")
        if self.kind == "transposed_conv" and (self.kernel, self.stride) != ((4, 4), (2, 2)):
            raise ValueError("transposed_conv is fixed to 4x4 stride 2")

    @property
    def has_params(self) -> bool:
        return self.kind in ("conv", "transposed_conv")

    def weight_shape(self) -> tuple:
        kh, kw = self.kernel
        if self.kind == "conv":
            return (self.out_channels, self.in_channels, kh, kw)
        if self.kind == "transposed_conv":
            return (self.in_channels, self.out_channels, kh, kw)
        return ()

    def param_count(self) -> int:
        if not self.has_params:
            return 0
        kh, kw = self.kernel
        return self.out_channels * self.in_channels * kh * kw + self.out_channels


def _nchw(a):
    return np.ascontiguousarray(a.transpose(0, 3, 1, 2))


def _nhwc(a):
    return np.ascontiguousarray(a.transpose(0, 2, 3, 1))


# -- im2col machinery (channels-last) ---------------------------------------

def _out_size(size: int, k: int, s: int, p: int) -> int:
    return (size + 2 * p - k) // s + 1


def _im2col(x, kh, kw, stride, padding):
    """Rows are output pixels ``(b, ho, wo)``, columns ``(i, j, c)``."""
    B, H, W, C = x.shape
    sh, sw = stride
    ph, pw = padding
    Ho = _out_size(H, kh, sh, ph)
    Wo = _out_size(W, kw, sw, pw)
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if (ph or pw) else x
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, :sh * Ho:sh, :sw * Wo:sw]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
    return cols.reshape(B * Ho * Wo, kh * kw * C), Ho, Wo


def _col2im(cols, x_shape, kh, kw, stride, padding, Ho, Wo):
    """Adjoint of :func:`_im2col`: scatter-add rows back into an image."""
    B, H, W, C = x_shape
    sh, sw = stride
    ph, pw = padding
    cols = cols.reshape(B, Ho, Wo, kh, kw, C)
    xp = np.zeros((B, H + 2 * ph, W + 2 * pw, C), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, i:i + sh * Ho:sh, j:j + sw * Wo:sw] += cols[:, :, :, i, j]
    if ph or pw:
        xp = np.ascontiguousarray(xp[:, ph:ph + H, pw:pw + W])
    return xp


# -- convolution ------------------------------------------------------------

def nhwc_conv2d_forward(x, weight, bias, stride: Pair = (1, 1), padding: Pair = (0, 0)):
    """``x`` is ``[B, H, W, Cin]``; ``weight`` keeps the ``[Cout, Cin, kh, kw]`` layout."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and weight")
    B, H, W, C = x.shape
    Co, Ci, kh, kw = weight.shape
    if C != Ci:
        raise ShapeError(f"input has {C} channels, weight expects {Ci}")
    if H + 2 * padding[0] < kh or W + 2 * padding[1] < kw:
        raise ShapeError("kernel larger than padded input")
    cols, Ho, Wo = _im2col(x, kh, kw, stride, padding)
    wmat = weight.transpose(2, 3, 1, 0).reshape(kh * kw * Ci, Co)
    out = cols @ wmat
    out += bias
    return out.reshape(B, Ho, Wo, Co), (x.shape, cols, wmat, weight.shape, stride, padding, Ho, Wo)


def nhwc_conv2d_backward(dout, cache, need_dx: bool = True):
    x_shape, cols, wmat, w_shape, stride, padding, Ho, Wo = cache
    Co, Ci, kh, kw = w_shape
    dmat = dout.reshape(-1, Co)
    dw = (cols.T @ dmat).reshape(kh, kw, Ci, Co).transpose(3, 2, 0, 1)
    db = dmat.sum(axis=0)
    dx = None
    if need_dx:
        ph, pw = padding
        if stride == (1, 1) and ph < kh and pw < kw:
            # stride 1: the input gradient is a full correlation of dout with
            # the flipped kernel; gathering beats scatter-adding columns
            dcols, _, _ = _im2col(dout, kh, kw, (1, 1), (kh - 1 - ph, kw - 1 - pw))
            wflip = wmat.reshape(kh, kw, Ci, Co)[::-1, ::-1].transpose(0, 1, 3, 2).reshape(kh * kw * Co, Ci)
            dx = (dcols @ wflip).reshape(x_shape)
        else:
            dx = _col2im(dmat @ wmat.T, x_shape, kh, kw, stride, padding, Ho, Wo)
    return dx, np.ascontiguousarray(dw), db


def conv2d_forward(x, weight, bias, stride: Pair = (1, 1), padding: Pair = (0, 0)):
    if x.ndim != 4:
        raise ShapeError("conv2d expects 4-D input")
    out, cache = nhwc_conv2d_forward(_nhwc(x), weight, bias, stride, padding)
    return _nchw(out), cache


def conv2d_backward(dout, cache, need_dx: bool = True):
    dx, dw, db = nhwc_conv2d_backward(_nhwc(dout), cache, need_dx)
    return (None if dx is None else _nchw(dx)), dw, db


# -- transposed convolution (4x4, stride 2) ----------------------------------

_T_STRIDE = (2, 2)
_T_PAD = (1, 1)


def nhwc_transposed_conv4x4s2_forward(x, weight, bias):
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("transposed conv expects 4-D input and weight")
    B, H, W, C = x.shape
    Ci, Co, kh, kw = weight.shape
    if (kh, kw) != (4, 4):
        raise ShapeError("transposed conv kernel must be 4x4")
    if C != Ci:
        raise ShapeError(f"input has {C} channels, weight expects {Ci}")
    wmat = weight.transpose(0, 2, 3, 1).reshape(Ci, kh * kw * Co)
    cols = x.reshape(-1, Ci) @ wmat
    out = _col2im(cols, (B, 2 * H, 2 * W, Co), kh, kw, _T_STRIDE, _T_PAD, H, W)
    out += bias
    return out, (x, wmat, weight.shape)


def nhwc_transposed_conv4x4s2_backward(dout, cache, need_dx: bool = True):
    x, wmat, w_shape = cache
    Ci, Co, kh, kw = w_shape
    dcols, _, _ = _im2col(dout, kh, kw, _T_STRIDE, _T_PAD)
    xmat = x.reshape(-1, Ci)
    dw = (xmat.T @ dcols).reshape(Ci, kh, kw, Co).transpose(0, 3, 1, 2)
    db = dout.sum(axis=(0, 1, 2))
    dx = None
    if need_dx:
        dx = (dcols @ wmat.T).reshape(x.shape)
    return dx, np.ascontiguousarray(dw), db


def transposed_conv4x4s2_forward(x, weight, bias):
    """Upsample ``H x W`` to ``2H x 2W``.

    This is the exact adjoint of a 4x4 stride-2 padding-1 convolution whose
    weight is ``weight`` read as ``[out=in_ch, in=out_ch, 4, 4]``.
    """
    if x.ndim != 4:
        raise ShapeError("transposed conv expects 4-D input")
    out, cache = nhwc_transposed_conv4x4s2_forward(_nhwc(x), weight, bias)
    return _nchw(out), cache


def transposed_conv4x4s2_backward(dout, cache, need_dx: bool = True):
    dx, dw, db = nhwc_transposed_conv4x4s2_backward(_nhwc(dout), cache, need_dx)
    return (None if dx is None else _nchw(dx)), dw, db


# -- pooling ------------------------------------------------------------------

def nhwc_maxpool2x2_forward(x):
    B, H, W, C = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"maxpool needs even spatial dims, got {H}x{W}")
    blocks = x.reshape(B, H // 2, 2, W // 2, 2, C).transpose(0, 1, 3, 5, 2, 4).reshape(B, H // 2, W // 2, C, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx)


def nhwc_maxpool2x2_backward(dout, cache):
    x_shape, idx = cache
    B, H, W, C = x_shape
    blocks = np.zeros((B, H // 2, W // 2, C, 4), dtype=dout.dtype)
    np.put_along_axis(blocks, idx[..., None], dout[..., None], axis=-1)
    return blocks.reshape(B, H // 2, W // 2, C, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(x_shape)


def maxpool2x2_forward(x):
    """2x2 stride-2 max pool. Ties route to the first max in row-major block order."""
    if x.ndim != 4:
        raise ShapeError("maxpool expects 4-D input")
    out, cache = nhwc_maxpool2x2_forward(_nhwc(x))
    return _nchw(out), cache


def maxpool2x2_backward(dout, cache):
    return _nchw(nhwc_maxpool2x2_backward(_nhwc(dout), cache))


# -- layout-agnostic pieces -----------------------------------------------------

def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    # subgradient at exactly 0 is 0
    return dout * mask


def concat_forward(a, b, axis: int):
    sa = list(a.shape)
    sb = list(b.shape)
    del sa[axis], sb[axis]
    if sa != sb:
        raise ShapeError(f"cannot concat {a.shape} with {b.shape}")
    return np.concatenate([a, b], axis=axis), a.shape[axis]


def concat_backward(dout, split, axis: int):
    return np.split(dout, [split], axis=axis)


def concat_channels_forward(a, b):
    return concat_forward(a, b, axis=1)


def concat_channels_backward(dout, split):
    return tuple(concat_backward(dout, split, axis=1))


def softmax_forward(z, axis: int):
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logits")
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)
    return y, y


def softmax_backward(dy, y, axis: int):
    return y * (dy - (dy * y).sum(axis=axis, keepdims=True))


def softmax_channels_forward(z):
    return softmax_forward(z, axis=1)


def softmax_channels_backward(dy, y):
    return softmax_backward(dy, y, axis=1)
