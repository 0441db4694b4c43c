"""Binary model checkpoints.

Layout (all integers little-endian uint32)::

    b"SSEG1"
    levels, base_channels, downsample_mode (0 maxpool, 1 sconv),
    num_classes, in_channels, record_count
    record_count x [name_len, name (utf-8), ndim, dims..., float32 data]
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Tuple

import numpy as np

from hwseg.errors import ConfigError
from hwseg.network.unet import DownsampleMode, ParameterSet, UNetConfig, check_params

MAGIC = b"SSEG1"
_MODES = [DownsampleMode.MAXPOOL, DownsampleMode.STRIDED_CONV]


def encode_checkpoint(config: UNetConfig, params: ParameterSet) -> bytes:
    check_params(config, params)
    parts = [MAGIC, struct.pack(
        "<6I", config.levels, config.base_channels, _MODES.index(config.downsample_mode),
        config.num_classes, config.in_channels, len(params),
    )]
    for name, arr in params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<{1 + arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_checkpoint(blob: bytes) -> Tuple[UNetConfig, ParameterSet]:
    if not blob.startswith(MAGIC):
        raise ConfigError("not a checkpoint (bad magic)")
    pos = len(MAGIC)
    try:
        levels, base, mode, classes, in_ch, count = struct.unpack_from("<6I", blob, pos)
        pos += 24
        config = UNetConfig(levels, base, _MODES[mode], classes, in_ch)
        params: ParameterSet = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) * 4
            if pos + size > len(blob):
                raise ConfigError("truncated checkpoint")
            arr = np.frombuffer(blob, dtype="<f4", count=size // 4, offset=pos)
            params[name] = arr.reshape(shape).astype(np.float32)
            pos += size
    except (struct.error, IndexError) as exc:
        raise ConfigError(f"corrupt checkpoint: {exc}") from exc
    if pos != len(blob):
        raise ConfigError("trailing bytes after checkpoint records")
    check_params(config, params)
    return config, params


def save_checkpoint(path, config: UNetConfig, params: ParameterSet) -> str:
    """Write atomically; returns the sha256 of the written bytes."""
    blob = encode_checkpoint(config, params)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    return hashlib.sha256(blob).hexdigest()


def load_checkpoint(path) -> Tuple[UNetConfig, ParameterSet]:
    return decode_checkpoint(Path(path).read_bytes())


def checkpoint_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
