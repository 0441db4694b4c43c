from hwseg.network.checkpoint import checkpoint_hash, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from hwseg.network.layers import LayerSpec
from hwseg.network.unet import (
    DownsampleMode,
    ParameterSet,
    UNet,
    UNetConfig,
    architecture,
    check_params,
    init_params,
    normalize_input,
    param_count,
    unet_forward,
)

__all__ = [
    "DownsampleMode",
    "LayerSpec",
    "ParameterSet",
    "UNet",
    "UNetConfig",
    "architecture",
    "check_params",
    "checkpoint_hash",
    "decode_checkpoint",
    "encode_checkpoint",
    "init_params",
    "load_checkpoint",
    "normalize_input",
    "param_count",
    "save_checkpoint",
    "unet_forward",
]
