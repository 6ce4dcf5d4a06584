"""RGB-to-hyperspectral reconstruction networks."""

from .base import (
    ARCHITECTURES,
    ModelSpec,
    ReconNetwork,
    build_network,
    count_params_flops,
    default_spec,
)
from .hrnet import HRNet
from .hscnn_d import HSCNND
from .mst import MSTPlusPlus, block_diagonal, s_msa

__all__ = [
    "ARCHITECTURES",
    "HRNet",
    "HSCNND",
    "MSTPlusPlus",
    "ModelSpec",
    "ReconNetwork",
    "block_diagonal",
    "build_network",
    "count_params_flops",
    "default_spec",
    "s_msa",
]
