from .accounting import count_params_flops, model_cost
from .blocks import (CsamParams, MfafmParams, MfibaParams, MfibParams, csam_forward, mfafm_forward,
                     mfib_branches, mfib_forward, mfiba_forward)
from .config import ModelConfig
from .net import init_params, mcafnet_forward, param_layout

__all__ = [
    "ModelConfig", "init_params", "mcafnet_forward", "param_layout", "count_params_flops", "model_cost",
    "MfibParams", "MfibaParams", "CsamParams", "MfafmParams",
    "mfib_forward", "mfib_branches", "mfiba_forward", "csam_forward", "mfafm_forward",
]
