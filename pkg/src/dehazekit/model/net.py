"""Encoder-decoder dehazing network with skip fusion and a global residual.

The encoder stacks block cascades between stride-2 convs; the decoder
upsamples with the colour-aware bridge and fuses two encoder scales."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .. import tensor as T
from ..errors import ShapeError
from ..params import ParamStore
from ..rng import Rng
from ..tensor import Tensor
from . import blocks as B
from .config import ModelConfig

STAGES = ("enc1", "enc2", "enc3", "dec4", "dec5")


def param_layout(cfg: ModelConfig) -> list:
    e = cfg.embed_dims
    lay = B._conv("embed", e[0], cfg.in_channels, 3)

    def stage(i):
        out = []
        for j in range(cfg.blocks_in_stage(i)):
            out += B.mfiba_layout(f"{STAGES[i]}.mfiba{j}", e[i], cfg)
        return out

    lay += stage(0) + B._conv("down1", e[1], e[0], 3) + stage(1) + B._conv("down2", e[2], e[1], 3) + stage(2)
    m4, m5 = cfg.fusion_dims
    lay += B.csam_layout("csam4", e[2], e[3])
    lay += B.mfafm_layout("fuse4", e[3], e[1], e[2], m4, e[3], cfg.ca_reduction)
    lay += stage(3)
    lay += B.csam_layout("csam5", e[3], e[4])
    lay += B.mfafm_layout("fuse5", e[4], e[0], e[1], m5, e[4], cfg.ca_reduction)
    lay += stage(4)
    lay += B._conv("head", cfg.out_channels, e[4], 3, B.ZEROS)
    return lay


def init_params(cfg: ModelConfig, seed: int | Rng = 0) -> ParamStore:
    """Deterministic initialisation; every residual branch and the output head
    start at zero so the untrained network is the identity map."""
    rng = seed if isinstance(seed, Rng) else Rng(seed)
    store = ParamStore()
    for name, shape, init in param_layout(cfg):
        r = rng.split(name)
        if init == B.ZEROS:
            v = np.zeros(shape)
        elif init == B.ONES:
            v = np.ones(shape)
        elif init == B.NORMAL_Q:
            v = r.normal(0.0, 0.02, shape)
        elif init == B.DIRAC:
            v = np.zeros(shape)
            k = shape[-1]
            v[..., k // 2, k // 2] = 1.0
        elif init == B.LECUN:
            fan_in = int(np.prod(shape[1:]))
            v = r.normal(0.0, 1.0 / np.sqrt(fan_in), shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        store.add(name, v)
    return store


def _tensors(params, dtype) -> Mapping[str, Tensor]:
    if isinstance(params, ParamStore):
        return params.constants(dtype)
    return params


def _stage(x, p, cfg, i):
    for j in range(cfg.blocks_in_stage(i)):
        x = B.mfiba_forward(x, B.MfibaParams.get(p, f"{STAGES[i]}.mfiba{j}", cfg))
    return x


def mcafnet_forward(img: Tensor, params, cfg: ModelConfig):
    """Return ``(dehazed, [fake_half, fake_full])``. ``params`` is a
    ParamStore or a name -> Tensor mapping (for training)."""
    if not isinstance(img, Tensor):
        img = Tensor(np.asarray(img, dtype=np.float32))
    if img.ndim != 4 or img.shape[1] != cfg.in_channels:
        raise ShapeError(f"expected (b, {cfg.in_channels}, h, w) input, got {img.shape}")
    h, w = img.shape[2:]
    if h % 4 or w % 4:
        raise ShapeError(f"spatial dims must be divisible by 4, got {h}x{w}")
    p = _tensors(params, img.dtype)
    conv = lambda n, x, **kw: B.Conv.get(p, n)(x, **kw)  # noqa: E731

    e1 = _stage(conv("embed", img), p, cfg, 0)
    e2 = _stage(conv("down1", e1, stride=2), p, cfg, 1)
    e3 = _stage(conv("down2", e2, stride=2), p, cfg, 2)

    x, fake4 = B.csam_forward(e3, B.CsamParams.get(p, "csam4"))
    x = B.mfafm_forward(x, e2, T.bilinear_resize(e3, *x.shape[2:]), B.MfafmParams.get(p, "fuse4"))
    d4 = _stage(x, p, cfg, 3)

    x, fake5 = B.csam_forward(d4, B.CsamParams.get(p, "csam5"))
    x = B.mfafm_forward(x, e1, T.bilinear_resize(e2, *x.shape[2:]), B.MfafmParams.get(p, "fuse5"))
    d5 = _stage(x, p, cfg, 4)

    out = T.clamp(img + conv("head", d5), 0.0, 1.0)
    return out, [fake4, fake5]
