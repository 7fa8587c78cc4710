"""Closed-form parameter and multiply-accumulate counts.

These formulas are written independently of the layout tables in
``blocks``/``net`` so the two can be checked against each other: the
parameter count against the initialised store, the MAC count against the
tracing counter in the tensor engine.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..tensor import FLOPS_PER_MAC
from .blocks import ca_hidden
from .config import ModelConfig


@dataclass
class Cost:
    params: int = 0
    macs: int = 0
    parts: dict = field(default_factory=dict)

    def add(self, name, params, macs):
        self.params += params
        self.macs += macs
        p, m = self.parts.get(name, (0, 0))
        self.parts[name] = (p + params, m + macs)

    @property
    def flops(self):
        return self.macs * FLOPS_PER_MAC


def conv_cost(cin, cout, k, oh, ow, groups=1, bias=True):
    params = cout * (cin // groups) * k * k + (cout if bias else 0)
    return params, cout * (cin // groups) * k * k * oh * ow


def mfib_cost(c, h, w, q, hidden, with_mlp=True):
    c4 = c // 4
    p = 2 * c + c4 * q * q + 2 * q * q
    m = 0
    pp, mm = conv_cost(c4, c4, 3, h, w, groups=c4)
    p, m = p + pp, m + mm
    pp, mm = conv_cost(1, 1, 3, c4, h)
    p, m = p + pp, m + mm
    pp, mm = conv_cost(1, 1, 3, c4, w)
    p, m = p + pp, m + mm
    pp, mm = conv_cost(c4, c4, 1, h, w)
    p, m = p + pp, m + mm
    m += 3 * c4 * h * w  # three query products
    if with_mlp:
        pp, mm = mlp_cost(c, h, w, hidden)
        p, m = p + pp, m + mm
    return p, m


def mlp_cost(c, h, w, hidden):
    p1, m1 = conv_cost(c, hidden, 1, h, w)
    p2, m2 = conv_cost(hidden, c, 1, h, w)
    return p1 + p2, m1 + m2


def mfiba_cost(cfg: ModelConfig, c, h, w):
    hidden = cfg.mlp_hidden(c)
    p = m = 0
    for _ in range(cfg.mfib_cascade):
        pp, mm = mfib_cost(c, h, w, cfg.query_base, hidden, with_mlp=not cfg.share_mlp)
        p, m = p + pp, m + mm
        if cfg.share_mlp:  # weights counted once, compute paid every block
            m += mlp_cost(c, h, w, hidden)[1]
    if cfg.share_mlp:
        p += mlp_cost(c, h, w, hidden)[0]
    pp, mm = conv_cost(c, c, 3, h, w, groups=c)
    return p + pp, m + mm


def conv_stack_cost(c, h, w, depth):
    """Plain stack of dense 3x3 convs, the baseline the cascade is compared to."""
    p, m = conv_cost(c, c, 3, h, w)
    return depth * p, depth * m


def csam_cost(cin, cout, h, w):
    """``h, w`` are the input size; the block works at twice that."""
    H, W = 2 * h, 2 * w
    n = H * W
    p = m = 0
    for args in ((cin, 4 * cout, 1, h, w), (cout, 3, 1, H, W), (3, cout, 1, H, W),
                 (cout, cout, 1, H, W), (cout, cout, 1, H, W), (cout, cout, 1, H, W)):
        pp, mm = conv_cost(*args)
        p, m = p + pp, m + mm
    pp, mm = conv_cost(cout, cout, 3, H, W, groups=cout)
    p, m = p + pp, m + mm
    p += 2 * cout + 1  # layer norm affine and the temperature
    m += 2 * cout * cout * n + cout * cout  # QK^T, A V, temperature product
    return p, m


def mfafm_cost(cx, cs1, cs2, mid, cout, h, w, reduction):
    hid = ca_hidden(3 * mid, reduction)
    p = m = 0
    for args in ((cx, mid, 3, h, w), (cs1, mid, 5, h, w), (cs2, mid, 7, h, w),
                 (3 * mid, hid, 1, 1, 1), (hid, 3 * mid, 1, 1, 1), (2, 1, 7, h, w),
                 (3 * mid, cout, 1, h, w), (cx, cout, 1, h, w)):
        pp, mm = conv_cost(*args)
        p, m = p + pp, m + mm
    m += 2 * 3 * mid * h * w  # two gating products
    return p, m


def model_cost(cfg: ModelConfig, h: int, w: int) -> Cost:
    e = cfg.embed_dims
    cost = Cost()
    cost.add("embed", *conv_cost(cfg.in_channels, e[0], 3, h, w))
    sizes = [(h, w), (h // 2, w // 2), (h // 4, w // 4), (h // 2, w // 2), (h, w)]

    def stage(i):
        n = cfg.blocks_in_stage(i)
        p, m = mfiba_cost(cfg, e[i], *sizes[i])
        cost.add(f"stage{i + 1}", n * p, n * m)

    stage(0)
    cost.add("down", *conv_cost(e[0], e[1], 3, h // 2, w // 2))
    stage(1)
    p, m = conv_cost(e[1], e[2], 3, h // 4, w // 4)
    cost.add("down", p, m)
    stage(2)
    m4, m5 = cfg.fusion_dims
    cost.add("csam", *csam_cost(e[2], e[3], h // 4, w // 4))
    cost.add("fusion", *mfafm_cost(e[3], e[1], e[2], m4, e[3], h // 2, w // 2, cfg.ca_reduction))
    stage(3)
    cost.add("csam", *csam_cost(e[3], e[4], h // 2, w // 2))
    cost.add("fusion", *mfafm_cost(e[4], e[0], e[1], m5, e[4], h, w, cfg.ca_reduction))
    stage(4)
    cost.add("head", *conv_cost(e[4], cfg.out_channels, 3, h, w))
    return cost


def count_params_flops(cfg: ModelConfig, h: int, w: int) -> tuple[int, int]:
    if h % 4 or w % 4:
        from ..errors import ShapeError
        raise ShapeError(f"spatial dims must be divisible by 4, got {h}x{w}")
    c = model_cost(cfg, h, w)
    return c.params, c.flops
