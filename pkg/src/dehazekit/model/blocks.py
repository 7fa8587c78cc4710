"""Building blocks: query-interaction block, its cascade, the colour-aware
upsampling bridge and the three-scale fusion.

Each block has a ``*_layout`` function listing its parameters as
``(name, shape, init)`` and a ``*Params`` view that pulls the matching
tensors out of a name -> Tensor mapping.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .. import tensor as T
from ..errors import ShapeError
from ..tensor import Tensor

# init tags understood by net.init_params
NORMAL_Q = "query"   # N(0, 0.02)
LECUN = "lecun"      # N(0, 1/fan_in)
DIRAC = "dirac"      # identity kernel
ZEROS = "zeros"
ONES = "ones"


def _conv(prefix, cout, cin, k, init=LECUN):
    return [(f"{prefix}.w", (cout, cin, k, k), init), (f"{prefix}.b", (cout,), ZEROS)]


# ------------------------------------------------------------------ MFIB

def mlp_layout(prefix, c, hidden):
    return _conv(f"{prefix}.fc1", hidden, c, 1) + _conv(f"{prefix}.fc2", c, hidden, 1, ZEROS)


def mfib_layout(prefix, c, q):
    c4 = c // 4
    return [
        (f"{prefix}.ln.g", (c,), ONES), (f"{prefix}.ln.b", (c,), ZEROS),
        (f"{prefix}.q_hw", (1, c4, q, q), NORMAL_Q),
        (f"{prefix}.q_ch", (1, 1, q, q), NORMAL_Q),
        (f"{prefix}.q_cw", (1, 1, q, q), NORMAL_Q),
    ] + _conv(f"{prefix}.dw_hw", c4, 1, 3, DIRAC) + _conv(f"{prefix}.dw_ch", 1, 1, 3, DIRAC) \
      + _conv(f"{prefix}.dw_cw", 1, 1, 3, DIRAC) + _conv(f"{prefix}.pw", c4, c4, 1)


def mfiba_layout(prefix, c, cfg):
    out = []
    hidden = cfg.mlp_hidden(c)
    for k in range(cfg.mfib_cascade):
        out += mfib_layout(f"{prefix}.mfib{k}", c, cfg.query_base)
        if not cfg.share_mlp:
            out += mlp_layout(f"{prefix}.mfib{k}.mlp", c, hidden)
    if cfg.share_mlp:
        out += mlp_layout(f"{prefix}.mlp", c, hidden)
    out += _conv(f"{prefix}.conv", c, 1, 3, DIRAC)
    return out


@dataclass
class Conv:
    w: Tensor
    b: Tensor | None

    @classmethod
    def get(cls, p: Mapping[str, Tensor], prefix: str) -> "Conv":
        return cls(p[f"{prefix}.w"], p.get(f"{prefix}.b"))

    def __call__(self, x, stride=1, groups=1):
        return T.conv2d(x, self.w, self.b, stride=stride, padding=self.w.shape[-1] // 2, groups=groups)


@dataclass
class MlpParams:
    fc1: Conv
    fc2: Conv

    @classmethod
    def get(cls, p, prefix):
        return cls(Conv.get(p, f"{prefix}.fc1"), Conv.get(p, f"{prefix}.fc2"))


@dataclass
class MfibParams:
    ln_g: Tensor
    ln_b: Tensor
    q_hw: Tensor
    q_ch: Tensor
    q_cw: Tensor
    dw_hw: Conv
    dw_ch: Conv
    dw_cw: Conv
    pw: Conv
    mlp: MlpParams

    @classmethod
    def get(cls, p, prefix, mlp_prefix=None):
        return cls(p[f"{prefix}.ln.g"], p[f"{prefix}.ln.b"], p[f"{prefix}.q_hw"], p[f"{prefix}.q_ch"],
                   p[f"{prefix}.q_cw"], Conv.get(p, f"{prefix}.dw_hw"), Conv.get(p, f"{prefix}.dw_ch"),
                   Conv.get(p, f"{prefix}.dw_cw"), Conv.get(p, f"{prefix}.pw"),
                   MlpParams.get(p, mlp_prefix or f"{prefix}.mlp"))


def mfib_branches(x: Tensor, p: MfibParams):
    """Return the four branch outputs of one block, before the MLP."""
    b, c, h, w = x.shape
    if c % 4:
        raise ShapeError(f"channel count {c} is not divisible by 4")
    c4 = c // 4
    y = T.layer_norm(x, p.ln_g, p.ln_b)
    x1, x2, x3, x4 = T.split(y, 4, axis=1)

    # spatial query over (h, w)
    q = p.dw_hw(T.bilinear_resize(p.q_hw, h, w), groups=c4)
    o1 = x1 * q
    # channel-height query: features viewed as (b, w, c4, h)
    q = p.dw_ch(T.bilinear_resize(p.q_ch, c4, h))
    o2 = T.permute(T.permute(x2, (0, 3, 1, 2)) * q, (0, 2, 3, 1))
    # channel-width query: features viewed as (b, h, c4, w)
    q = p.dw_cw(T.bilinear_resize(p.q_cw, c4, w))
    o3 = T.permute(T.permute(x3, (0, 2, 1, 3)) * q, (0, 2, 1, 3))
    o4 = p.pw(x4)
    return o1, o2, o3, o4


def mfib_forward(x: Tensor, p: MfibParams) -> Tensor:
    z = T.concat(mfib_branches(x, p), axis=1)
    z = p.mlp.fc2(T.gelu(p.mlp.fc1(z)))
    return z + x


@dataclass
class MfibaParams:
    blocks: list
    conv: Conv

    @classmethod
    def get(cls, p, prefix, cfg):
        shared = f"{prefix}.mlp" if cfg.share_mlp else None
        blocks = [MfibParams.get(p, f"{prefix}.mfib{k}", shared) for k in range(cfg.mfib_cascade)]
        return cls(blocks, Conv.get(p, f"{prefix}.conv"))


def mfiba_forward(x: Tensor, p: MfibaParams) -> Tensor:
    for blk in p.blocks:
        x = mfib_forward(x, blk)
    return p.conv(x, groups=x.shape[1])


# ------------------------------------------------------------------ CSAM

def csam_layout(prefix, cin, cout):
    return (_conv(f"{prefix}.up", 4 * cout, cin, 1) + _conv(f"{prefix}.color", 3, cout, 1)
            + _conv(f"{prefix}.fb", cout, 3, 1)
            + [(f"{prefix}.ln.g", (cout,), ONES), (f"{prefix}.ln.b", (cout,), ZEROS)]
            + _conv(f"{prefix}.q", cout, cout, 1) + _conv(f"{prefix}.k", cout, cout, 1)
            + _conv(f"{prefix}.v", cout, cout, 1)
            + [(f"{prefix}.alpha", (1,), ONES)]
            + _conv(f"{prefix}.dw", cout, 1, 3))


@dataclass
class CsamParams:
    up: Conv
    color: Conv
    fb: Conv
    ln_g: Tensor
    ln_b: Tensor
    q: Conv
    k: Conv
    v: Conv
    alpha: Tensor
    dw: Conv

    @classmethod
    def get(cls, p, prefix):
        c = lambda n: Conv.get(p, f"{prefix}.{n}")  # noqa: E731
        return cls(c("up"), c("color"), c("fb"), p[f"{prefix}.ln.g"], p[f"{prefix}.ln.b"],
                   c("q"), c("k"), c("v"), p[f"{prefix}.alpha"], c("dw"))


def csam_forward(x: Tensor, p: CsamParams, return_attention=False):
    """Upsample by 2, emit a colour-corrected preview, then channel attention.

    Returns ``(features, fake_image)`` and, on request, the attention matrix.
    """
    up = T.pixel_shuffle(p.up(x), 2)
    b, c, h, w = up.shape
    fake = p.color(up)
    g = up + p.fb(fake)
    n = T.layer_norm(g, p.ln_g, p.ln_b)
    q = T.l2_normalize(T.reshape(p.q(n), (b, c, h * w)), axis=-1)
    k = T.l2_normalize(T.reshape(p.k(n), (b, c, h * w)), axis=-1)
    v = p.v(n)
    logits = T.matmul(q, T.permute(k, (0, 2, 1))) * p.alpha
    attn = T.softmax(logits, axis=-1, scale=1.0 / np.sqrt(c))  # d_k = c: one head
    av = T.reshape(T.matmul(attn, T.reshape(v, (b, c, h * w))), (b, c, h, w))
    out = av + p.dw(v, groups=c)
    if return_attention:
        return out, fake, attn
    return out, fake


# ------------------------------------------------------------------ MFAFM

def ca_hidden(m3, reduction):
    return max(1, m3 // reduction)


def mfafm_layout(prefix, cx, cs1, cs2, m, cout, reduction):
    hid = ca_hidden(3 * m, reduction)
    return (_conv(f"{prefix}.c3", m, cx, 3) + _conv(f"{prefix}.c5", m, cs1, 5)
            + _conv(f"{prefix}.c7", m, cs2, 7) + _conv(f"{prefix}.ca1", hid, 3 * m, 1)
            + _conv(f"{prefix}.ca2", 3 * m, hid, 1) + _conv(f"{prefix}.sa", 1, 2, 7)
            + _conv(f"{prefix}.out", cout, 3 * m, 1) + _conv(f"{prefix}.res", cout, cx, 1))


@dataclass
class MfafmParams:
    c3: Conv
    c5: Conv
    c7: Conv
    ca1: Conv
    ca2: Conv
    sa: Conv
    out: Conv
    res: Conv

    @classmethod
    def get(cls, p, prefix):
        return cls(*(Conv.get(p, f"{prefix}.{n}") for n in ("c3", "c5", "c7", "ca1", "ca2", "sa", "out", "res")))


def mfafm_forward(x: Tensor, skip1: Tensor, skip2: Tensor, p: MfafmParams, gates=False):
    if not (x.shape[2:] == skip1.shape[2:] == skip2.shape[2:]):
        raise ShapeError(f"fusion inputs differ spatially: {x.shape}, {skip1.shape}, {skip2.shape}")
    cat = T.concat([p.c3(x), p.c5(skip1), p.c7(skip2)], axis=1)
    ca = T.sigmoid(p.ca2(T.relu(p.ca1(T.mean(cat, axis=(2, 3), keepdims=True)))))
    xca = cat * ca
    stats = T.concat([T.mean(xca, axis=1, keepdims=True), T.max(xca, axis=1, keepdims=True)], axis=1)
    sa = T.sigmoid(p.sa(stats))
    xsa = xca * sa
    out = p.out(xsa) + p.res(x)
    if gates:
        return out, ca, sa
    return out
