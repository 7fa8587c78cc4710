"""Pixel L2 plus feature-space (perceptual) L2, and the combined objective."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .rng import Rng
from .tensor import Tensor

# first sixteen layers of the classic 13-conv ImageNet classifier trunk:
# (kind, width multiplier); taps sit after the ReLUs at indices 3, 8, 15
_VGG_HEAD = [("conv", 1), ("relu", 0), ("conv", 1), ("relu", 0), ("pool", 0),
             ("conv", 2), ("relu", 0), ("conv", 2), ("relu", 0), ("pool", 0),
             ("conv", 4), ("relu", 0), ("conv", 4), ("relu", 0), ("conv", 4), ("relu", 0)]


def _t(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def l2_loss(pred, target) -> Tensor:
    pred, target = _t(pred), _t(target, pred)
    if pred.shape != target.shape:
        raise ShapeError(f"l2_loss shape mismatch: {pred.shape} vs {target.shape}")
    return T.mean(T.square(pred - target))


class IdentityExtractor:
    taps = (0,)

    def __call__(self, x: Tensor) -> list[Tensor]:
        return [x]


class RandomConvExtractor:
    """Fixed random-weight conv trunk with the layer pattern of a VGG-style
    classifier head, standing in for pretrained features.

    Pooling is 2x2 averaging so the stack stays smooth for gradient checks.
    """

    def __init__(self, seed: int = 0, base_width: int = 8, taps=(3, 8, 15), in_channels: int = 3):
        self.taps = tuple(taps)
        if max(self.taps) >= len(_VGG_HEAD):
            raise ValueError(f"taps must index the first {len(_VGG_HEAD)} layers")
        rng = Rng(seed).split("feature-extractor")
        self.weights = {}
        c = in_channels
        for i, (kind, mult) in enumerate(_VGG_HEAD):
            if kind == "conv":
                co = base_width * mult
                std = np.sqrt(2.0 / (c * 9))
                self.weights[i] = (rng.split(f"conv{i}").normal(0, std, (co, c, 3, 3)), np.zeros(co))
                c = co

    def __call__(self, x: Tensor) -> list[Tensor]:
        feats = []
        for i, (kind, _) in enumerate(_VGG_HEAD[:max(self.taps) + 1]):
            if kind == "conv":
                w, b = self.weights[i]
                x = T.conv2d(x, Tensor(w.astype(x.dtype)), Tensor(b.astype(x.dtype)), padding=1)
            elif kind == "relu":
                x = T.relu(x)
            else:
                c = x.shape[1]
                if x.shape[2] % 2 or x.shape[3] % 2:
                    raise ShapeError(f"pooling needs even spatial dims, got {x.shape}")
                pool = Tensor(np.full((c, 1, 2, 2), 0.25, dtype=x.dtype))
                x = T.conv2d(x, pool, stride=2, groups=c)
            if i in self.taps:
                feats.append(x)
        return feats


@dataclass
class LossConfig:
    lam: float = 0.04
    extractor: object = field(default_factory=IdentityExtractor)
    fake_weight: float = 0.1

    def __post_init__(self):
        if self.lam < 0 or self.fake_weight < 0:
            raise ValueError("loss weights must be >= 0")


def perceptual_loss(pred, target, cfg: LossConfig) -> Tensor:
    pred, target = _t(pred), _t(target, pred)
    if pred.shape != target.shape:
        raise ShapeError(f"perceptual_loss shape mismatch: {pred.shape} vs {target.shape}")
    fp = cfg.extractor(pred)
    ft = cfg.extractor(Tensor(target.data))  # target features carry no gradient
    if not fp:
        raise ValueError("extractor produced no feature maps")
    total = l2_loss(fp[0], ft[0])
    for a, b in zip(fp[1:], ft[1:]):
        total = total + l2_loss(a, b)
    return total


def total_loss(pred, target, fakes=(), cfg: LossConfig | None = None) -> Tensor:
    cfg = cfg or LossConfig()
    pred, target = _t(pred), _t(target, pred)
    loss = l2_loss(pred, target)
    if cfg.lam:
        loss = loss + cfg.lam * perceptual_loss(pred, target, cfg)
    for fake in fakes:
        small = T.bilinear_resize(Tensor(target.data), *fake.shape[2:])
        loss = loss + cfg.fake_weight * l2_loss(fake, small)
    return loss
