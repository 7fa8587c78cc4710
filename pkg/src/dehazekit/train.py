"""Single-pair Adam trainer used to sanity-check that the network can learn."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, TrainingError
from .imageops import to_batch
from .loss import LossConfig, total_loss
from .model import ModelConfig, init_params, mcafnet_forward
from .params import ParamStore
from .tensor import Tensor


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 200
    lr: float = 1e-3
    lr_min: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")

    def lr_at(self, step: int) -> float:
        """Cosine decay from ``lr`` to ``lr_min`` over ``steps``."""
        if self.steps <= 1 or self.lr == 0:
            return self.lr
        frac = step / (self.steps - 1)
        return self.lr_min + 0.5 * (self.lr - self.lr_min) * (1.0 + math.cos(math.pi * frac))


@dataclass
class TrainResult:
    trace: list = field(default_factory=list)
    params: ParamStore | None = None
    initial_psnr: float = float("nan")
    final_psnr: float = float("nan")

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.trace)


class Adam:
    def __init__(self, store: ParamStore, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in store.items()}
        self.v = {k: np.zeros_like(v) for k, v in store.items()}
        self.t = 0

    def step(self, store: ParamStore, lr: float):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k, p in store.items():
            g = store.grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            p -= (lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)).astype(p.dtype)


def _psnr(pred, target):
    mse = float(np.mean((pred.astype(np.float64) - target) ** 2))
    return float("inf") if mse == 0 else 10.0 * math.log10(1.0 / mse)


def train_overfit(hazy, clear, model_cfg: ModelConfig | None = None, train_cfg: TrainConfig | None = None,
                  loss_cfg: LossConfig | None = None, params: ParamStore | None = None,
                  on_step=None) -> TrainResult:
    """Fit the network to one (hazy, clear) pair of (h, w, 3) images.

    Each trace row reports the loss and PSNR of the forward pass taken
    before that step's update, plus the learning rate applied.
    """
    model_cfg = model_cfg or ModelConfig.toy()
    train_cfg = train_cfg or TrainConfig()
    loss_cfg = loss_cfg or LossConfig()
    store = params.copy() if params is not None else init_params(model_cfg, train_cfg.seed)
    x = Tensor(to_batch(hazy))
    y = to_batch(clear)
    opt = Adam(store, train_cfg)
    result = TrainResult(params=store)
    for step in range(train_cfg.steps):
        leaves = store.leaves()
        try:
            pred, fakes = mcafnet_forward(x, leaves, model_cfg)
            loss = total_loss(pred, y, fakes, loss_cfg)
            loss.backward()
        except NumericError as e:
            raise TrainingError(step, f"non-finite value during forward/backward ({e})") from e
        lv = loss.item()
        if not math.isfinite(lv):
            raise TrainingError(step, "loss is not finite")
        store.pull_grads(leaves)
        lr = train_cfg.lr_at(step)
        row = {"step": step, "loss": lv, "psnr": _psnr(pred.data, y), "lr": lr}
        result.trace.append(row)
        if on_step is not None:
            on_step(row)
        opt.step(store, lr)
    final, _ = mcafnet_forward(x, store, model_cfg)
    result.final_psnr = _psnr(final.data, y)
    result.initial_psnr = result.trace[0]["psnr"] if result.trace else result.final_psnr
    return result
