import math

import numpy as np
import pytest

from dehazekit import tensor as T
from dehazekit.dcp import synthesize_haze, synthetic_scene
from dehazekit.errors import ShapeError, TrainingError
from dehazekit.gradcheck import grad_check
from dehazekit.loss import (IdentityExtractor, LossConfig, RandomConvExtractor, l2_loss, perceptual_loss,
                            total_loss)
from dehazekit.model import ModelConfig, init_params
from dehazekit.rng import Rng
from dehazekit.tensor import Tensor
from dehazekit.train import TrainConfig, train_overfit


def pair(seed=0, shape=(1, 3, 16, 16)):
    r = np.random.default_rng(seed)
    return r.uniform(size=shape), r.uniform(size=shape)


class Scaled:
    """Feature map = input times a constant, so its L2 is a known multiple."""

    def __init__(self, k):
        self.k = k

    def __call__(self, x):
        return [x * self.k]


def test_l2_against_direct_mean():
    a, b = pair()
    assert l2_loss(Tensor(a), Tensor(b)).item() == pytest.approx(np.mean((a - b) ** 2), abs=1e-15)
    assert l2_loss(Tensor(a), Tensor(a)).item() == 0.0
    assert l2_loss(Tensor(a + 0.1), Tensor(a)).item() == pytest.approx(0.01, abs=1e-12)
    with pytest.raises(ShapeError):
        l2_loss(Tensor(a), Tensor(b[:, :2]))


def test_identity_extractor_perceptual_equals_l2():
    a, b = pair(1)
    got = perceptual_loss(Tensor(a), Tensor(b), LossConfig(extractor=IdentityExtractor())).item()
    assert got == l2_loss(Tensor(a), Tensor(b)).item()


def test_perceptual_zero_on_identical_inputs():
    a, _ = pair(2)
    assert perceptual_loss(Tensor(a), Tensor(a), LossConfig(extractor=RandomConvExtractor(3))).item() == 0.0


def test_random_extractor_is_deterministic():
    a, b = pair(3)
    cfg1, cfg2 = LossConfig(extractor=RandomConvExtractor(7)), LossConfig(extractor=RandomConvExtractor(7))
    v1 = perceptual_loss(Tensor(a), Tensor(b), cfg1).item()
    assert v1 == perceptual_loss(Tensor(a), Tensor(b), cfg2).item()
    assert v1 != perceptual_loss(Tensor(a), Tensor(b), LossConfig(extractor=RandomConvExtractor(8))).item()
    feats = RandomConvExtractor(7)(Tensor(a))
    assert [f.shape for f in feats] == [(1, 8, 16, 16), (1, 16, 8, 8), (1, 32, 4, 4)]


def test_total_loss_zero_lambda_is_l2():
    a, b = pair(4)
    got = total_loss(Tensor(a), Tensor(b), cfg=LossConfig(lam=0.0, extractor=RandomConvExtractor()))
    assert got.item() == l2_loss(Tensor(a), Tensor(b)).item()


def test_total_loss_arithmetic():
    # l2 = 1.0 and perceptual = 0.5 by construction
    t = np.zeros((1, 3, 4, 4))
    got = total_loss(Tensor(t + 1.0), Tensor(t), cfg=LossConfig(lam=0.04, extractor=Scaled(math.sqrt(0.5))))
    assert got.item() == pytest.approx(1.02, abs=1e-12)


def test_total_loss_matches_hand_assembly():
    a, b = pair(5)
    cfg = LossConfig(lam=0.04, extractor=RandomConvExtractor(1))
    hand = l2_loss(Tensor(a), Tensor(b)).item() + 0.04 * perceptual_loss(Tensor(a), Tensor(b), cfg).item()
    assert abs(total_loss(Tensor(a), Tensor(b), cfg=cfg).item() - hand) <= 1e-7


def test_fake_image_term_uses_resized_target():
    a, b = pair(6)
    fake = np.random.default_rng(0).uniform(size=(1, 3, 8, 8))
    cfg = LossConfig(lam=0.0, fake_weight=0.1)
    small = T.bilinear_resize(Tensor(b), 8, 8).data
    expect = np.mean((a - b) ** 2) + 0.1 * np.mean((fake - small) ** 2)
    assert total_loss(Tensor(a), Tensor(b), [Tensor(fake)], cfg).item() == pytest.approx(expect, abs=1e-14)


def test_total_loss_gradient():
    r = np.random.default_rng(0)
    target = Tensor(r.uniform(size=(1, 3, 8, 8)))
    cfg = LossConfig(lam=0.04, extractor=RandomConvExtractor(2, base_width=4))

    def f(p):
        return total_loss(p["pred"], target, [p["fake"]], cfg)
    rep = grad_check(f, {"pred": r.uniform(size=(1, 3, 8, 8)), "fake": r.uniform(size=(1, 3, 4, 4))},
                     tol=1e-3, max_per_param=None)
    assert rep.ok


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        LossConfig(lam=-1)


# ---------------------------------------------------------------- training

def small_pair(size=16):
    clear = synthetic_scene(Rng(0).split("train-test"), size, size)
    return synthesize_haze(clear, 0.6, [0.8] * 3), clear


def test_cosine_schedule_endpoints():
    c = TrainConfig(steps=11, lr=1e-3, lr_min=1e-8)
    assert c.lr_at(0) == 1e-3
    assert c.lr_at(10) == pytest.approx(1e-8, abs=1e-20)
    assert c.lr_at(5) == pytest.approx(0.5 * (1e-3 + 1e-8))
    lrs = [c.lr_at(i) for i in range(11)]
    assert all(x >= y for x, y in zip(lrs, lrs[1:]))


def test_zero_learning_rate_freezes_everything():
    hazy, clear = small_pair()
    cfg = ModelConfig.toy()
    start = init_params(cfg, 1)
    res = train_overfit(hazy, clear, cfg, TrainConfig(steps=4, lr=0.0, seed=1), params=start)
    assert all(np.array_equal(res.params[k], start[k]) for k in start)
    assert len({r["loss"] for r in res.trace}) == 1
    assert res.final_psnr == res.initial_psnr


def test_training_is_deterministic_per_seed():
    hazy, clear = small_pair()
    runs = [train_overfit(hazy, clear, ModelConfig.toy(), TrainConfig(steps=5, seed=3)) for _ in range(2)]
    assert runs[0].to_jsonl() == runs[1].to_jsonl()
    assert all(np.array_equal(runs[0].params[k], runs[1].params[k]) for k in runs[0].params)
    other = train_overfit(hazy, clear, ModelConfig.toy(), TrainConfig(steps=5, seed=4))
    assert other.to_jsonl() != runs[0].to_jsonl()


def test_trace_rows_and_callback():
    hazy, clear = small_pair()
    seen = []
    res = train_overfit(hazy, clear, ModelConfig.toy(), TrainConfig(steps=3), on_step=seen.append)
    assert seen == res.trace
    assert [r["step"] for r in res.trace] == [0, 1, 2]
    assert set(res.trace[0]) == {"step", "loss", "psnr", "lr"}


def test_divergence_reports_step():
    hazy, clear = small_pair()
    hazy = hazy.copy()
    hazy[0, 0, 0] = np.nan
    with pytest.raises(TrainingError) as ei:
        train_overfit(hazy, clear, ModelConfig.toy(), TrainConfig(steps=3))
    assert ei.value.step == 0
