"""One test per acceptance criterion; each prints a single PASS/FAIL line."""
import json
import time

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from dehazekit import tensor as T
from dehazekit import tensorfile
from dehazekit.cli import main
from dehazekit.data import build_manifest, load_manifest, save_image
from dehazekit.dcp import (classify_haze, dcp_dehaze, kmeans_thresholds, stratified_split, synthesize_haze,
                           synthetic_scene)
from dehazekit.gradcheck import grad_check, random_op_graph
from dehazekit.loss import IdentityExtractor, LossConfig, RandomConvExtractor, l2_loss, perceptual_loss, total_loss
from dehazekit.metrics import delta_e2000, mse, psnr, ssim
from dehazekit.model import ModelConfig, count_params_flops, init_params, mcafnet_forward
from dehazekit.model.accounting import conv_stack_cost, mfiba_cost
from dehazekit.model.weights import load_weights, save_weights
from dehazekit.niqe import niqe_fit, niqe_score
from dehazekit.rng import Rng
from dehazekit.tensor import Tensor
from dehazekit.train import TrainConfig, train_overfit
from oracles import CIEDE2000_PAIRS, conv2d_loops, optimal_1d_clusters


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {title} -- {detail}")
        assert ok, detail
    return emit


def test_criterion_01_autodiff_soundness(report):
    t0 = time.perf_counter()
    worst, bad = 0.0, []
    for i in range(100):
        builder, params, ops = random_op_graph(Rng(2024).split(f"graph{i}"))
        rep = grad_check(builder, params, step=1e-4, tol=1e-4, raise_on_fail=False)
        worst = max(worst, rep.max_rel_error)
        if not rep.ok:
            bad.append((i, ops))
    dt = time.perf_counter() - t0
    report(1, "autodiff soundness", not bad and dt < 120,
           f"100 graphs, {len(bad)} failing, worst rel err {worst:.2e}, {dt:.1f}s (limit 120s)")


def test_criterion_02_convolution_oracle(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(200):
        groups = int(rng.choice([1, 2, 4]))
        cin = groups * int(rng.integers(1, 3))
        cout = groups * int(rng.integers(1, 3))
        k = int(rng.choice([1, 3, 5]))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, k // 2 + 1))
        h, w = int(rng.integers(k, 9)), int(rng.integers(k, 9))
        x = rng.normal(size=(int(rng.integers(1, 3)), cin, h, w)).astype(np.float32)
        wt = rng.normal(size=(cout, cin // groups, k, k)).astype(np.float32)
        b = rng.normal(size=cout).astype(np.float32)
        got = T.conv2d(Tensor(x), Tensor(wt), Tensor(b), stride=stride, padding=pad, groups=groups).data
        worst = max(worst, float(np.max(np.abs(got - conv2d_loops(x, wt, b, stride, pad, groups)))))
    report(2, "convolution oracle", worst <= 1e-6, f"200 cases, max abs diff {worst:.2e} (limit 1e-6)")


def test_criterion_03_identity_at_init(report):
    cfg = ModelConfig.toy()
    params = init_params(cfg, 0)
    rng = np.random.default_rng(3)
    exact = 0
    for h, w in [(64, 64), (16, 24), (32, 8), (8, 8), (20, 12)]:
        img = rng.uniform(-0.5, 1.5, size=(1, 3, h, w)).astype(np.float32)
        out, _ = mcafnet_forward(img, params, cfg)
        exact += bool(np.array_equal(out.data, np.clip(img, 0, 1)))
    report(3, "identity at init", exact == 5, f"{exact}/5 random inputs map to clamp(input) bit-exactly")


def test_criterion_04_efficiency_accounting(report):
    params, flops = count_params_flops(ModelConfig(), 256, 256)
    dp, df = params / 558.1e3 - 1, flops / 19.82e9 - 1
    cheaper = []
    for c in (24, 48, 96):
        m = mfiba_cost(ModelConfig(), c, 32, 32)[1]
        s = conv_stack_cost(c, 32, 32, ModelConfig().mfib_cascade + 1)[1]
        cheaper.append(m < s)
    ok = abs(dp) <= 0.15 and abs(df) <= 0.15 and all(cheaper)
    report(4, "efficiency accounting", ok,
           f"params {params:,} ({dp:+.1%} vs 558.1K), FLOPs {flops / 1e9:.2f}G ({df:+.1%} vs 19.82G), "
           f"MFIBA below conv stack for c=24/48/96: {cheaper}")


def test_criterion_05_toy_overfit(report):
    J = synthetic_scene(Rng(0).split("overfit"), 64, 64)
    I = synthesize_haze(J, 0.6, [0.8] * 3)
    t0 = time.perf_counter()
    res = train_overfit(I, J, ModelConfig.toy(), TrainConfig(steps=200, seed=0))
    dt = time.perf_counter() - t0
    again = train_overfit(I, J, ModelConfig.toy(), TrainConfig(steps=200, seed=0))
    loss = np.array([r["loss"] for r in res.trace])
    ma = np.convolve(loss, np.ones(20) / 20, "valid")
    mono = float(np.mean(np.diff(ma) <= 0))
    gain = res.final_psnr - res.initial_psnr
    same = res.to_jsonl() == again.to_jsonl()
    report(5, "toy overfit", gain >= 6 and mono >= 0.9 and same and dt < 300,
           f"PSNR {res.initial_psnr:.2f} -> {res.final_psnr:.2f} dB (gain {gain:.2f}, need 6), "
           f"moving-average non-increasing {mono:.1%} (need 90%), deterministic {same}, {dt:.1f}s per run")


def test_criterion_06_dcp_efficacy(report):
    gains = []
    for i in range(50):
        r = Rng(7).split(f"scene{i}")
        J = synthetic_scene(r.split("img"), 128, 128)
        t, A = r.uniform(0.3, 0.9), r.uniform(0.7, 1.0)
        I = synthesize_haze(J, t, [A] * 3)
        gains.append(psnr(dcp_dehaze(I).image, J) - psnr(I, J))
    g = np.array(gains)
    frac = float(np.mean(g >= 3))
    report(6, "DCP efficacy", frac >= 0.9, f"{frac:.0%} of 50 scenes gain >= 3 dB (min {g.min():.2f}, "
                                          f"median {np.median(g):.2f})")


def test_criterion_07_split_counts(report):
    out = stratified_split({"thin": 763, "moderate": 1526, "thick": 764}, seed=0)
    got = {k: tuple(len(v[p]) for p in ("train", "test", "val")) for k, v in out.items()}
    want = {"thin": (610, 76, 77), "moderate": (1220, 152, 154), "thick": (611, 76, 77)}
    report(7, "stratified split counts", got == want, f"{got}")


def test_criterion_08_threshold_rule(report):
    cls = [classify_haze(d) for d in (100, 110.58, 159.31, 200)]
    r = np.random.default_rng(8)
    v = np.concatenate([r.normal(m, 10, 300) for m in (60, 135, 200)])
    th = kmeans_thresholds(v, 3)[1]
    ref = optimal_1d_clusters(v, 3)
    err = float(np.max(np.abs(np.asarray(th) - ref)))
    ok = cls == ["thin", "moderate", "moderate", "thick"] and err <= 5
    report(8, "threshold rule", ok, f"classes {cls}; k-means {np.round(th, 2)} vs optimal {np.round(ref, 2)}, "
                                    f"max gap {err:.2f} (limit 5)")


def test_criterion_09_metric_correctness(report):
    a = np.zeros((12, 12, 3))
    closed = abs(mse(a, a + 0.1) - 0.01) <= 1e-6 and abs(psnr(a, a + 0.1) - 20.0) <= 1e-6
    img = np.random.default_rng(9).uniform(size=(32, 32, 3))
    ssim_err = abs(ssim(img, img) - 1.0)
    de_err = max(abs(float(delta_e2000(np.array(l1), np.array(l2))) - d) for l1, l2, d in CIEDE2000_PAIRS)

    model = niqe_fit([synthetic_scene(Rng(1).split(f"p{i}"), 192, 192, sky=False) for i in range(20)])
    wins = 0
    for i in range(30):
        c = synthetic_scene(Rng(2).split(f"t{i}"), 192, 192, sky=False)
        blur = gaussian_filter(c, (3, 3, 0))
        noisy = np.clip(c + np.random.default_rng(i).normal(0, 0.15, c.shape), 0, 1)
        s = [niqe_score(z, model) for z in (c, blur, noisy)]
        wins += s[0] < s[1] and s[0] < s[2]
    ok = closed and ssim_err <= 1e-9 and de_err <= 1e-4 and wins >= 27
    report(9, "metric correctness", ok, f"PSNR/MSE closed form {closed}, SSIM(identical) err {ssim_err:.1e}, "
                                        f"CIEDE2000 max err {de_err:.1e} over {len(CIEDE2000_PAIRS)} pairs, "
                                        f"NIQE ordering {wins}/30 (need 27)")


def test_criterion_10_loss_composition(report):
    r = np.random.default_rng(10)
    p, t = Tensor(r.uniform(size=(1, 3, 32, 32))), Tensor(r.uniform(size=(1, 3, 32, 32)))
    cfg = LossConfig(lam=0.04, extractor=RandomConvExtractor(0))
    hand = l2_loss(p, t).item() + 0.04 * perceptual_loss(p, t, cfg).item()
    err = abs(total_loss(p, t, cfg=cfg).item() - hand)
    ident = perceptual_loss(p, t, LossConfig(extractor=IdentityExtractor())).item() == l2_loss(p, t).item()
    report(10, "loss composition", err <= 1e-7 and ident,
           f"|total - (L2 + 0.04 perceptual)| = {err:.1e} (limit 1e-7); identity extractor equals L2 exactly {ident}")


def test_criterion_11_formats(report, tmp_path, capsys):
    cfg = ModelConfig()
    store = init_params(cfg, 11)
    save_weights(tmp_path / "a.mcaf", store, cfg)
    back, cfg2 = load_weights(tmp_path / "a.mcaf")
    save_weights(tmp_path / "b.mcaf", back, cfg2)
    weights_same = (tmp_path / "a.mcaf").read_bytes() == (tmp_path / "b.mcaf").read_bytes()

    hz, cl = tmp_path / "hazy", tmp_path / "clear"
    hz.mkdir()
    cl.mkdir()
    for i, tr in enumerate(np.linspace(0.1, 0.9, 6)):
        J = synthetic_scene(Rng(11).split(f"m{i}"), 32, 32, sky=False)
        save_image(J, cl / f"{i}.png")
        save_image(synthesize_haze(J, tr, [0.9] * 3), hz / f"{i}.png")
    build_manifest(hz, cl, seed=3).save(tmp_path / "m.jsonl")
    load_manifest(tmp_path / "m.jsonl").save(tmp_path / "m2.jsonl")
    manifest_same = (tmp_path / "m.jsonl").read_bytes() == (tmp_path / "m2.jsonl").read_bytes()

    main(["model-info"])
    reported = json.loads(capsys.readouterr().out)["params"]
    serialized = sum(a.size for a in tensorfile.load(tmp_path / "a.mcaf").values())
    ok = weights_same and manifest_same and reported == serialized
    report(11, "formats", ok, f"weights byte-identical {weights_same}, manifest byte-identical {manifest_same}, "
                              f"model-info params {reported:,} vs serialized {serialized:,}")
