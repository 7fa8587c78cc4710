import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.ndimage import gaussian_filter
from skimage.color import deltaE_ciede2000, rgb2lab
from skimage.metrics import structural_similarity

from dehazekit.dcp import synthetic_scene
from dehazekit.errors import ShapeError
from dehazekit.metrics import (ciede2000, ciede2000_image, delta_e2000, full_report, mse, psnr, srgb_to_lab,
                               ssim)
from dehazekit.niqe import NiqeModel, fit_aggd, fit_ggd, niqe_fit, niqe_score
from dehazekit.rng import Rng
from oracles import CIEDE2000_PAIRS, psnr_loop


def rand_img(seed, h=32, w=32):
    return np.random.default_rng(seed).uniform(size=(h, w, 3))


# ---------------------------------------------------------------- PSNR / MSE

def test_identical_images():
    a = rand_img(0)
    assert mse(a, a) == 0.0 and math.isinf(psnr(a, a))


def test_psnr_closed_form():
    a = np.zeros((10, 10, 3))
    assert mse(a, a + 0.1) == pytest.approx(0.01, abs=1e-6)
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-6)
    assert psnr(a * 255, a * 255 + 25.5, peak=255) == pytest.approx(20.0, abs=1e-6)


def test_psnr_loop_oracle():
    a, b = rand_img(1, 9, 7), rand_img(2, 9, 7)
    m, p = psnr_loop(a, b)
    assert mse(a, b) == pytest.approx(m, abs=1e-12)
    assert psnr(a, b) == pytest.approx(p, abs=1e-9)


@given(seed=st.integers(0, 9999), s1=st.floats(0.01, 0.2), extra=st.floats(1.1, 3.0))
def test_psnr_decreases_with_noise(seed, s1, extra):
    a = rand_img(seed, 8, 8)
    n = np.random.default_rng(seed + 1).normal(size=a.shape)
    assert psnr(a, a + s1 * extra * n) < psnr(a, a + s1 * n)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        mse(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


# ---------------------------------------------------------------- SSIM

def test_ssim_identical_is_one():
    a = rand_img(3)
    assert abs(ssim(a, a) - 1.0) <= 1e-9


def test_ssim_constant_images_closed_form():
    c1 = 1e-4
    expect = (2 * 0.125 + c1) / (0.3125 + c1)
    got = ssim(np.full((16, 16, 3), 0.5), np.full((16, 16, 3), 0.25))
    assert got == pytest.approx(expect, abs=1e-12)
    assert got == pytest.approx(0.800064, abs=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_ssim_matches_reference_implementation(seed):
    a = rand_img(seed, 40, 37)
    b = np.clip(a + 0.1 * np.random.default_rng(seed + 9).normal(size=a.shape), 0, 1)
    ref = structural_similarity(a.mean(axis=2), b.mean(axis=2), data_range=1.0, gaussian_weights=True,
                                sigma=1.5, use_sample_covariance=False)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-12)


def test_ssim_small_image_rejected():
    with pytest.raises(ShapeError):
        ssim(np.zeros((8, 20, 3)), np.zeros((8, 20, 3)))


@given(seed=st.integers(0, 9999))
def test_ssim_symmetric_and_bounded(seed):
    a, b = rand_img(seed, 16, 16), rand_img(seed + 1, 16, 16)
    s = ssim(a, b)
    assert s == pytest.approx(ssim(b, a), abs=1e-12) and -1 <= s <= 1


# ---------------------------------------------------------------- CIEDE2000

def test_published_pairs():
    assert len(CIEDE2000_PAIRS) == 34
    for lab1, lab2, de in CIEDE2000_PAIRS:
        got = float(delta_e2000(np.array(lab1), np.array(lab2)))
        assert abs(got - de) <= 1e-4, (lab1, lab2, got, de)
        # and symmetric
        assert float(delta_e2000(np.array(lab2), np.array(lab1))) == pytest.approx(got, abs=1e-12)


def test_pairs_against_reference_implementation():
    l1 = np.array([p[0] for p in CIEDE2000_PAIRS])
    l2 = np.array([p[1] for p in CIEDE2000_PAIRS])
    np.testing.assert_allclose(delta_e2000(l1, l2), deltaE_ciede2000(l1, l2), atol=1e-9)


def test_srgb_to_lab_reference():
    rgb = rand_img(4, 8, 8)
    # skimage uses the rounded 0.008856 / 7.787 constants near black; we use exact 6/29 forms
    np.testing.assert_allclose(srgb_to_lab(rgb), rgb2lab(rgb), atol=1e-4)
    # matrix rows sum to 0.95046 / 1.0 / 1.08875, a hair off the white point
    white = srgb_to_lab([1.0, 1.0, 1.0])
    assert abs(white[0] - 100) < 1e-3 and np.all(np.abs(white[1:]) < 1e-2)
    np.testing.assert_allclose(white, rgb2lab(np.ones((1, 1, 3)))[0, 0], atol=1e-9)


def test_ciede_identity_and_image_mean():
    assert ciede2000([0.2, 0.5, 0.7], [0.2, 0.5, 0.7]) == 0.0
    a, b = rand_img(5, 6, 6), rand_img(6, 6, 6)
    ref = np.mean(deltaE_ciede2000(rgb2lab(a), rgb2lab(b)))
    assert ciede2000_image(a, b) == pytest.approx(ref, abs=1e-4)


# ---------------------------------------------------------------- NIQE

def test_ggd_fit_on_gaussian():
    x = np.random.default_rng(0).normal(0, 2.0, 200_000)
    shape, var = fit_ggd(x)
    assert abs(shape - 2.0) <= 0.1 and var == pytest.approx(4.0, rel=0.02)


def test_ggd_fit_on_laplacian():
    shape, _ = fit_ggd(np.random.default_rng(1).laplace(size=200_000))
    assert abs(shape - 1.0) <= 0.1


def test_aggd_fit_symmetric_gaussian():
    shape, mean, lv, rv = fit_aggd(np.random.default_rng(2).normal(size=200_000))
    assert abs(shape - 2.0) <= 0.1 and abs(mean) < 0.02 and lv == pytest.approx(rv, rel=0.02)


def pristine(i, prefix="p"):
    return synthetic_scene(Rng(1).split(f"{prefix}{i}"), 192, 192, sky=False)


@pytest.fixture(scope="module")
def niqe_model():
    return niqe_fit([pristine(i) for i in range(12)])


def test_niqe_self_consistency(niqe_model):
    scores = [niqe_score(pristine(i), niqe_model) for i in range(12)]
    assert scores[0] < np.percentile(scores, 90)


def test_niqe_noise_scores_worse(niqe_model):
    scores = [niqe_score(pristine(i), niqe_model) for i in range(12)]
    noise = np.random.default_rng(0).uniform(size=(192, 192, 3))
    assert niqe_score(noise, niqe_model) > np.median(scores)


@pytest.mark.parametrize("i", range(3))
def test_niqe_blur_and_noise_order(niqe_model, i):
    clean = pristine(i, "t")
    blur = gaussian_filter(clean, (3, 3, 0))
    noisy = np.clip(clean + np.random.default_rng(i).normal(0, 0.15, clean.shape), 0, 1)
    s = niqe_score(clean, niqe_model)
    assert s < niqe_score(blur, niqe_model) and s < niqe_score(noisy, niqe_model)


def test_niqe_model_round_trip(niqe_model, tmp_path):
    niqe_model.save(tmp_path / "m.niqe")
    back = NiqeModel.load(tmp_path / "m.niqe")
    np.testing.assert_array_equal(back.mean, niqe_model.mean)
    np.testing.assert_array_equal(back.cov, niqe_model.cov)
    assert (back.patch_size, back.regularized) == (niqe_model.patch_size, niqe_model.regularized)


def test_niqe_singular_covariance_regularized():
    imgs = [synthetic_scene(Rng(3).split(f"s{i}"), 96, 96, sky=False) for i in range(10)]
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        model = niqe_fit(imgs)  # ten feature rows for 36 features
    assert model.regularized and any("singular" in str(w.message) for w in rec)
    assert np.all(np.linalg.eigvalsh(model.cov) > 0)


def test_niqe_needs_ten_images():
    with pytest.raises(ValueError):
        niqe_fit([pristine(0)] * 9)


def test_full_report_json_handles_infinity(niqe_model):
    a = pristine(0)
    rep = full_report(a, a, niqe_model).to_json()
    assert rep["psnr"] == "inf" and rep["mse"] == 0.0 and rep["niqe"] is not None
    json.dumps(rep, allow_nan=False)
