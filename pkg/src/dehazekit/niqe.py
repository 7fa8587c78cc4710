"""No-reference naturalness score from natural-scene statistics.

Pipeline: mean-subtracted contrast-normalised (MSCN) coefficients, a
generalised-Gaussian fit of the coefficients plus asymmetric fits of the
four neighbour products, per patch and at two scales (36 numbers per
patch). A pristine corpus gives a multivariate Gaussian; an image's score
is the Mahalanobis-type distance between its own patch Gaussian and that
reference.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d
from scipy.special import gamma as G

from . import tensorfile
from .errors import FormatError, ShapeError
from .metrics import gaussian_window, gray

_ALPHAS = np.arange(0.2, 10.0, 0.001)
_GGD_RATIO = G(1 / _ALPHAS) * G(3 / _ALPHAS) / G(2 / _ALPHAS) ** 2
_AGGD_RATIO = G(2 / _ALPHAS) ** 2 / (G(1 / _ALPHAS) * G(3 / _ALPHAS))


def fit_ggd(x) -> tuple[float, float]:
    """Moment-matched (shape, variance) of a zero-mean generalised Gaussian."""
    x = np.asarray(x, dtype=np.float64).ravel()
    var = float(np.mean(x * x))
    e_abs = float(np.mean(np.abs(x)))
    if e_abs == 0:
        return float(_ALPHAS[-1]), 0.0
    rho = var / (e_abs * e_abs)
    return float(_ALPHAS[np.argmin((_GGD_RATIO - rho) ** 2)]), var


def fit_aggd(x) -> tuple[float, float, float, float]:
    """Asymmetric fit: (shape, mean, left variance, right variance)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    left, right = x[x < 0], x[x > 0]
    sl = np.sqrt(np.mean(left * left)) if left.size else 0.0
    sr = np.sqrt(np.mean(right * right)) if right.size else 0.0
    if sl == 0 or sr == 0:
        return float(_ALPHAS[-1]), 0.0, float(sl * sl), float(sr * sr)
    g = sl / sr
    r_hat = np.mean(np.abs(x)) ** 2 / np.mean(x * x)
    R = r_hat * (g ** 3 + 1) * (g + 1) / (g * g + 1) ** 2
    a = float(_ALPHAS[np.argmin((_AGGD_RATIO - R) ** 2)])
    mean = (sr - sl) * G(2 / a) / G(1 / a) * np.sqrt(G(1 / a) / G(3 / a))
    return a, float(mean), float(sl * sl), float(sr * sr)


def mscn(img, win: int = 7, sigma: float = 7 / 6, c: float = 1.0):
    """Return (MSCN coefficients, local deviation). ``img`` on a 0-255 scale."""
    g = gaussian_window(win, sigma)
    blur = lambda a: correlate1d(correlate1d(a, g, 0, mode="nearest"), g, 1, mode="nearest")  # noqa: E731
    mu = blur(img)
    sd = np.sqrt(np.abs(blur(img * img) - mu * mu))
    return (img - mu) / (sd + c), sd


def patch_features(m) -> np.ndarray:
    a, v = fit_ggd(m)
    feats = [a, v]
    # horizontal, vertical and both diagonal neighbour products
    for prod in (m[:, :-1] * m[:, 1:], m[:-1, :] * m[1:, :],
                 m[:-1, :-1] * m[1:, 1:], m[:-1, 1:] * m[1:, :-1]):
        feats.extend(fit_aggd(prod))
    return np.array(feats)


def _half(img):
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    a = img[:h, :w]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def image_features(img, patch: int = 96, sharp_frac: float | None = None) -> np.ndarray:
    """Per-patch 36-dim features; ``sharp_frac`` keeps only patches whose mean
    local deviation exceeds that fraction of the sharpest patch."""
    lum = gray(img) * 255.0
    if min(lum.shape) < patch:
        raise ShapeError(f"image {lum.shape} smaller than patch size {patch}")
    ny, nx = lum.shape[0] // patch, lum.shape[1] // patch
    scales = []
    sharp = None
    cur, p = lum, patch
    for s in range(2):
        m, sd = mscn(cur)
        rows = []
        sh = []
        for i in range(ny):
            for j in range(nx):
                sl = (slice(i * p, (i + 1) * p), slice(j * p, (j + 1) * p))
                rows.append(patch_features(m[sl]))
                sh.append(sd[sl].mean())
        scales.append(np.array(rows))
        if s == 0:
            sharp = np.array(sh)
        cur, p = _half(cur), p // 2
    feats = np.hstack(scales)
    if sharp_frac is not None and feats.shape[0] > 1:
        keep = sharp > sharp_frac * sharp.max()
        feats = feats[keep]
    return feats


@dataclass(frozen=True)
class NiqeModel:
    mean: np.ndarray
    cov: np.ndarray
    patch_size: int = 96
    eps: float = 1e-6
    sharpness: float = 0.75
    regularized: bool = False

    def save(self, path):
        tensorfile.save(path, {
            "niqe.mean": self.mean, "niqe.cov": self.cov,
            "niqe.patch_size": np.array([self.patch_size]), "niqe.eps": np.array([self.eps]),
            "niqe.sharpness": np.array([self.sharpness]),
            "niqe.regularized": np.array([1.0 if self.regularized else 0.0]),
        })

    @classmethod
    def load(cls, path) -> "NiqeModel":
        a = tensorfile.load(path)
        try:
            return cls(a["niqe.mean"].astype(np.float64), a["niqe.cov"].astype(np.float64),
                       int(a["niqe.patch_size"][0]), float(a["niqe.eps"][0]),
                       float(a["niqe.sharpness"][0]), bool(a["niqe.regularized"][0]))
        except KeyError as e:
            raise FormatError(f"{path}: not a naturalness model ({e})") from e


def niqe_fit(corpus, patch: int = 96, sharpness: float = 0.75, eps: float = 1e-6) -> NiqeModel:
    corpus = list(corpus)
    if len(corpus) < 10:
        raise ValueError(f"need at least 10 pristine images, got {len(corpus)}")
    feats = np.vstack([image_features(im, patch, sharpness) for im in corpus])
    mu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False)
    cov = 0.5 * (cov + cov.T)
    regularized = bool(np.linalg.matrix_rank(cov) < cov.shape[0])
    if regularized:
        warnings.warn("pristine feature covariance is singular; adding eps to the diagonal", RuntimeWarning)
    cov = cov + eps * np.eye(cov.shape[0])
    # the container stores float32; round once here so a saved model scores identically
    f32 = lambda a: a.astype(np.float32).astype(np.float64)  # noqa: E731
    return NiqeModel(f32(mu), f32(cov), patch, eps, sharpness, regularized)


def niqe_score(img, model: NiqeModel) -> float:
    feats = image_features(img, model.patch_size)
    mu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False) if feats.shape[0] > 1 else np.zeros_like(model.cov)
    d = model.mean - mu
    pooled = 0.5 * (model.cov + cov)
    return float(np.sqrt(max(0.0, d @ np.linalg.pinv(pooled) @ d)))
