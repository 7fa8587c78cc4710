"""Full-reference image quality metrics on [0, 1] images."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ShapeError

PSNR_INF = float("inf")


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 1.0) -> float:
    m = mse(a, b)
    if m == 0:
        return PSNR_INF
    return 10.0 * math.log10(peak * peak / m)


def gray(img, weights=None) -> np.ndarray:
    """Channel mean by default; pass weights for a luminance-style mix."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if weights is None:
        return img.mean(axis=2)
    w = np.asarray(weights, dtype=np.float64)
    return img @ (w / w.sum())


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x * x / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    r = len(g) // 2
    out = correlate1d(correlate1d(img, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim(a, b, win: int = 11, sigma: float = 1.5, k1=0.01, k2=0.03, data_range=1.0, weights=None) -> float:
    a, b = _pair(gray(a, weights), gray(b, weights))
    if min(a.shape) < win:
        raise ShapeError(f"image {a.shape} smaller than the {win}x{win} window")
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    g = gaussian_window(win, sigma)
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a ** 2
    sbb = _filter_valid(b * b, g) - mu_b ** 2
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


# ------------------------------------------------------------------ colour

_SRGB_TO_XYZ = np.array([[0.412453, 0.357580, 0.180423],
                         [0.212671, 0.715160, 0.072169],
                         [0.019334, 0.119193, 0.950227]])
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


def srgb_to_lab(rgb) -> np.ndarray:
    c = np.asarray(rgb, dtype=np.float64)
    lin = np.where(c > 0.04045, ((c + 0.055) / 1.055) ** 2.4, c / 12.92)
    xyz = lin @ _SRGB_TO_XYZ.T / _WHITE_D65
    d = 6.0 / 29.0
    f = np.where(xyz > d ** 3, np.cbrt(xyz), xyz / (3 * d * d) + 4.0 / 29.0)
    L = 116.0 * f[..., 1] - 16.0
    A = 500.0 * (f[..., 0] - f[..., 1])
    B = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, A, B], axis=-1)


def delta_e2000(lab1, lab2, kL=1.0, kC=1.0, kH=1.0) -> np.ndarray:
    """Colour difference between Lab arrays (last axis = L, a, b)."""
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    L1, a1, b1 = np.moveaxis(lab1, -1, 0)
    L2, a2, b2 = np.moveaxis(lab2, -1, 0)
    C1, C2 = np.hypot(a1, b1), np.hypot(a2, b2)
    cbar7 = ((C1 + C2) / 2) ** 7
    G = 0.5 * (1 - np.sqrt(cbar7 / (cbar7 + 25.0 ** 7)))
    a1p, a2p = (1 + G) * a1, (1 + G) * a2
    C1p, C2p = np.hypot(a1p, b1), np.hypot(a2p, b2)
    h1p = np.degrees(np.arctan2(b1, a1p)) % 360
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360

    dLp = L2 - L1
    dCp = C2p - C1p
    zero = C1p * C2p == 0
    dh = h2p - h1p
    dh = np.where(dh > 180, dh - 360, np.where(dh < -180, dh + 360, dh))
    dh = np.where(zero, 0.0, dh)
    dHp = 2 * np.sqrt(C1p * C2p) * np.sin(np.radians(dh / 2))

    Lbar = (L1 + L2) / 2
    Cbar = (C1p + C2p) / 2
    hsum = h1p + h2p
    hbar = np.where(np.abs(h1p - h2p) <= 180, hsum / 2,
                    np.where(hsum < 360, (hsum + 360) / 2, (hsum - 360) / 2))
    hbar = np.where(zero, hsum, hbar)
    Tt = (1 - 0.17 * np.cos(np.radians(hbar - 30)) + 0.24 * np.cos(np.radians(2 * hbar))
          + 0.32 * np.cos(np.radians(3 * hbar + 6)) - 0.20 * np.cos(np.radians(4 * hbar - 63)))
    dtheta = 30 * np.exp(-(((hbar - 275) / 25) ** 2))
    cb7 = Cbar ** 7
    Rc = 2 * np.sqrt(cb7 / (cb7 + 25.0 ** 7))
    Sl = 1 + 0.015 * (Lbar - 50) ** 2 / np.sqrt(20 + (Lbar - 50) ** 2)
    Sc = 1 + 0.045 * Cbar
    Sh = 1 + 0.015 * Cbar * Tt
    Rt = -np.sin(np.radians(2 * dtheta)) * Rc
    tl, tc, th = dLp / (kL * Sl), dCp / (kC * Sc), dHp / (kH * Sh)
    return np.sqrt(tl * tl + tc * tc + th * th + Rt * tc * th)


def ciede2000(rgb1, rgb2) -> float:
    """Colour difference between two sRGB triples in [0, 1]."""
    return float(delta_e2000(srgb_to_lab(rgb1), srgb_to_lab(rgb2)))


def ciede2000_image(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(delta_e2000(srgb_to_lab(a), srgb_to_lab(b))))


@dataclass
class MetricReport:
    psnr: float
    mse: float
    ssim: float
    ciede2000: float
    niqe: float | None = None

    def to_json(self) -> dict:
        d = asdict(self)
        # JSON has no infinity; keep the sentinel readable
        if math.isinf(d["psnr"]):
            d["psnr"] = "inf"
        return d


def full_report(ref, test, niqe_model=None) -> MetricReport:
    from .niqe import niqe_score
    return MetricReport(psnr=psnr(ref, test), mse=mse(ref, test), ssim=ssim(ref, test),
                        ciede2000=ciede2000_image(ref, test),
                        niqe=None if niqe_model is None else niqe_score(test, niqe_model))
