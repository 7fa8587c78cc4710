"""Dark-channel haze removal, haze-density statistics and dataset stratification.

Images here are float arrays of shape (h, w, 3) with values in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateClusterError, ShapeError
from .rng import Rng

DEFAULT_THRESHOLDS = (110.58, 159.31)
CLASSES = ("thin", "moderate", "thick")


@dataclass(frozen=True)
class DcpConfig:
    radius: int = 7
    omega: float = 0.95
    t_floor: float = 0.1
    quantile: float = 0.001

    def __post_init__(self):
        if not 0 < self.omega <= 1:
            raise ValueError(f"omega must be in (0, 1], got {self.omega}")
        if not 0 < self.t_floor < 1:
            raise ValueError(f"t_floor must be in (0, 1), got {self.t_floor}")
        if not 0 < self.quantile <= 1:
            raise ValueError(f"quantile must be in (0, 1], got {self.quantile}")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")


@dataclass
class DcpResult:
    image: np.ndarray
    dark: np.ndarray
    atmosphere: np.ndarray
    transmission: np.ndarray

    @property
    def density(self) -> float:
        return float(self.dark.mean() * 255.0)


def _check(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected an (h, w, 3) image, got {img.shape}")
    return img


def dark_channel(img, radius: int = 7) -> np.ndarray:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    img = _check(img)
    return kernels.min_filter(np.ascontiguousarray(img.min(axis=2)), int(radius))


def estimate_atmospheric_light(img, dark, quantile: float = 0.001) -> np.ndarray:
    if not 0 < quantile <= 1:
        raise ValueError("quantile must be in (0, 1]")
    img = _check(img)
    flat = np.asarray(dark).ravel()
    n = max(1, math.ceil(quantile * flat.size))
    idx = np.argsort(-flat, kind="stable")[:n]
    return img.reshape(-1, 3)[idx].mean(axis=0)


def transmission(img, A, cfg: DcpConfig = DcpConfig()) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if np.any(A <= 0):
        raise ValueError("atmospheric light components must be > 0")
    t = 1.0 - cfg.omega * dark_channel(_check(img) / A, cfg.radius)
    return np.clip(t, cfg.t_floor, 1.0)


def dcp_dehaze(img, cfg: DcpConfig = DcpConfig()) -> DcpResult:
    img = _check(img)
    dark = dark_channel(img, cfg.radius)
    A = estimate_atmospheric_light(img, dark, cfg.quantile)
    A = np.maximum(A, 1e-6)  # all-black input: keep the ratio defined
    t = transmission(img, A, cfg)
    J = (img - A) / np.maximum(t, cfg.t_floor)[..., None] + A
    return DcpResult(np.clip(J, 0.0, 1.0), dark, A, t)


def synthesize_haze(clear, t, A) -> np.ndarray:
    """Atmospheric scattering forward model I = J t + A (1 - t)."""
    J = _check(clear)
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 2:
        t = t[..., None]
    return J * t + np.asarray(A, dtype=np.float64) * (1.0 - t)


def haze_density(img, radius: int = 7) -> float:
    """Mean dark channel on the 0-255 scale."""
    return float(dark_channel(img, radius).mean() * 255.0)


def classify_haze(density: float, thresholds=DEFAULT_THRESHOLDS) -> str:
    t1, t2 = thresholds
    if t1 > t2:
        raise ValueError(f"thresholds must be sorted, got {thresholds}")
    if density < t1:
        return "thin"
    if density <= t2:
        return "moderate"
    return "thick"


def kmeans_thresholds(values, k: int = 3, seed=None, max_iter: int = 100, tol: float = 1e-6):
    """1-D Lloyd clustering with quantile initialisation.

    Returns ``(sorted centroids, midpoints between neighbours)``. ``seed`` is
    accepted for interface symmetry; the initialisation is deterministic.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if k < 1:
        raise ValueError("k must be >= 1")
    if np.unique(v).size < k:
        raise DegenerateClusterError(f"need at least {k} distinct values, got {np.unique(v).size}")
    init = np.quantile(v, (2 * np.arange(k) + 1) / (2 * k))
    if np.unique(init).size < k:
        # heavy ties: fall back to evenly spaced distinct values
        u = np.unique(v)
        init = u[np.linspace(0, u.size - 1, k).round().astype(int)]
    c, _, _ = kernels.kmeans1d(v, init, max_iter, tol)
    c = np.sort(np.asarray(c))
    return c, (c[:-1] + c[1:]) / 2.0


def split_counts(n: int, ratios=(0.8, 0.1)) -> tuple[int, int, int]:
    """Floor/floor/remainder: (train, test, val). Exact rational arithmetic."""
    r_train, r_test = (Fraction(str(r)) for r in ratios)
    train = math.floor(n * r_train)
    test = math.floor(n * r_test)
    return train, test, n - train - test


def stratified_split(groups: Mapping[str, Sequence | int], ratios=(0.8, 0.1), seed: int = 0):
    """Per class: seeded shuffle, then contiguous train/test/val slices.

    ``groups`` maps class -> items (or an item count). Returns
    class -> {"train": [...], "test": [...], "val": [...]}.
    """
    rng = Rng(seed).split("stratified_split")
    out = {}
    for cls in sorted(groups):
        items = groups[cls]
        items = list(range(items)) if isinstance(items, int) else list(items)
        n_train, n_test, _ = split_counts(len(items), ratios)
        order = rng.split(cls).permutation(len(items)) if items else []
        shuffled = [items[i] for i in order]
        out[cls] = {"train": shuffled[:n_train],
                    "test": shuffled[n_train:n_train + n_test],
                    "val": shuffled[n_train + n_test:]}
    return out


def synthetic_scene(rng: Rng, h: int = 128, w: int = 128, sky: bool = True) -> np.ndarray:
    """Clear outdoor-like test scene that honours the dark-channel assumption.

    Saturated colour patches and shadows keep one channel low in most
    neighbourhoods; an optional flat bright band stands in for sky.
    """
    img = np.empty((h, w, 3))
    base = rng.uniform(0.05, 0.2, 3)
    img[:] = base
    for _ in range(int(h * w / 90)):
        ph, pw = rng.integers(3, max(4, h // 6)), rng.integers(3, max(4, w // 6))
        y, x = rng.integers(0, h), rng.integers(0, w)
        hue = rng.uniform(0, 1)
        sat = rng.uniform(0.75, 1.0)
        val = rng.uniform(0.25, 0.95)
        img[y:y + ph, x:x + pw] = _hsv(hue, sat, val)
    # fine texture, kept non-negative
    img *= 1.0 + 0.08 * rng.normal(size=(h, w, 1))
    if sky:
        band = max(2, int(h * rng.uniform(0.12, 0.22)))
        img[:band] = rng.uniform(0.8, 0.9) + rng.uniform(-0.02, 0.02, 3)
    return np.clip(img, 0.0, 1.0)


def _hsv(hh, s, v):
    i = int(hh * 6) % 6
    f = hh * 6 - int(hh * 6)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
