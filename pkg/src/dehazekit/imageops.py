"""Conversions between (h, w, 3) images and (1, 3, h, w) batches."""
import numpy as np

from .errors import ShapeError


def to_batch(img, dtype=np.float32) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ShapeError(f"expected an (h, w, 3) image, got {a.shape}")
    return np.ascontiguousarray(a.transpose(2, 0, 1)[None], dtype=dtype)


def from_batch(x) -> np.ndarray:
    a = np.asarray(getattr(x, "data", x))
    if a.ndim != 4 or a.shape[0] != 1:
        raise ShapeError(f"expected a (1, c, h, w) batch, got {a.shape}")
    return np.ascontiguousarray(a[0].transpose(1, 2, 0), dtype=np.float64)
