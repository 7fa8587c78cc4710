"""Image files, geo-referenced cropping, tiling and dataset manifests."""
from __future__ import annotations

import io
import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .dcp import DEFAULT_THRESHOLDS, classify_haze, haze_density, stratified_split
from .errors import FormatError, GeoRangeError, ImageIOError
from .tensorfile import atomic_write

IMAGE_EXTS = (".png", ".ppm")
_FORMATS = {".png": "PNG", ".ppm": "PPM"}


# ------------------------------------------------------------------ image I/O

def load_image(path) -> np.ndarray:
    """Read an 8-bit PNG or PPM as an (h, w, 3) float array in [0, 1]."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise ImageIOError(path, e.strerror or str(e)) from e
    try:
        with Image.open(io.BytesIO(raw)) as im:
            if im.format not in ("PNG", "PPM"):
                raise ImageIOError(path, f"unsupported format {im.format}")
            im.load()
            if im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                arr = np.repeat(arr[..., None], 3, axis=2)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except ImageIOError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise ImageIOError(path, f"cannot decode image ({e})") from e
    return arr


def to_uint8(img) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_image(img, fmt: str = "PNG") -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img), "RGB").save(buf, format=fmt)
    return buf.getvalue()


def save_image(img, path):
    path = Path(path)
    fmt = _FORMATS.get(path.suffix.lower())
    if fmt is None:
        raise ImageIOError(path, f"unsupported extension {path.suffix!r} (use .png or .ppm)")
    try:
        atomic_write(path, encode_image(img, fmt))
    except OSError as e:
        raise ImageIOError(path, e.strerror or str(e)) from e


# ------------------------------------------------------------------ geo

@dataclass(frozen=True)
class GeoMeta:
    tl: tuple  # (lon, lat) of the top-left corner
    br: tuple  # (lon, lat) of the bottom-right corner

    def __post_init__(self):
        if not (self.tl[0] < self.br[0] and self.tl[1] > self.br[1]):
            raise GeoRangeError(f"degenerate or flipped extent tl={self.tl} br={self.br}")

    @classmethod
    def from_json(cls, obj) -> "GeoMeta":
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        try:
            return cls(tuple(map(float, obj["tl"])), tuple(map(float, obj["br"])))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"bad geo sidecar: {e}") from e

    @classmethod
    def load(cls, path) -> "GeoMeta":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))

    def to_json(self) -> dict:
        return {"tl": list(self.tl), "br": list(self.br)}


def _floor(v: float) -> int:
    # 749.9999999997 from float noise should land on 750
    r = round(v)
    return int(r) if abs(v - r) < 1e-7 else math.floor(v)


def geo_window(shape, meta: GeoMeta, region: GeoMeta) -> tuple[int, int, int, int]:
    """Pixel window (row0, row1, col0, col1), end-exclusive, for ``region``."""
    h, w = shape[:2]
    eps = 1e-9 * max(1.0, abs(meta.br[0] - meta.tl[0]), abs(meta.tl[1] - meta.br[1]))
    if (region.tl[0] < meta.tl[0] - eps or region.br[0] > meta.br[0] + eps
            or region.tl[1] > meta.tl[1] + eps or region.br[1] < meta.br[1] - eps):
        raise GeoRangeError(f"region {region} lies outside image extent {meta}")
    col = lambda lon: (lon - meta.tl[0]) / (meta.br[0] - meta.tl[0]) * w  # noqa: E731
    row = lambda lat: (meta.tl[1] - lat) / (meta.tl[1] - meta.br[1]) * h  # noqa: E731
    c0, c1 = _floor(col(region.tl[0])), _floor(col(region.br[0]))
    r0, r1 = _floor(row(region.tl[1])), _floor(row(region.br[1]))
    c0, r0 = max(0, c0), max(0, r0)
    c1, r1 = min(w, c1), min(h, r1)
    if c1 <= c0 or r1 <= r0:
        raise GeoRangeError(f"region {region} covers no pixels")
    return r0, r1, c0, c1


def geo_crop(img, meta: GeoMeta, region: GeoMeta) -> tuple[np.ndarray, GeoMeta]:
    """Cut out ``region`` using the linear pixel/degree map of ``meta``.

    The returned metadata describes the pixel-aligned window actually cut.
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    r0, r1, c0, c1 = geo_window(img.shape, meta, region)
    dlon = (meta.br[0] - meta.tl[0]) / w
    dlat = (meta.tl[1] - meta.br[1]) / h
    out = GeoMeta((meta.tl[0] + c0 * dlon, meta.tl[1] - r0 * dlat),
                  (meta.tl[0] + c1 * dlon, meta.tl[1] - r1 * dlat))
    return img[r0:r1, c0:c1].copy(), out


# ------------------------------------------------------------------ tiling

def tile_image(img, tile: int = 256) -> list[tuple[np.ndarray, tuple[int, int]]]:
    """Non-overlapping row-major tiles; incomplete edge tiles are dropped."""
    if tile < 1:
        raise ValueError("tile must be >= 1")
    img = np.asarray(img)
    h, w = img.shape[:2]
    return [(img[r:r + tile, c:c + tile].copy(), (r, c))
            for r in range(0, h - tile + 1, tile) for c in range(0, w - tile + 1, tile)]


# ------------------------------------------------------------------ manifest

MANIFEST_KEYS = ("hazy", "clear", "mdc", "class", "split", "row", "col")
_TILE_RE = re.compile(r"_r(\d+)_c(\d+)$")


@dataclass
class ManifestRecord:
    hazy: str
    clear: str
    mdc: float
    cls: str
    split: str
    row: int = 0
    col: int = 0

    def to_json(self) -> dict:
        return {"hazy": self.hazy, "clear": self.clear, "mdc": self.mdc, "class": self.cls,
                "split": self.split, "row": self.row, "col": self.col}


@dataclass
class Manifest:
    records: list = field(default_factory=list)
    unmatched: list = field(default_factory=list)

    def counts(self) -> dict:
        out = {}
        for r in self.records:
            d = out.setdefault(r.cls, {"train": 0, "test": 0, "val": 0})
            d[r.split] += 1
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_json(), ensure_ascii=False) + "\n" for r in self.records)

    def save(self, path):
        atomic_write(path, self.to_jsonl().encode("utf-8"))


def parse_manifest(text: str) -> Manifest:
    recs = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"manifest line {n}: {e}") from e
        if set(obj) != set(MANIFEST_KEYS):
            raise FormatError(f"manifest line {n}: keys {sorted(obj)} != {sorted(MANIFEST_KEYS)}")
        recs.append(ManifestRecord(obj["hazy"], obj["clear"], obj["mdc"], obj["class"], obj["split"],
                                   obj["row"], obj["col"]))
    return Manifest(recs)


def load_manifest(path) -> Manifest:
    with open(path, encoding="utf-8") as f:
        return parse_manifest(f.read())


def tile_origin(name: str) -> tuple[int, int]:
    m = _TILE_RE.search(Path(name).stem)
    return (int(m.group(1)), int(m.group(2))) if m else (0, 0)


def _list_images(d) -> dict[str, Path]:
    d = Path(d)
    if not d.is_dir():
        raise ImageIOError(d, "not a directory")
    return {p.name: p for p in sorted(d.iterdir()) if p.suffix.lower() in IMAGE_EXTS and p.is_file()}


def _density(path, radius):
    return haze_density(load_image(path), radius)


def build_manifest(hazy_dir, clear_dir, seed: int = 0, thresholds=DEFAULT_THRESHOLDS, radius: int = 7,
                   ratios=(0.8, 0.1), jobs: int = 1) -> Manifest:
    hazy, clear = _list_images(hazy_dir), _list_images(clear_dir)
    names = sorted(set(hazy) & set(clear))
    unmatched = sorted(str(hazy[n]) for n in set(hazy) - set(clear)) + \
        sorted(str(clear[n]) for n in set(clear) - set(hazy))
    paths = [hazy[n] for n in names]
    if jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            dens = list(ex.map(_density, paths, [radius] * len(paths)))
    else:
        dens = [_density(p, radius) for p in paths]
    by_class: dict[str, list[str]] = {}
    mdc = {}
    for n, d in zip(names, dens):
        mdc[n] = d
        by_class.setdefault(classify_haze(d, thresholds), []).append(n)
    split = stratified_split(by_class, ratios, seed)
    recs = []
    for cls, parts in split.items():
        for part, members in parts.items():
            for n in members:
                r, c = tile_origin(n)
                recs.append(ManifestRecord(str(hazy[n]), str(clear[n]), mdc[n], cls, part, r, c))
    recs.sort(key=lambda r: r.hazy)
    return Manifest(recs, unmatched)
