"""Weight files: parameters in the tensor container plus a config sidecar."""
from __future__ import annotations

import os

from .. import tensorfile
from ..errors import FormatError
from ..params import ParamStore
from .config import ModelConfig
from .net import param_layout


def config_path(weights_path) -> str:
    return str(weights_path) + ".cfg"


def save_weights(path, params: ParamStore, cfg: ModelConfig | None = None):
    tensorfile.save(path, dict(params.items()))
    if cfg is not None:
        tensorfile.atomic_write(config_path(path), cfg.to_text().encode("utf-8"))


def load_weights(path, cfg: ModelConfig | None = None) -> tuple[ParamStore, ModelConfig]:
    """Load a store and check it against ``cfg`` (or the sidecar, or defaults)."""
    if cfg is None:
        side = config_path(path)
        if os.path.exists(side):
            with open(side, encoding="utf-8") as f:
                cfg = ModelConfig.from_text(f.read())
        else:
            cfg = ModelConfig()
    arrays = tensorfile.load(path)
    want = {n: s for n, s, _ in param_layout(cfg)}
    if set(arrays) != set(want):
        missing = sorted(set(want) - set(arrays))[:3]
        extra = sorted(set(arrays) - set(want))[:3]
        raise FormatError(f"weights do not match config: missing {missing}, unexpected {extra}")
    for n, s in want.items():
        if arrays[n].shape != tuple(s):
            raise FormatError(f"{n}: shape {arrays[n].shape} != expected {tuple(s)}")
    return ParamStore({n: arrays[n] for n in want}), cfg
