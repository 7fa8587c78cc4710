"""Network hyper-parameters and their text serialisation."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..errors import FormatError, ShapeError


@dataclass(frozen=True)
class ModelConfig:
    embed_dims: tuple = (24, 48, 96, 48, 24)
    depths: tuple = (8, 8, 16, 8, 8)
    mfib_cascade: int = 3
    mlp_ratio: float = 2.0
    query_base: int = 8
    in_channels: int = 3
    out_channels: int = 3
    # width of the three-scale fusion in each of the two decoder fusions
    fusion_dims: tuple = (12, 48)
    ca_reduction: int = 4
    # one feed-forward MLP per cascade instead of one per block
    share_mlp: bool = True

    def __post_init__(self):
        if len(self.embed_dims) != 5 or len(self.depths) != 5:
            raise ShapeError("embed_dims and depths need five entries")
        if any(d % 4 for d in self.embed_dims):
            raise ShapeError(f"every embed dim must be divisible by 4: {self.embed_dims}")
        if any(d < 1 for d in self.depths):
            raise ShapeError("all depths must be >= 1")
        if self.mfib_cascade < 1 or self.query_base < 1:
            raise ShapeError("mfib_cascade and query_base must be >= 1")
        if len(self.fusion_dims) != 2 or min(self.fusion_dims) < 1:
            raise ShapeError("fusion_dims needs two positive entries")

    @classmethod
    def toy(cls, **kw) -> "ModelConfig":
        base = dict(embed_dims=(8, 16, 32, 16, 8), depths=(1, 1, 1, 1, 1), fusion_dims=(8, 8))
        base.update(kw)
        return cls(**base)

    def blocks_in_stage(self, stage: int) -> int:
        """Number of cascades in a stage.

        A depth counts layers; one cascade spans ``mfib_cascade`` blocks plus
        its closing conv.
        """
        return max(1, self.depths[stage] // (self.mfib_cascade + 1))

    def mlp_hidden(self, c: int) -> int:
        return max(1, int(round(self.mlp_ratio * c)))

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, (tuple, list)):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        types = {f.name: f.type for f in fields(cls)}
        defaults = asdict(cls())
        kw = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"bad config line: {raw!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in types:
                raise FormatError(f"unknown config key {k!r}")
            ref = defaults[k]
            try:
                if isinstance(ref, tuple):
                    kw[k] = tuple(int(x) for x in v.split(",") if x.strip())
                elif isinstance(ref, bool):
                    if v.lower() not in ("true", "false", "1", "0"):
                        raise ValueError(v)
                    kw[k] = v.lower() in ("true", "1")
                elif isinstance(ref, int):
                    kw[k] = int(v)
                else:
                    kw[k] = float(v)
            except ValueError as e:
                raise FormatError(f"bad value for {k}: {v!r}") from e
        return cls(**kw)
