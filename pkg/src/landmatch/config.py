"""Pipeline parameters and their validation."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Config:
    groove_smooth: int = 35
    striae_smooth: int = 25
    loess_span: float = 0.75
    smooth_span: float = 0.03
    stability_step: float = 25.0
    stability_threshold: float = 0.95
    max_lag: int = 120
    min_overlap_frac: float = 0.5
    cutoff: float = 0.5
    n_trees: int = 300
    mtry: int = 2
    min_leaf: int = 7
    seed: int = 0

    def __post_init__(self):
        for name in ("groove_smooth", "striae_smooth"):
            s = getattr(self, name)
            if s < 3 or s % 2 == 0:
                raise ValueError(f"{name} must be an odd integer >= 3, got {s}")
        for name in ("loess_span", "smooth_span", "min_overlap_frac"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if not self.stability_step > 0:
            raise ValueError("stability_step must be positive")
        if not -1 <= self.stability_threshold <= 1:
            raise ValueError("stability_threshold must be in [-1, 1]")
        if self.max_lag < 0:
            raise ValueError("max_lag must be non-negative")
        if not 0 <= self.cutoff <= 1:
            raise ValueError("cutoff must be in [0, 1]")
        if self.n_trees < 1 or self.mtry < 1 or self.min_leaf < 1:
            raise ValueError("n_trees, mtry and min_leaf must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def updated(self, **changes) -> "Config":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)


def parse_config_text(text: str) -> dict:
    """``key = value`` lines (``#`` comments allowed) to typed Config fields."""
    types = {f.name: f.type for f in fields(Config)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in types:
            raise ValueError(f"line {lineno}: unknown setting {key!r}")
        value = value.strip('"\'')
        out[key] = int(value) if types[key] in ("int", int) else float(value)
    return out


def load_config(path) -> Config:
    with open(path) as fh:
        return Config(**parse_config_text(fh.read()))
