"""Declarative training configuration (TOML key-value file)."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import DSGError


@dataclass
class Config:
    # window & graph construction
    window_size: int = 4
    clusters: int = 16  # K
    tau: float = 0.9
    temporal_encoding: bool = True
    spatial_encoding: bool = False
    encoding_scale: float = 0.1
    normalize_features: bool = True
    spatial_edge_weight: float = 1.0
    temporal_edge_weight: float = 1.0
    # matcher
    match_source: str = "auto"  # auto | files | matcher
    match_min_conf: float = 0.7
    # clustering objective
    clustering_objective: str = "dmon"  # dmon | mincut
    collapse_weight: float = 1.0
    # architecture
    gcn_hidden: tuple[int, ...] = (64,)
    mlp_hidden: tuple[int, ...] = ()
    edge_hidden: tuple[int, ...] = (64,)
    cls_hidden: tuple[int, ...] = (64,)
    # optimization
    epochs: int = 100
    lr: float = 1e-4
    batch: int = 32
    seed: int = 0
    loss_weight_clustering: float = 1.0
    loss_weight_classification: float = 1.0

    def __post_init__(self):
        if self.clustering_objective not in ("dmon", "mincut"):
            raise DSGError(f"unknown clustering_objective {self.clustering_objective!r}")
        if self.match_source not in ("auto", "files", "matcher"):
            raise DSGError(f"unknown match_source {self.match_source!r}")
        if self.window_size < 1 or self.clusters < 2 or self.epochs < 0 or self.batch < 1:
            raise DSGError("window_size/clusters/epochs/batch out of range")
        for name in ("gcn_hidden", "mlp_hidden", "edge_hidden", "cls_hidden"):
            setattr(self, name, tuple(int(v) for v in getattr(self, name)))


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def load_config(path) -> Config:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise DSGError(f"{path}: cannot parse config ({exc})") from exc
    return config_from_dict(raw, source=str(path))


def config_from_dict(raw: dict, source: str = "<dict>") -> Config:
    unknown = set(raw) - set(_FIELD_TYPES)
    if unknown:
        raise DSGError(f"{source}: unknown config keys {sorted(unknown)}")
    try:
        return Config(**raw)
    except TypeError as exc:
        raise DSGError(f"{source}: bad config value ({exc})") from exc


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def save_config(cfg: Config, path):
    lines = [f"{k} = {_toml_value(v)}" for k, v in asdict(cfg).items()]
    Path(path).write_text("\n".join(lines) + "\n")
