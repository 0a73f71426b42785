"""Experiment configuration: dataclass, named presets, TOML loading."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace

__all__ = ["ExperimentConfig", "PRESETS", "load_config", "config_hash", "default_config"]


GENERIC_OBSERVABLE = [[0, 0, 1.0, 0.0], [0, 1, 0.5, 0.0], [1, 0, 1.0, 0.0]]
COS_PSI = [[1, 0, 1.0, 0.0]]

PRESETS = {
    "lsv05": {"family": "lsv", "gamma": 0.5, "c1": 2.0},
    "lsv15": {"family": "lsv", "gamma": 1.5, "c1": 2.0},
    "lsv03": {"family": "lsv", "gamma": 0.3, "c1": 2.0},
    "lsv": {"family": "lsv", "gamma": 0.5, "c1": 2.0},
    "thaler05": {"family": "thaler", "gamma": 0.5, "c2": 1.0},
    "thaler": {"family": "thaler", "gamma": 0.5, "c2": 1.0},
    "doubling": {"family": "doubling"},
}


@dataclass
class ExperimentConfig:
    preset: str = "lsv05"
    family: str = "lsv"
    gamma: float | None = 0.5
    c1: float = 2.0
    c2: float = 1.0
    y: tuple[float, float] | None = None
    m: int = 128
    phi_max: int = 1024
    horizon: int = 1024
    quad_order: int = 8
    k_max: int = 8
    omega_count: int = 256
    cocycle: list = field(default_factory=lambda: [[0, 1, 0.3, 0.0]])
    observable_v: list = field(default_factory=lambda: [r[:] for r in GENERIC_OBSERVABLE])
    observable_w: list = field(default_factory=lambda: [r[:] for r in GENERIC_OBSERVABLE])
    obs_dim: int = 1
    seed: int = 2024
    threads: int = 1
    out_dir: str = "out"
    mc_samples: int = 1_000_000
    mc_burn: int = 10_000
    mc_shards: int = 1024
    theta: float = 0.75
    epsilon: float = 0.5
    tolerances: dict = field(default_factory=dict)

    def validate(self) -> None:
        for name in ("m", "phi_max", "horizon", "quad_order", "omega_count", "mc_samples"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.family in ("lsv", "thaler") and (self.gamma is None or self.gamma <= 0):
            raise ValueError("gamma must be positive for intermittent families")
        if not (0 < self.theta < 1):
            raise ValueError("theta must lie in (0,1)")

    @property
    def beta(self) -> float:
        if self.family == "doubling" or not self.gamma:
            return float("inf")
        return 1.0 / self.gamma

    @property
    def finite_measure(self) -> bool:
        return self.beta > 1.0

    def map_kwargs(self) -> dict:
        if self.family == "lsv":
            return {"gamma": self.gamma, "c1": self.c1}
        if self.family == "thaler":
            return {"gamma": self.gamma, "c2": self.c2}
        return {}

    def build_map(self):
        from .interval_maps import map_from_name

        return map_from_name(self.family, **self.map_kwargs())

    def build_scheme(self, phi_max: int | None = None):
        from .inducing import SymbolicMetric, build_scheme

        return build_scheme(
            self.build_map(),
            phi_max=phi_max or self.phi_max,
            y=self.y,
            metric=SymbolicMetric(theta=self.theta, epsilon=self.epsilon),
        )

    def build_cocycle(self):
        from .cocycles import cocycle_from_records

        return cocycle_from_records([tuple(r) for r in self.cocycle])

    def build_observables(self):
        from .cocycles import observable_from_records

        v = observable_from_records([tuple(r) for r in self.observable_v], dim=self.obs_dim)
        w = observable_from_records([tuple(r) for r in self.observable_w], dim=self.obs_dim)
        return v, w


def default_config(preset: str = "lsv05", **overrides) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if preset:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base = PRESETS[preset]
        cfg = replace(
            cfg,
            preset=preset,
            family=base["family"],
            gamma=base.get("gamma"),
            c1=base.get("c1", 2.0),
            c2=base.get("c2", 1.0),
        )
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _toml_load(path: str) -> dict:
    if sys.version_info >= (3, 11):
        import tomllib as toml
    else:
        import tomli as toml
    with open(path, "rb") as fh:
        return toml.load(fh)


def load_config(path: str, **overrides) -> ExperimentConfig:
    """Load a TOML config file; flat keys or [map]/[grid]/[run]/[mc] tables."""
    raw = _toml_load(path)
    flat: dict = {}
    table_map = {
        "map": {"family": "family", "gamma": "gamma", "c1": "c1", "c2": "c2", "y": "y"},
        "grid": {"m": "m", "phi_max": "phi_max", "quad_order": "quad_order"},
        "run": {
            "horizon": "horizon",
            "seed": "seed",
            "threads": "threads",
            "out_dir": "out_dir",
            "k_max": "k_max",
            "omega_count": "omega_count",
        },
        "mc": {"samples": "mc_samples", "burn": "mc_burn", "shards": "mc_shards"},
        "metric": {"theta": "theta", "epsilon": "epsilon"},
        "observables": {"v": "observable_v", "w": "observable_w", "dim": "obs_dim"},
    }
    preset = raw.pop("preset", None)
    for table, keys in table_map.items():
        sub = raw.pop(table, {})
        for k, attr in keys.items():
            if k in sub:
                flat[attr] = sub[k]
    if "cocycle" in raw:
        flat["cocycle"] = raw.pop("cocycle")
    if "tolerances" in raw:
        flat["tolerances"] = raw.pop("tolerances")
    for k, v in raw.items():
        flat[k] = v
    if "y" in flat and flat["y"] is not None:
        flat["y"] = tuple(flat["y"])
    flat.update(overrides)
    return default_config(preset or flat.pop("preset", "lsv05"), **flat)


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
