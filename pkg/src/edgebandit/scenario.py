"""Scenario configuration: dataclasses plus a versioned YAML representation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .demand import (DemandFunction, GaussianBumps, GridTable, bundled_demand_functions,
                     default_demand_function, load_demand_table)
from .errors import ConfigError
from .network import CloudConfig, ChannelConfig, TaskProfile

SCHEMA_VERSION = 1

POLICIES = ("oracle", "seen", "seen-o", "cucb", "c2ucb", "eps-greedy", "random")


@dataclass
class DemandSpec:
    kind: str = "default"  # default | bundled | gaussian_bumps | bilinear_table | csv_table
    name: str | None = None
    centers: list[list[float]] | None = None
    heights: list[float] | None = None
    widths: list[float] | None = None
    base: float = 0.0
    values: list | None = None
    path: str | None = None


@dataclass
class PolicySpec:
    name: str = "seen"
    epsilon: float = 0.1
    random_ties: bool = False


@dataclass
class ScenarioConfig:
    area_size: float = 1000.0
    n_sbs: int = 10
    budget: int = 3
    horizon: int = 500
    sbs_range: float = 150.0
    sbs_cpu_freq: float = 2.8e9
    context_dims: int = 2
    sbs_context_dims: list[int] | None = None
    holder_alpha: float = 1.0
    arrival_rate: float = 6.0
    area_mixture: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    context_spread: float = 0.02
    context_truncation: float | None = 2.0
    overlap: bool = False
    target_overlap: float | None = None
    overlap_resolution: float = 1.0
    component_cap: int = 12
    checkpoint_every: int = 50
    seed: int = 1
    task: TaskProfile = field(default_factory=TaskProfile)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    mbs_channel: ChannelConfig = field(default_factory=lambda: ChannelConfig(pathloss_exponent=3.0))
    cloud: CloudConfig = field(default_factory=CloudConfig)
    demand: DemandSpec = field(default_factory=DemandSpec)
    policy: PolicySpec = field(default_factory=PolicySpec)
    base_dir: str = field(default=".", repr=False, compare=False)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.area_size <= 0 or self.n_sbs < 1 or self.horizon < 1:
            raise ConfigError("area_size, n_sbs and horizon must be positive")
        if not 0 <= self.budget <= self.n_sbs:
            raise ConfigError(f"budget {self.budget} must lie in [0, n_sbs={self.n_sbs}]")
        if self.sbs_range < 0 or self.sbs_cpu_freq <= 0:
            raise ConfigError("sbs_range must be >= 0 and sbs_cpu_freq > 0")
        if self.context_dims < 1 or self.holder_alpha <= 0:
            raise ConfigError("context_dims must be >= 1 and holder_alpha > 0")
        if self.sbs_context_dims is not None:
            if len(self.sbs_context_dims) != self.n_sbs:
                raise ConfigError("sbs_context_dims needs one entry per SBS")
            if any(not 1 <= d <= self.context_dims for d in self.sbs_context_dims):
                raise ConfigError("each SBS context dimension must lie in [1, context_dims]")
        if self.context_spread < 0 or (self.context_truncation is not None and self.context_truncation <= 0):
            raise ConfigError("context_spread must be >= 0 and context_truncation positive or null")
        if self.arrival_rate < 0:
            raise ConfigError("arrival_rate must be >= 0")
        if len(self.area_mixture) != 3 or min(self.area_mixture) < 0 or sum(self.area_mixture) <= 0:
            raise ConfigError("area_mixture needs 3 non-negative weights with positive sum")
        if self.target_overlap is not None and not 0.0 <= self.target_overlap < 1.0:
            raise ConfigError("target_overlap must lie in [0, 1)")
        if self.checkpoint_every < 1 or self.overlap_resolution <= 0:
            raise ConfigError("checkpoint_every and overlap_resolution must be positive")
        if self.policy.name not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy.name!r}; choose from {', '.join(POLICIES)}")

    @property
    def dims_per_sbs(self) -> list[int]:
        return list(self.sbs_context_dims) if self.sbs_context_dims else [self.context_dims] * self.n_sbs

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def with_policy(self, name: str) -> "ScenarioConfig":
        return self.replace(policy=dataclasses.replace(self.policy, name=name))

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        d["area_mixture"] = list(self.area_mixture)
        d["cloud"]["backbone_rate"] = list(self.cloud.backbone_rate)
        return {"schema_version": SCHEMA_VERSION, **d}

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path = ".") -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigError("scenario document must be a mapping")
        raw = dict(raw)
        version = raw.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})")
        nested = {"task": TaskProfile, "channel": ChannelConfig, "mbs_channel": ChannelConfig,
                  "cloud": CloudConfig, "demand": DemandSpec, "policy": PolicySpec}
        kwargs: dict[str, Any] = {}
        known = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        for key, val in raw.items():
            if key not in known:
                raise ConfigError(f"unknown scenario key {key!r}")
            if key in nested:
                kwargs[key] = _build(nested[key], val, key)
            elif key == "area_mixture":
                kwargs[key] = tuple(float(v) for v in val)
            else:
                kwargs[key] = val
        try:
            return cls(**kwargs, base_dir=str(base_dir))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        return cls.from_dict(raw or {}, base_dir=path.parent)


def _build(kind: type, val: Any, key: str):
    if not isinstance(val, dict):
        raise ConfigError(f"section {key!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(kind)}
    extra = set(val) - names
    if extra:
        raise ConfigError(f"unknown keys in {key!r}: {sorted(extra)}")
    val = dict(val)
    if kind is CloudConfig and "backbone_rate" in val:
        val["backbone_rate"] = tuple(float(v) for v in val["backbone_rate"])
    try:
        return kind(**val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {key!r} section: {exc}") from exc


def build_demand_function(config: ScenarioConfig) -> DemandFunction:
    spec, D, d_max = config.demand, config.context_dims, float(config.task.d_max)
    if spec.kind == "default":
        fn = default_demand_function(D, d_max)
    elif spec.kind == "bundled":
        table = bundled_demand_functions(D, d_max)
        if spec.name not in table:
            raise ConfigError(f"unknown bundled demand {spec.name!r}; choose from {sorted(table)}")
        fn = table[spec.name]
    elif spec.kind == "gaussian_bumps":
        fn = GaussianBumps(np.asarray(spec.centers or np.zeros((0, D))), spec.heights or [],
                           spec.widths or [], base=spec.base, d_max=d_max)
    elif spec.kind == "bilinear_table":
        fn = GridTable(np.asarray(spec.values, dtype=float), d_max=d_max)
    elif spec.kind == "csv_table":
        if not spec.path:
            raise ConfigError("csv_table demand needs a 'path'")
        fn = load_demand_table(Path(config.base_dir) / spec.path)
        if fn.d_max > d_max:
            raise ConfigError("demand table d_max exceeds task.d_max")
    else:
        raise ConfigError(f"unknown demand kind {spec.kind!r}")
    if fn.dims != D:
        raise ConfigError(f"demand function is {fn.dims}-dimensional but context_dims is {D}")
    return fn
