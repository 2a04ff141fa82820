"""Scenario configuration, presets and config-file loading.

Config files are TOML (or JSON with the same layout). Every table maps onto a
dataclass and unknown keys are rejected, so a typo in a physics parameter
fails loudly instead of silently falling back to a default. A top-level
``preset = "scenario1"`` key starts from a preset and overrides on top of it::

    preset = "scenario2"
    trials = 500
    seed = 7

    [layout]
    cluster_radius_m = 250.0

    [rician]
    k_mean_db = 12.0
"""

from __future__ import annotations

import dataclasses
import json
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channel import ClusterLayout, LinkBudget, RicianParams, SatelliteGeometry
from .detectors import Method
from .errors import ConfigError


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    geometry: SatelliteGeometry = field(default_factory=SatelliteGeometry)
    layout: ClusterLayout = field(default_factory=lambda: ClusterLayout.ring(4, 4))
    budget: LinkBudget = field(default_factory=LinkBudget)
    rician: RicianParams = field(default_factory=RicianParams)
    modulation_order: int = 4
    detectors: tuple[str, ...] = ("RI", "GS", "SSOR")
    iterations: int = 100
    omega: float = 1.0
    snr_db: float = 19.0
    snr_sweep_db: tuple[float, ...] = (10.0, 12.0, 14.0, 16.0, 18.0, 20.0)
    nmse_db: float | None = -10.0
    cs4_conventional_iters: tuple[int, ...] = (3, 10, 20, 30)
    cs4_proposed_iters: tuple[int, ...] = (1, 2, 3)
    trials: int = 1000
    seed: int = 2025
    out_dir: str = "results"

    def __post_init__(self):
        object.__setattr__(self, "detectors", tuple(str(d).upper() for d in self.detectors))
        object.__setattr__(self, "snr_sweep_db", tuple(float(s) for s in self.snr_sweep_db))
        object.__setattr__(self, "cs4_conventional_iters", tuple(int(t) for t in self.cs4_conventional_iters))
        object.__setattr__(self, "cs4_proposed_iters", tuple(int(t) for t in self.cs4_proposed_iters))
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if int(self.iterations) < 1:
            raise ConfigError("iterations must be >= 1")
        if self.modulation_order not in (4, 16, 64):
            raise ConfigError("modulation_order must be 4, 16 or 64")
        for d in self.detectors:
            if d not in Method.__members__:
                raise ConfigError(f"unknown detector {d!r}; choose from {', '.join(Method.__members__)}")
        if not 0 < self.omega < 2:
            raise ConfigError("omega must lie in (0, 2)")
        if not self.snr_sweep_db:
            raise ConfigError("snr_sweep_db must not be empty")
        if self.nmse_db is not None and not abs(self.nmse_db) < float("inf"):
            raise ConfigError("nmse_db must be finite")
        iters = self.cs4_conventional_iters + self.cs4_proposed_iters
        if not self.cs4_conventional_iters or not self.cs4_proposed_iters or min(iters) < 0:
            raise ConfigError("case-study-4 iteration counts must be non-empty lists of integers >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def n_users(self) -> int:
        return self.layout.n_users

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return _to_plain(self)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    return obj


def scenario1(**overrides) -> ScenarioConfig:
    """16 users in 4 clusters of 4."""
    return ScenarioConfig(name="scenario1", layout=ClusterLayout.ring(4, 4)).replace(**overrides)


def scenario2(**overrides) -> ScenarioConfig:
    """64 users in 8 clusters of 8."""
    return ScenarioConfig(name="scenario2", layout=ClusterLayout.ring(8, 8)).replace(**overrides)


PRESETS = {"scenario1": scenario1, "scenario2": scenario2}


def preset(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


# -- loading ---------------------------------------------------------------------

_NESTED = {"geometry": SatelliteGeometry, "layout": ClusterLayout, "budget": LinkBudget, "rician": RicianParams}


def _build(cls, data: dict, base, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a table")
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for key, value in data.items():
        if key in _NESTED and cls is ScenarioConfig:
            value = _build(_NESTED[key], value, getattr(base, key) if base else None, f"{where}.{key}" if where != "config" else key)
        elif isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        _check_scalar_type(hints[key], value, f"{where}.{key}" if where != "config" else key)
        kwargs[key] = value
    try:
        if base is not None:
            return dataclasses.replace(base, **kwargs)
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _check_scalar_type(hint, value, where):
    # only catch the common mistakes: strings for numbers and vice versa
    numeric = hint in (int, float) or hint == (float | None) or hint == (int | None)
    if numeric and (isinstance(value, (str, bool)) or not isinstance(value, (int, float, type(None)))):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    if hint is str and not isinstance(value, str):
        raise ConfigError(f"{where} must be a string, got {value!r}")
    if hint is bool and not isinstance(value, bool):
        raise ConfigError(f"{where} must be true or false, got {value!r}")


def config_from_dict(data: dict) -> ScenarioConfig:
    data = dict(data)
    base = None
    if "preset" in data:
        base = preset(data.pop("preset"))
    return _build(ScenarioConfig, data, base, "config")


def load_config(path) -> ScenarioConfig:
    """Read a TOML (``.toml``) or JSON (``.json``) scenario file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            data = json.loads(raw)
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)
