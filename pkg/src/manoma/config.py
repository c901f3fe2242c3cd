"""Experiment configuration: defaults, named profiles, unit conversion."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

__all__ = [
    "ScenarioConfig",
    "SweepSpec",
    "ConfigError",
    "PROFILES",
    "SWEEP_AXES",
    "db_to_linear",
    "dbm_to_watts",
    "load_config",
    "config_from_dict",
]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulation parameters.

    Power-like quantities are given in dB/dBm; the ``*_linear`` properties
    return the converted values. The movable-region side is expressed in
    wavelengths (``A / lambda``).
    """

    n_antennas: int = 4
    n_users: int = 6
    n_paths: int = 10
    wavelength: float = 0.01
    g0_db: float = -40.0
    zeta: float = 2.8
    noise_dbm: float = -80.0
    region_wavelengths: float = 2.0
    p_max_dbm: float = 30.0
    xi: float = 0.1
    alpha: float = 0.8
    t0: float = 5.0
    eps1: float = 1e-3
    eps2: float = 1e-3
    n_hippos: int = 50
    beta: float = 1.5
    i_max: int = 100
    d_min: float = 20.0
    d_max: float = 100.0
    mcp_grid_wavelengths: float = 0.05
    seed_origin: bool = True

    def __post_init__(self):
        positive_int = ("n_antennas", "n_users", "n_paths", "n_hippos", "i_max")
        for name in positive_int:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name}: expected a positive integer, got {value!r}")
        if self.n_hippos < 2:
            raise ConfigError(f"n_hippos: need at least 2, got {self.n_hippos}")
        positive = ("wavelength", "zeta", "region_wavelengths", "t0", "eps1", "eps2",
                    "mcp_grid_wavelengths", "d_min", "d_max")
        for name in positive:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{name}: expected a positive number, got {value!r}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha: must lie in (0, 1), got {self.alpha}")
        if not self.t0 > self.eps1:
            raise ConfigError(f"eps1: must be below t0={self.t0}, got {self.eps1}")
        if self.xi < 0:
            raise ConfigError(f"xi: must be non-negative, got {self.xi}")
        if not 0 < self.beta <= 2:
            raise ConfigError(f"beta: must lie in (0, 2], got {self.beta}")
        if self.d_min > self.d_max:
            raise ConfigError(f"d_max: must be >= d_min={self.d_min}, got {self.d_max}")

    @property
    def g0(self) -> float:
        return db_to_linear(self.g0_db)

    @property
    def noise_power(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    @property
    def p_max(self) -> float:
        return dbm_to_watts(self.p_max_dbm)

    @property
    def region_side(self) -> float:
        return self.region_wavelengths * self.wavelength

    @property
    def region_half(self) -> float:
        return self.region_side / 2.0

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# Desk profile: small enough for CI, same structure as the full setup.
PROFILES = {
    "paper": {},
    "desk": {"n_antennas": 2, "n_users": 3, "n_paths": 4, "n_hippos": 8, "i_max": 25},
}

# axis name -> (config field, converter from the CLI value)
SWEEP_AXES = {
    "users": ("n_users", int),
    "antennas": ("n_antennas", int),
    "paths": ("n_paths", int),
    "region": ("region_wavelengths", float),
    "power": ("p_max_dbm", float),
    "mu": (None, float),
    "nu": (None, float),
}


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    trials: int = 20
    schemes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"axis: unknown axis {self.axis!r}, choose from {sorted(SWEEP_AXES)}")
        if len(self.values) == 0:
            raise ConfigError("values: at least one value is required")
        if self.trials < 1:
            raise ConfigError(f"trials: must be >= 1, got {self.trials}")


def config_from_dict(data: dict | None, profile: str = "paper") -> ScenarioConfig:
    """Build a config from a (possibly partial) mapping layered over a profile."""
    if profile not in PROFILES:
        raise ConfigError(f"profile: unknown profile {profile!r}")
    data = dict(data or {})
    known = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown configuration field")
    merged = dict(PROFILES[profile])
    merged.update(data)
    for name, value in merged.items():
        default = known[name].default
        if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            merged[name] = float(value)
    return ScenarioConfig(**merged)


def load_config(path, profile: str = "paper") -> ScenarioConfig:
    """Read a YAML config file. Missing fields take their defaults."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"parse error in {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data, profile)
