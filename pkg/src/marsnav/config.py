"""Mission configuration: nested dataclasses plus a strict YAML loader.

Keys mirror the dataclass field names one-for-one; unknown keys are
rejected and every error names the offending dotted field path.  Angles are
in radians, distances in metres, times in seconds, speeds in m/h.
"""

from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import yaml

from .defaults import (CONTROL_DT_S, LOCALIZATION_BUDGET_S, MAX_SPEED_M_PER_H,
                       ONE_WAY_DELAY_S, SOL_LENGTH_S, WINDOWS_PER_SOL)
from .errors import ConfigError
from .localization import DeadReckoningConfig, FusionGains
from .planning import PlannerConfig
from .sensing import CameraConfig, ImuConfig, StarTrackerConfig, hazcam, navcam
from .terrain import NoiseParams, RegolithSpec, SlopeProfile, TerrainParams
from .traversability import TraversabilityConfig

MODES = ("onboard", "earth_in_loop")


@dataclass(frozen=True)
class CommConfig:
    one_way_delay: float = ONE_WAY_DELAY_S
    windows_per_sol: int = WINDOWS_PER_SOL
    sol_length: float = SOL_LENGTH_S


@dataclass(frozen=True)
class MissionConfig:
    seed: int = 0
    terrain: TerrainParams = field(default_factory=lambda: TerrainParams(rock_density=0.02))
    start: Tuple[float, float, float] = (0.0, 0.0, 0.0)  # x, y, heading
    goals: Tuple[Tuple[float, float], ...] = ((20.0, 0.0),)
    hazcam: CameraConfig = field(default_factory=hazcam)
    navcam: CameraConfig = field(default_factory=navcam)
    panorama: bool = True  # navcam sweep at mission start
    imu: ImuConfig = field(default_factory=ImuConfig)
    star_tracker: StarTrackerConfig = field(default_factory=StarTrackerConfig)
    dead_reckoning: DeadReckoningConfig = field(default_factory=DeadReckoningConfig)
    fusion: FusionGains = field(default_factory=FusionGains)
    traversability: TraversabilityConfig = field(default_factory=TraversabilityConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    max_speed: float = MAX_SPEED_M_PER_H
    control_dt: float = CONTROL_DT_S
    compute_budget: float = LOCALIZATION_BUDGET_S
    # wheel travel allowed between two localization updates
    max_drive_per_update: float = 0.5
    mode: str = "onboard"
    comm: CommConfig = field(default_factory=CommConfig)
    # distance driven on each set of products returned from Earth
    earth_drive_distance: float = 3.0
    max_sim_time: float = 20000.0
    goal_tolerance: float = 0.5
    waypoint_tolerance: float = 1.0
    turn_rate: float = 0.05  # rad/s, turn-in-place when every arc is disqualified
    start_time_of_day: float = 0.3  # fraction of a sol after local midnight
    # rock-free disk kept around the start and every goal
    clear_radius: float = 1.5
    sensor_fault_time: Optional[float] = None
    # loop recovery: after a full turn with no progress, drive this far with
    # safety weighted this low (disqualified arcs stay excluded)
    escape_distance: float = 3.0
    escape_safety_weight: float = 0.1

    def __post_init__(self):
        positive = ("max_speed", "control_dt", "max_drive_per_update", "earth_drive_distance",
                    "max_sim_time", "goal_tolerance", "waypoint_tolerance", "turn_rate")
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(name, f"must be a positive number, got {v!r}")
        if not self.compute_budget >= 0:
            raise ConfigError("compute_budget", "must be >= 0")
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {self.mode!r}")
        if not self.goals:
            raise ConfigError("goals", "at least one goal is required")
        ext = self.terrain.extent
        for k, g in enumerate(self.goals):
            if len(g) != 2 or max(abs(g[0]), abs(g[1])) > ext - 5.0:
                raise ConfigError(f"goals[{k}]", f"must be (x, y) at least 5 m inside the extent {ext}")
        if len(self.start) != 3 or max(abs(self.start[0]), abs(self.start[1])) > ext - 5.0:
            raise ConfigError("start", "must be (x, y, heading) at least 5 m inside the extent")
        c = self.comm
        if not c.one_way_delay >= 0:
            raise ConfigError("comm.one_way_delay", "must be >= 0")
        if not (isinstance(c.windows_per_sol, int) and c.windows_per_sol >= 1):
            raise ConfigError("comm.windows_per_sol", "must be an integer >= 1")
        if not c.sol_length > 0:
            raise ConfigError("comm.sol_length", "must be > 0")
        if self.star_tracker.sol_length != c.sol_length:
            raise ConfigError("star_tracker.sol_length", "must equal comm.sol_length")
        if not 0.0 <= self.start_time_of_day < 1.0:
            raise ConfigError("start_time_of_day", "must be in [0, 1)")
        if not 0.0 <= self.escape_safety_weight < 1.0:
            raise ConfigError("escape_safety_weight", "must be in [0, 1)")
        if self.escape_distance < 0:
            raise ConfigError("escape_distance", "must be >= 0")
        if self.clear_radius < 0:
            raise ConfigError("clear_radius", "must be >= 0")


# -- dict <-> dataclass --------------------------------------------------------

_HINTS = {}


def _hints(cls):
    if cls not in _HINTS:
        _HINTS[cls] = typing.get_type_hints(cls)
    return _HINTS[cls]


def _convert(tp, value, path):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        inner = [a for a in args if a is not type(None)]
        if value is None:
            return None
        return _convert(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
        return _build(tp, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{path}[{k}]") for k, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(path, f"expected {len(args)} items, got {len(value)}")
        return tuple(_convert(a, v, f"{path}[{k}]") for k, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


def _build(cls, data, prefix=""):
    hints = _hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in names:
            raise ConfigError(path, "unknown key")
        kwargs[key] = _convert(hints[key], value, path)
    try:
        if cls is CameraConfig and "name" not in kwargs:
            base = hazcam() if prefix.endswith("hazcam") else navcam()
            return dataclasses.replace(base, **kwargs)
        return cls(**kwargs)
    except ConfigError as e:
        if prefix and not e.field.startswith(prefix):
            raise ConfigError(f"{prefix}.{e.field}", e.message) from None
        raise
    except (ValueError, TypeError) as e:
        # validation messages lead with the field name when there is one
        head = str(e).split(" ", 1)[0]
        path = prefix or cls.__name__
        if head in names:
            path = f"{prefix}.{head}" if prefix else head
        raise ConfigError(path, str(e)) from None


def config_from_dict(data: Optional[dict]) -> MissionConfig:
    """Build a validated MissionConfig; missing keys take their defaults."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    return _build(MissionConfig, data)


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    return value


def config_to_dict(cfg) -> dict:
    """Fully resolved plain-data form of any config dataclass."""
    return _plain(cfg)


def dump_config(cfg, path):
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))


def load_config(path) -> MissionConfig:
    """Read a YAML mission config; raises FileNotFoundError or ConfigError."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(str(p))
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigError("<root>", f"YAML parse error: {e}") from None
    return config_from_dict(data)


__all__ = ["CommConfig", "MissionConfig", "MODES", "config_from_dict", "config_to_dict",
           "dump_config", "load_config", "NoiseParams", "RegolithSpec", "SlopeProfile"]
