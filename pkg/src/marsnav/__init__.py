"""Deterministic Mars-rover navigation: terrain, sensing, localization, mapping,
arc planning, a closed-loop mission simulator and a small bundle adjuster."""

from .config import MissionConfig, load_config
from .errors import (BehindCameraError, ConfigError, DegenerateGeometryError,
                     InsufficientDataError, MarsNavError, NoProgressError, OutOfBoundsError,
                     ParameterError)
from .localization import Pose, PoseEstimate
from .mission import MissionReport, render_map_snapshot, run_mission, step_dynamics
from .terrain import TerrainParams, generate_terrain

__version__ = "0.1.0"

__all__ = ["MissionConfig", "load_config", "BehindCameraError", "ConfigError",
           "DegenerateGeometryError", "InsufficientDataError", "MarsNavError", "NoProgressError",
           "OutOfBoundsError", "ParameterError", "Pose", "PoseEstimate", "MissionReport",
           "render_map_snapshot", "run_mission", "step_dynamics", "TerrainParams",
           "generate_terrain"]
