import dataclasses

import pytest
import yaml

from marsnav.config import (MissionConfig, config_from_dict, config_to_dict, dump_config,
                            load_config)
from marsnav.errors import ConfigError
from pathlib import Path

EXAMPLE = Path(__file__).resolve().parents[1] / "configs" / "example.yaml"


def test_defaults():
    c = MissionConfig()
    assert c.max_speed == 152.0 and c.mode == "onboard"
    assert c.comm.one_way_delay == 1200.0 and c.comm.windows_per_sol == 2
    assert c.hazcam.fov_deg == 120.0 and c.navcam.fov_deg == 45.0
    assert config_from_dict(None) == c == config_from_dict({})


def test_round_trip_through_yaml(tmp_path):
    c = config_from_dict({"seed": 4, "goals": [[10, 5], [20, 0]], "mode": "earth_in_loop",
                          "terrain": {"rock_density": 0.05, "profile": {"kind": "ramp"}}})
    assert c.goals == ((10.0, 5.0), (20.0, 0.0))
    assert c.terrain.profile.kind == "ramp"
    dump_config(c, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == c
    assert config_from_dict(config_to_dict(c)) == c


def test_example_config_loads_and_documents_every_default():
    c = load_config(EXAMPLE)
    assert c.seed == 7
    raw = yaml.safe_load(EXAMPLE.read_text())
    # every top-level field is spelled out in the annotated example
    assert set(raw) == {f.name for f in dataclasses.fields(MissionConfig)}


def test_partial_camera_section_keeps_its_camera_defaults():
    c = config_from_dict({"navcam": {"max_range": 6.0}, "hazcam": {"depth_noise_sigma": 0.0}})
    assert c.navcam.fov_deg == 45.0 and c.navcam.max_range == 6.0
    assert c.hazcam.fov_deg == 120.0 and c.hazcam.depth_noise_sigma == 0.0


@pytest.mark.parametrize("data, field", [
    ({"bogus": 1}, "bogus"),
    ({"terrain": {"noise": {"wavelenght": 3}}}, "terrain.noise.wavelenght"),
    ({"max_speed": -3}, "max_speed"),
    ({"max_speed": "fast"}, "max_speed"),
    ({"mode": "remote"}, "mode"),
    ({"goals": []}, "goals"),
    ({"goals": [[1, 2, 3]]}, "goals[0]"),
    ({"panorama": "yes"}, "panorama"),
    ({"seed": 1.5}, "seed"),
    ({"comm": {"windows_per_sol": 0}}, "comm.windows_per_sol"),
    ({"planner": {"arc_count": 4}}, "planner.arc_count"),
    ({"traversability": {"cell_size": 0}}, "traversability.cell_size"),
    ({"comm": {"sol_length": 100.0}}, "star_tracker.sol_length"),
    ({"start_time_of_day": 1.0}, "start_time_of_day"),
    ({"terrain": 5}, "terrain"),
])
def test_errors_name_the_field(data, field):
    with pytest.raises(ConfigError) as e:
        config_from_dict(data)
    assert e.value.field == field


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    scalar = tmp_path / "scalar.yaml"
    scalar.write_text("42\n")
    with pytest.raises(ConfigError):
        load_config(scalar)
