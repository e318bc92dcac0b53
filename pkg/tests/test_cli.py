import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from marsnav.cli import main
from marsnav.config import load_config
from marsnav.io import read_pgm, read_telemetry

EXAMPLE = str(Path(__file__).resolve().parents[1] / "configs" / "example.yaml")
RUN_FILES = ["config.resolved.yaml", "telemetry.csv", "map.pgm", "map_state.npz", "report.json"]


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out), "-q"])
    return code, out


def test_run_writes_all_outputs(tmp_path):
    code, out = run(tmp_path, "a", "run", "--config", EXAMPLE, "--seed", "42")
    assert code == 0
    for f in RUN_FILES:
        assert (out / f).is_file()
    report = json.loads((out / "report.json").read_text())
    assert report["report"]["outcome"] in ("reached", "timed_out", "emergency_stopped")
    assert report["config"]["seed"] == 42
    assert load_config(out / "config.resolved.yaml").seed == 42
    img, comments = read_pgm(out / "map.pgm")
    assert img.shape == (81, 81) and any("north" in c for c in comments)
    assert len(read_telemetry(out / "telemetry.csv")) > 1


def test_run_is_byte_deterministic(tmp_path):
    _, a = run(tmp_path, "a", "run", "--config", EXAMPLE, "--seed", "42")
    _, b = run(tmp_path, "b", "run", "--config", EXAMPLE, "--seed", "42")
    for f in ("telemetry.csv", "map.pgm", "config.resolved.yaml"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_overrides_apply(tmp_path):
    code, out = run(tmp_path, "a", "run", "--config", EXAMPLE, "--mode", "earth-in-loop",
                    "--budget", "5", "--seed", "1")
    assert code == 0
    cfg = load_config(out / "config.resolved.yaml")
    assert (cfg.mode, cfg.compute_budget, cfg.seed) == ("earth_in_loop", 5.0, 1)


def test_render_reproduces_run_snapshot(tmp_path):
    _, out = run(tmp_path, "a", "run", "--config", EXAMPLE)
    code, r = run(tmp_path, "r", "render", str(out / "map_state.npz"))
    assert code == 0
    assert (r / "map_state.pgm").read_bytes() == (out / "map.pgm").read_bytes()


def test_gen_terrain(tmp_path):
    code, out = run(tmp_path, "t", "gen-terrain", "--config", EXAMPLE, "--resolution", "1.0")
    assert code == 0
    img, comments = read_pgm(out / "terrain.pgm")
    assert img.shape == (121, 121)
    assert img.min() == 0 and img.max() == 255
    assert comments[0].startswith("height range")


def test_gen_terrain_without_config_uses_defaults(tmp_path):
    code, out = run(tmp_path, "t", "gen-terrain", "--resolution", "2", "--seed", "3")
    assert code == 0 and (out / "terrain.pgm").is_file()


def test_bench_ba(tmp_path):
    code, out = run(tmp_path, "b", "bench-ba", "--sizes", "3x10,4x20")
    assert code == 0
    with open(out / "ba_benchmark.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["cameras"], r["landmarks"]) for r in rows] == [("3", "10"), ("4", "20")]
    assert float(rows[0]["final_cost"]) >= 0


def test_exit_codes(tmp_path):
    assert run(tmp_path, "x", "run", "--config", str(tmp_path / "nope.yaml"))[0] == 2
    assert run(tmp_path, "x", "run")[0] == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("max_speed: -1\n")
    assert run(tmp_path, "x", "run", "--config", str(bad))[0] == 3
    assert run(tmp_path, "x", "bench-ba", "--sizes", "3by10")[0] == 3
    assert run(tmp_path, "x", "gen-terrain", "--resolution", "0")[0] == 3
    assert run(tmp_path, "x", "render", str(tmp_path / "none.npz"))[0] == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["gen-terrain", "--out", str(blocker / "sub"), "-q"]) == 4
    with pytest.raises(SystemExit) as e:
        main(["fly"])
    assert e.value.code == 2


def test_invalid_value_message_names_field(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("planner:\n  arc_count: 4\n")
    main(["run", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert "planner.arc_count" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "marsnav", "bench-ba", "--sizes", "2x5",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0
    assert "cams" in res.stdout
