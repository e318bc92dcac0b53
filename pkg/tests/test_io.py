import math

import numpy as np
import pytest

from marsnav.io import TELEMETRY_FIELDS, read_pgm, read_telemetry, write_pgm, write_telemetry
from marsnav.localization import Pose
from marsnav.mission import TelemetryRecord


def test_pgm_round_trip(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    write_pgm(tmp_path / "a.pgm", img, "first line\nsecond line")
    back, comments = read_pgm(tmp_path / "a.pgm")
    np.testing.assert_array_equal(back, img)
    assert comments == ["first line", "second line"]
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n") and raw.endswith(img.tobytes())
    assert b"4 3\n255\n" in raw


def test_pgm_rejects_non_uint8(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "a.pgm", np.zeros((2, 2)))
    (tmp_path / "b.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "b.pgm")


def test_telemetry_header_and_rows(tmp_path):
    rec = TelemetryRecord(1.5, Pose(1.0, 2.0, 0.1, 0.01, 0.02, 0.3), Pose(1.1, 2.0, 0.1), 0.1,
                          None, "none", None, 0.25, "drive")
    write_telemetry(tmp_path / "t.csv", [rec, rec])
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("# time[s],true_x[m]")
    assert len(lines[0].split(",")) == len(TELEMETRY_FIELDS)
    rows = read_telemetry(tmp_path / "t.csv")
    assert len(rows) == 2
    assert float(rows[0]["est_x"]) == 1.1
    assert math.isnan(float(rows[0]["curvature"]))
    assert rows[0]["hazard_reason"] == "" and rows[0]["phase"] == "drive"
    # repr formatting round-trips floats exactly
    assert float(rows[0]["true_roll"]) == 0.01
