"""File formats: binary PGM rasters, telemetry CSV, mission report JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def write_pgm(path, image: np.ndarray, comment: str = None):
    """Write a uint8 (rows, cols) array as binary P5."""
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("PGM image must be a 2-D uint8 array")
    h, w = img.shape
    header = b"P5\n"
    if comment:
        header += b"".join(b"# " + line.encode("ascii") + b"\n" for line in comment.splitlines())
    header += f"{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(img).tobytes())


def read_pgm(path):
    """Read a binary P5 file back into a uint8 array; returns (image, comments)."""
    data = Path(path).read_bytes()
    tokens = []
    comments = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            end = data.index(b"\n", pos)
            comments.append(data[pos + 1:end].decode("ascii").strip())
            pos = end + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    if tokens[0] != "P5" or tokens[3] != "255":
        raise ValueError("not an 8-bit binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    pos += 1  # single whitespace after maxval
    img = np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w)
    return img.copy(), comments


TELEMETRY_FIELDS = [
    ("time", "s"), ("true_x", "m"), ("true_y", "m"), ("true_z", "m"),
    ("true_heading", "rad"), ("true_roll", "rad"), ("true_pitch", "rad"),
    ("est_x", "m"), ("est_y", "m"), ("est_heading", "rad"),
    ("position_error", "m"), ("curvature", "1/m"), ("hazard", "-"), ("hazard_reason", "-"),
    ("coverage", "fraction"), ("phase", "-"),
]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def write_telemetry(path, records):
    """CSV with a ``# name[unit]`` header line then one row per record."""
    with open(path, "w", newline="") as fh:
        fh.write("# " + ",".join(f"{n}[{u}]" for n, u in TELEMETRY_FIELDS) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for r in records:
            w.writerow([_fmt(v) for v in r.as_row()])


def read_telemetry(path):
    """Rows of the telemetry CSV as dicts of strings keyed by field name."""
    names = [n for n, _ in TELEMETRY_FIELDS]
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return [dict(zip(names, row)) for row in csv.reader(lines)]


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")
