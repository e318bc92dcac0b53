"""``marsnav`` command line: run missions, render maps, dump terrain, benchmark BA.

Exit status: 0 on success (an emergency-stopped mission is a valid result),
2 when the config file is missing or the arguments are bad, 3 when a config
value is invalid (the message names the field), 4 on other I/O failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .config import config_to_dict, dump_config, load_config, MissionConfig
from .errors import ConfigError
from .io import write_json, write_pgm, write_telemetry

log = logging.getLogger("marsnav")

EXIT_OK = 0
EXIT_MISSING = 2
EXIT_INVALID = 3
EXIT_IO = 4


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML mission config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", metavar="DIR", default="marsnav_out", help="output directory")
    common.add_argument("--mode", choices=["onboard", "earth-in-loop"], help="override the mode")
    common.add_argument("--budget", type=float, metavar="SECONDS",
                        help="override the localization compute budget")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="marsnav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one mission")
    r = sub.add_parser("render", parents=[common], help="map state (.npz) to PGM")
    r.add_argument("state", help="map state file written by 'run'")
    g = sub.add_parser("gen-terrain", parents=[common], help="write the heightfield as PGM")
    g.add_argument("--resolution", type=float, default=0.25, help="metres per pixel")
    b = sub.add_parser("bench-ba", parents=[common], help="bundle adjustment benchmark table")
    b.add_argument("--sizes", default="5x30,10x100,20x200",
                   help="comma-separated CAMERASxLANDMARKS list")
    return p


def _resolve_config(args, required):
    if args.config is None:
        if required:
            raise FileNotFoundError("--config is required")
        cfg = MissionConfig()
    else:
        cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.mode is not None:
        changes["mode"] = args.mode.replace("-", "_")
    if args.budget is not None:
        changes["compute_budget"] = args.budget
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _cmd_run(args, out: Path):
    from .mission import render_map_snapshot, run_mission

    cfg = _resolve_config(args, required=True)
    dump_config(cfg, out / "config.resolved.yaml")
    log.info("running mission seed=%d mode=%s budget=%gs", cfg.seed, cfg.mode, cfg.compute_budget)
    result = run_mission(cfg)
    write_telemetry(out / "telemetry.csv", result.telemetry)
    write_pgm(out / "map.pgm", render_map_snapshot(result.map),
              "traversability: row 0 = north, col 0 = west; 0 impassable, 128 unknown")
    result.map.save(out / "map_state.npz")
    write_json(out / "report.json", {"report": result.report.as_dict(),
                                     "config": config_to_dict(cfg)})
    if not args.quiet:
        print(result.report.summary())


def _cmd_render(args, out: Path):
    from .mission import render_map_snapshot
    from .traversability import TraversabilityMap

    src = Path(args.state)
    if not src.is_file():
        raise FileNotFoundError(str(src))
    tmap = TraversabilityMap.load(src)
    target = out / (src.stem + ".pgm")
    write_pgm(target, render_map_snapshot(tmap),
              "traversability: row 0 = north, col 0 = west; 0 impassable, 128 unknown")
    if not args.quiet:
        print(f"wrote {target}")


def _cmd_gen_terrain(args, out: Path):
    from .mission import _mission_terrain

    cfg = _resolve_config(args, required=False)
    if not args.resolution > 0:
        raise ConfigError("resolution", "must be > 0")
    dump_config(cfg, out / "config.resolved.yaml")
    terrain = _mission_terrain(cfg)
    ext = terrain.extent
    n = int(np.floor(2 * ext / args.resolution)) + 1
    axis = -ext + args.resolution * np.arange(n)
    axis = axis[axis <= ext]
    # row 0 = north (largest y), column 0 = west
    gx, gy = np.meshgrid(axis, axis[::-1])
    h = terrain.heights(gx.ravel(), gy.ravel()).reshape(gx.shape)
    lo, hi = float(h.min()), float(h.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = np.rint((h - lo) * scale).astype(np.uint8)
    write_pgm(out / "terrain.pgm", img,
              f"height range {lo!r} {hi!r} m; {args.resolution!r} m/px; row 0 = north")
    if not args.quiet:
        print(f"wrote {out / 'terrain.pgm'} ({img.shape[1]}x{img.shape[0]}, "
              f"heights {lo:.3f}..{hi:.3f} m)")


def _cmd_bench_ba(args, out: Path):
    from .reconstruction import ba_benchmark

    try:
        sizes = [tuple(int(v) for v in s.lower().split("x")) for s in args.sizes.split(",")]
    except ValueError:
        raise ConfigError("sizes", f"expected CAMERASxLANDMARKS items, got {args.sizes!r}") from None
    seed = 0 if args.seed is None else args.seed
    rows = ba_benchmark(sizes, seed=seed)
    cols = ["cameras", "landmarks", "observations", "iterations", "wall_time", "final_cost",
            "residual_evals_per_iteration"]
    with open(out / "ba_benchmark.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] for c in cols])
    write_json(out / "ba_benchmark.params.json", {"sizes": sizes, "seed": seed})
    if not args.quiet:
        for r in rows:
            print(f"{r['cameras']:3d} cams {r['landmarks']:4d} pts {r['observations']:5d} obs  "
                  f"{r['iterations']:3d} it  {r['wall_time']:.3f} s  cost {r['final_cost']:.4g}")


COMMANDS = {"run": _cmd_run, "render": _cmd_render, "gen-terrain": _cmd_gen_terrain,
            "bench-ba": _cmd_bench_ba}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else
                                                logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        if args.config is not None and not Path(args.config).is_file():
            raise FileNotFoundError(args.config)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out)
    except FileNotFoundError as e:
        print(f"marsnav: file not found: {e.args[0] if e.args else e}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as e:
        print(f"marsnav: invalid config: {e.field}: {e.message}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"marsnav: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
