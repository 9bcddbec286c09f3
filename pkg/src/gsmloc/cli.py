"""Command-line surface: synth, build, locate, evaluate, sweep.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors (bad files,
missing ground truth, unknown towers and the like).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from typing import Sequence

from . import bench, gp
from .estimators import EstimatorParams
from .geo import (
    GeoPoint,
    project,
    read_tower_locations,
    read_trace,
    unproject,
    write_tower_locations,
    write_trace,
)
from .radiomap import build_radio_map, load_radio_map, save_radio_map
from .synth import generate_trace, make_preset

USAGE_ERROR = 1
DATA_ERROR = 2

_DEFAULT_K = {"probabilistic": 2, "hybrid": 1, "deterministic": 8, "gp": 1, "cellid": 1}


class _Parser(argparse.ArgumentParser):
    """argparse's default usage-error exit code is 2; this CLI reserves 2
    for data errors, so remap usage errors to 1."""

    def error(self, message: str) -> None:  # noqa: D102
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="gsmloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic training/test traces")
    p.add_argument("--preset", required=True, choices=("rural", "urban"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("build", help="build a radio map (or GP grid) from a trace")
    p.add_argument("--traces", required=True, help="training trace CSV")
    p.add_argument("--grid-length", type=float, default=70.0)
    p.add_argument("--out", required=True, help="output JSON path")
    p.add_argument("--towers", help="tower_id,lat,lon CSV to embed (cell-ID needs it)")
    p.add_argument("--strip-points", action="store_true", help="drop raw fingerprint points")
    p.add_argument("--kind", choices=("map", "gp"), default="map")
    p.add_argument("--spacing", type=float, default=50.0, help="GP lattice spacing (kind=gp)")

    for name, needs_truth in (("locate", False), ("evaluate", True)):
        p = sub.add_parser(
            name,
            help=(
                "estimate positions for a trace"
                if not needs_truth
                else "evaluate a technique against ground truth"
            ),
        )
        p.add_argument("--map", required=True, dest="map_path")
        p.add_argument("--scans", required=True, help="trace CSV")
        p.add_argument("--technique", required=True, choices=bench.TECHNIQUES)
        p.add_argument("--ns", type=int, default=4, help="window length (scans)")
        p.add_argument("--k", type=int, default=None, help="top-K / KNN size")
        if needs_truth:
            p.add_argument("--report", help="write the report CSV here")
            p.add_argument("--cdf", help="write the error CDF CSV here")
        else:
            p.add_argument("--out", help="write estimates CSV here (default stdout)")

    p = sub.add_parser("sweep", help="run a parameter sweep on a synthetic preset")
    p.add_argument("--param", required=True, choices=("grid", "ns", "k", "towers", "density"))
    p.add_argument("--values", required=True, nargs="+")
    p.add_argument("--preset", default="rural", choices=("rural", "urban"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--technique",
        default="probabilistic",
        choices=("probabilistic", "hybrid", "deterministic", "cellid"),
    )
    p.add_argument("--grid-length", type=float, default=70.0)
    p.add_argument("--ns", type=int, default=4)
    p.add_argument("--k", type=int, default=None)
    return parser


def _params(args: argparse.Namespace) -> EstimatorParams:
    k = args.k if args.k is not None else _DEFAULT_K[args.technique]
    return EstimatorParams(n_samples=args.ns, k=k)


def _cmd_synth(args: argparse.Namespace) -> int:
    world, routes = make_preset(args.preset, args.seed)
    os.makedirs(args.out, exist_ok=True)
    write_trace(generate_trace(world, routes["train"]), os.path.join(args.out, "train.csv"))
    write_trace(generate_trace(world, routes["test"]), os.path.join(args.out, "test.csv"))
    write_tower_locations(world.tower_locations_geo(), os.path.join(args.out, "towers.csv"))
    print(f"wrote train.csv, test.csv, towers.csv to {args.out}")
    return 0


def _cmd_build(args: argparse.Namespace) -> int:
    scans = read_trace(args.traces)
    for scan in scans:
        if scan.truth is None:
            raise ValueError(f"training scan at t={scan.timestamp} has no ground truth")
    if args.kind == "map":
        towers = read_tower_locations(args.towers) if args.towers else None
        radio_map = build_radio_map(
            scans, args.grid_length, tower_locations=towers, strip_points=args.strip_points
        )
        save_radio_map(radio_map, args.out)
        print(f"built radio map: {radio_map.n_cells} cells, {len(radio_map.tower_ids)} towers")
    else:
        origin = GeoPoint(
            sum(s.truth.lat for s in scans) / len(scans),
            sum(s.truth.lon for s in scans) / len(scans),
        )
        models = gp.fit_tower_models(scans, origin)
        pts = [project(origin, s.truth) for s in scans]
        bounds = (
            min(p.x for p in pts),
            min(p.y for p in pts),
            max(p.x for p in pts),
            max(p.y for p in pts),
        )
        grid = gp.gp_build_grid(models, bounds, args.spacing, origin)
        gp.save_grid(grid, args.out)
        print(f"built GP grid: {grid.n_points} points, {len(grid.towers)} towers")
    return 0


def _load_model(args: argparse.Namespace):
    if args.technique == "gp":
        return gp.load_grid(args.map_path)
    return load_radio_map(args.map_path)


def _cmd_locate(args: argparse.Namespace) -> int:
    model = _load_model(args)
    scans = read_trace(args.scans)
    if not scans:
        raise ValueError(f"{args.scans}: no scans")
    params = _params(args)
    estimate = bench._technique_fn(model, args.technique, params)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(("timestamp", "lat", "lon"))
        for i in range(len(scans)):
            window = scans[max(0, i + 1 - params.n_samples) : i + 1]
            est = estimate(window)
            geo = unproject(model.origin, est.location)
            writer.writerow([repr(scans[i].timestamp), repr(geo.lat), repr(geo.lon)])
    finally:
        if args.out:
            out.close()
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    model = _load_model(args)
    scans = read_trace(args.scans)
    report = bench.evaluate(model, scans, args.technique, _params(args))
    writer = csv.writer(sys.stdout)
    writer.writerow(bench.REPORT_HEADER)
    writer.writerow(
        [
            report.technique,
            repr(report.grid_m),
            report.n_samples,
            report.k,
            repr(report.median_error_m),
            repr(report.p95_error_m),
            repr(report.mean_time_per_estimate_ms),
        ]
    )
    if args.report:
        bench.write_report_csv([report], args.report)
    if args.cdf:
        bench.write_cdf_csv(report, args.cdf)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    world, routes = make_preset(args.preset, args.seed)
    train = generate_trace(world, routes["train"])
    test = generate_trace(world, routes["test"])
    k = args.k if args.k is not None else _DEFAULT_K[args.technique]
    params = EstimatorParams(n_samples=args.ns, k=k)

    if args.param in ("grid", "towers", "density"):
        values = [float(v) for v in args.values]
    else:
        values = [int(v) for v in args.values]

    if args.param == "grid":
        reports = bench.sweep_grid_length(
            train, test, values, params=params, technique=args.technique
        )
    elif args.param == "ns":
        radio_map = build_radio_map(train, args.grid_length)
        reports = bench.sweep_ns(radio_map, test, values, params=params, technique=args.technique)
    elif args.param == "k":
        radio_map = build_radio_map(train, args.grid_length)
        reports = bench.sweep_k(radio_map, test, values, params=params, technique=args.technique)
    elif args.param == "towers":
        radio_map = build_radio_map(
            train, args.grid_length, tower_locations=world.tower_locations_geo()
        )
        reports = bench.sweep_tower_drop(
            radio_map, test, values, params=params, technique=args.technique, base_seed=args.seed
        )
    else:
        reports = bench.sweep_density(
            train,
            test,
            values,
            grid_length=args.grid_length,
            params=params,
            technique=args.technique,
            base_seed=args.seed,
        )

    os.makedirs(args.out, exist_ok=True)
    bench.write_report_csv(reports, os.path.join(args.out, "report.csv"))
    for i, report in enumerate(reports):
        bench.write_cdf_csv(report, os.path.join(args.out, f"cdf_{i:03d}.csv"))
    print(f"wrote report.csv and {len(reports)} CDF files to {args.out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "build": _cmd_build,
    "locate": _cmd_locate,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"gsmloc {args.command}: error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
