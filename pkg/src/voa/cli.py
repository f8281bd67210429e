"""Command-line interface: ``voa <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import costmap
from .engine import ASSIST_TYPES, CostQuery, compute_voa, rank_waypoints, snap_to_step
from .experiments import ExperimentConfig, run_experiment
from .geometry import load_path
from .simulator import AecdEstimate, SimConfig, batch_traces, paired_runs
from .traces import COSTING_MODES, TraceFormatError, empirical_aecd, export_traces, load_traces
from .uncertainty import CovarianceModel, estimate_delta_sigma

log = logging.getLogger("voa")


def _emit(records: list[dict], fmt: str, out_dir: str | None, name: str) -> None:
    if fmt == "json":
        text = json.dumps(records[0] if len(records) == 1 else records, indent=2)
    else:
        from io import StringIO
        buf = StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(records[0]))
        writer.writeheader()
        writer.writerows(records)
        text = buf.getvalue().rstrip("\n")
    print(text)
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / f"{name}.{fmt}").write_text(text + "\n", encoding="utf-8")


def _query(args) -> CostQuery:
    return CostQuery(costmap.load(args.map), load_path(args.path), CovarianceModel(args.delta_sigma), args.fill)


def cmd_gen_maps(args) -> None:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(args.count):
        cmap = costmap.generate_random(args.seed + i, args.width, args.height, args.cell_size, args.smoothing)
        target = out / f"map_{i:04d}.json"
        costmap.save(cmap, target)
        records.append({"map_id": i, "seed": args.seed + i, "file": str(target)})
    _emit(records, args.format, None, "maps")


def cmd_voa(args) -> None:
    res = compute_voa(_query(args), args.tau, args.assist, args.epsilon)
    _emit([res.to_dict()], args.format, args.out, "voa")


def cmd_simulate(args) -> None:
    cmap, path = costmap.load(args.map), load_path(args.path)
    l = snap_to_step(path, args.tau)
    config = SimConfig(args.delta_sigma_true, args.seed, args.runs, args.assist, args.fill)
    batch = paired_runs(cmap, path, config, l, args.map_id)
    est = AecdEstimate.from_differences(batch.differences)
    record = {"tau": l / path.step_count, "step": l, "assist": args.assist, **est.to_dict()}
    if args.export_traces:
        unassisted, assisted = batch_traces(batch, path)
        record["manifest"] = str(export_traces(args.export_traces, unassisted, {l: assisted}))
    _emit([record], args.format, args.out, "aecd")


def cmd_compare(args) -> None:
    if not args.config:
        raise ValueError("compare needs --config")
    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    out = args.out or config.out
    if out is None:
        raise ValueError("compare needs an output directory (--out or 'out' in the config)")
    report = run_experiment(config, out)
    print(json.dumps(report.summary, indent=2))


def cmd_rank(args) -> None:
    query = _query(args)
    n = args.candidates
    taus = [k / (n + 1) for k in range(1, n + 1)]
    results, _ = rank_waypoints(query, taus, args.k, args.assist, args.epsilon)
    _emit([r.to_dict() for r in results[:args.k]], args.format, args.out, "rank")


def cmd_ingest(args) -> None:
    cmap, path = costmap.load(args.map), load_path(args.path)
    manifest = Path(args.manifest)
    traces = load_traces(args.traces or manifest.parent, manifest, path)
    steps = [args.step] if args.step is not None else sorted(traces.assisted)
    records = []
    ds_hat = estimate_delta_sigma(traces.unassisted, path) if len(traces.unassisted) >= 2 else None
    for l in steps:
        est = empirical_aecd(traces, cmap, l, args.mode, args.fill)
        record = {"step": l, "tau": l / path.step_count, **est.to_dict()}
        ds = args.delta_sigma if args.delta_sigma is not None else ds_hat
        if ds is not None:
            query = CostQuery(cmap, path, CovarianceModel(ds), args.fill)
            voa = compute_voa(query, l / path.step_count, args.assist, args.epsilon).voa
            record.update(delta_sigma_voa=ds, voa=voa, within_one_std=abs(voa - est.mean) <= est.std)
        records.append(record)
    _emit(records, args.format, args.out, "ingest")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--config", help="JSON config file; its keys provide option defaults")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="voa", description="Value of assistance for navigating agents.")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_args(p, need_tau=True):
        p.add_argument("--map", required=True)
        p.add_argument("--path", required=True)
        if need_tau:
            p.add_argument("--tau", type=float, required=True)
        p.add_argument("--assist", choices=ASSIST_TYPES, default="relocation")
        p.add_argument("--fill", type=float, default=0.0, help="cost charged off the map")

    p = sub.add_parser("gen-maps", parents=[common], help="generate seeded random cost-maps")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--width", type=int, default=100)
    p.add_argument("--height", type=int, default=100)
    p.add_argument("--cell-size", type=float, default=1.0)
    p.add_argument("--smoothing", type=float, default=5.0)
    p.set_defaults(func=cmd_gen_maps)

    p = sub.add_parser("voa", parents=[common], help="value of assistance at one waypoint")
    model_args(p)
    p.add_argument("--delta-sigma", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.set_defaults(func=cmd_voa)

    p = sub.add_parser("simulate", parents=[common], help="paired-run AECD at one waypoint")
    model_args(p)
    p.add_argument("--delta-sigma-true", type=float, default=0.2)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--map-id", type=int, default=0)
    p.add_argument("--export-traces", help="directory to write run traces and a manifest to")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", parents=[common], help="full VOA vs AECD study")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("rank", parents=[common], help="top-k waypoints by VOA")
    model_args(p, need_tau=False)
    p.add_argument("--delta-sigma", type=float, required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--candidates", type=int, default=15)
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("ingest", parents=[common], help="AECD from recorded traces")
    model_args(p, need_tau=False)
    p.add_argument("--manifest", required=True)
    p.add_argument("--traces", help="trace directory (defaults to the manifest's directory)")
    p.add_argument("--step", type=int, help="assistance step to analyse (default: all)")
    p.add_argument("--mode", choices=COSTING_MODES, default="steps")
    p.add_argument("--delta-sigma", type=float, help="VOA variance (default: estimated from traces)")
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.set_defaults(func=cmd_ingest)
    return parser


def _config_argv(argv: list[str]) -> list[str]:
    """Expand ``--config FILE`` into option tokens placed before the user's own options."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or not argv or argv[0] == "compare":
        return argv
    with open(known.config, encoding="utf-8") as fh:
        data = json.load(fh)
    tokens = []
    for key, value in data.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                tokens.append(flag)
        elif value is not None:
            tokens += [flag, str(value)]
    return argv[:1] + tokens + argv[1:]


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _config_argv(argv)
    except (OSError, ValueError) as exc:
        print(f"voa: error: cannot read config: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command != "compare" and args.seed is None:
        args.seed = 0
    try:
        args.func(args)
    except (ValueError, TraceFormatError, FileNotFoundError, OSError) as exc:
        print(f"voa {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
