"""End-to-end studies comparing predicted VOA with simulated AECD.

A study draws seeded random maps, places a straight path on each, picks
candidate intervention waypoints along it and, per assistance type, pairs
the analytic value at each waypoint (for every VOA variance in the grid)
with a paired-run AECD estimate. Everything written to the output
directory is a pure function of the config.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import costmap
from .engine import ASSIST_TYPES, CostQuery, compute_voa
from .geometry import PlannedPath, nearest_natural, save_path
from .simulator import SimConfig, estimate_aecd
from .uncertainty import CovarianceModel

log = logging.getLogger(__name__)

CASE_COLUMNS = ["map_id", "tau", "delta_sigma_voa", "voa", "aecd_mean", "aecd_std", "aecd_ci99", "n_runs",
                "assist", "step"]
TOP_KS = (1, 2, 3)


@dataclass
class ExperimentConfig:
    seed: int = 0
    map_count: int = 20
    map_width: int = 100
    map_height: int = 100
    cell_size: float = 1.0
    smoothing: float = 5.0
    path_min_length: float = 60.0
    path_max_length: float = 80.0
    path_margin: float = 10.0
    waypoints: list | None = None
    candidate_count: int = 15
    candidate_taus: list | None = None
    delta_sigmas: list = field(default_factory=lambda: [0.15, 0.175, 0.2, 0.225, 0.25])
    delta_sigma_true: float = 0.2
    runs_per_waypoint: int = 1000
    assist_types: list = field(default_factory=lambda: ["relocation"])
    fill: float = 0.0
    epsilon: float = 1e-4
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if isinstance(self.assist_types, str):
            self.assist_types = [self.assist_types]
        for name in ("map_count", "map_width", "map_height", "candidate_count", "runs_per_waypoint", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not self.delta_sigmas or any(d < 0 for d in self.delta_sigmas):
            raise ValueError("delta_sigmas must be a non-empty list of non-negative values")
        if self.delta_sigma_true < 0:
            raise ValueError("delta_sigma_true must be non-negative")
        unknown = set(self.assist_types) - set(ASSIST_TYPES)
        if unknown or not self.assist_types:
            raise ValueError(f"assist_types must be drawn from {ASSIST_TYPES}, got {self.assist_types}")
        if not 0 < self.path_min_length <= self.path_max_length:
            raise ValueError("need 0 < path_min_length <= path_max_length")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


def _child_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([int(seed), *key]).generate_state(1)[0])


def study_map(config: ExperimentConfig, map_id: int) -> costmap.CostMap:
    return costmap.generate_random(_child_seed(config.seed, map_id, 0), config.map_width, config.map_height,
                                   config.cell_size, config.smoothing)


def study_path(config: ExperimentConfig, map_id: int) -> PlannedPath:
    """A fixed path from the config, or a seeded random straight path inside the map margin."""
    if config.waypoints is not None:
        return PlannedPath.from_points(config.waypoints)
    rng = np.random.default_rng(_child_seed(config.seed, map_id, 1))
    w = config.map_width * config.cell_size
    h = config.map_height * config.cell_size
    lo, hi_x, hi_y = config.path_margin, w - config.path_margin, h - config.path_margin
    for _ in range(1000):
        length = rng.uniform(config.path_min_length, config.path_max_length)
        angle = rng.uniform(0, 2 * math.pi)
        dx, dy = length * math.cos(angle), length * math.sin(angle)
        x0_lo, x0_hi = max(lo, lo - dx), min(hi_x, hi_x - dx)
        y0_lo, y0_hi = max(lo, lo - dy), min(hi_y, hi_y - dy)
        if x0_lo <= x0_hi and y0_lo <= y0_hi:
            x0, y0 = rng.uniform(x0_lo, x0_hi), rng.uniform(y0_lo, y0_hi)
            return PlannedPath.straight((x0, y0), (x0 + dx, y0 + dy))
    raise ValueError("no straight path of the requested length fits inside the map margin")


def candidate_steps(config: ExperimentConfig, path: PlannedPath) -> list[int]:
    """Distinct intervention steps in ``1..m-1`` for the candidate waypoints."""
    m = path.step_count
    taus = config.candidate_taus
    if taus is None:
        n = config.candidate_count
        taus = [k / (n + 1) for k in range(1, n + 1)]
    steps = sorted({min(max(nearest_natural(t * m), 1), m - 1) for t in taus})
    if m < 2:
        raise ValueError("path too short to intervene on")
    return steps


def _run_map(config: ExperimentConfig, map_id: int) -> tuple[list[dict], costmap.CostMap, PlannedPath]:
    cmap = study_map(config, map_id)
    path = study_path(config, map_id)
    m = path.step_count
    rows = []
    queries = {ds: CostQuery(cmap, path, CovarianceModel(ds), config.fill) for ds in config.delta_sigmas}
    for assist in config.assist_types:
        sim = SimConfig(config.delta_sigma_true, config.seed, config.runs_per_waypoint, assist, config.fill)
        for l in candidate_steps(config, path):
            # localization and relocation runs at the same step must not share streams
            aecd = estimate_aecd(cmap, path, sim, l, map_id * len(ASSIST_TYPES) + ASSIST_TYPES.index(assist))
            for ds in config.delta_sigmas:
                res = compute_voa(queries[ds], l / m, assist, config.epsilon)
                rows.append({
                    "map_id": map_id, "tau": l / m, "delta_sigma_voa": ds, "voa": res.voa,
                    "aecd_mean": aecd.mean, "aecd_std": aecd.std, "aecd_ci99": aecd.ci99_halfwidth,
                    "n_runs": aecd.n, "assist": assist, "step": l,
                })
    log.info("map %d done (%d cases)", map_id, len(rows))
    return rows, cmap, path


def _run_map_star(args):
    return _run_map(*args)


@dataclass
class ComparisonReport:
    rows: list[dict]
    summary: dict


def within_one_std(row: dict) -> bool:
    return abs(row["voa"] - row["aecd_mean"]) <= row["aecd_std"]


def _groups(rows: list[dict]) -> dict[tuple, list[dict]]:
    out: dict[tuple, list[dict]] = {}
    for r in rows:
        out.setdefault((r["assist"], r["delta_sigma_voa"]), []).append(r)
    return out


def top_k_analysis(rows, ks=TOP_KS) -> dict[tuple, dict[int, float]]:
    """Per (assist, VOA variance): fraction of maps whose best-AECD waypoint is in the top-k VOA set.

    Ties rank the earlier waypoint first on both sides.
    """
    if isinstance(rows, ComparisonReport):
        rows = rows.rows
    table = {}
    for key, group in _groups(rows).items():
        by_map: dict[int, list[dict]] = {}
        for r in group:
            by_map.setdefault(r["map_id"], []).append(r)
        hits = {k: 0 for k in ks}
        for cases in by_map.values():
            best = min(cases, key=lambda r: (-r["aecd_mean"], r["tau"]))
            ranked = sorted(cases, key=lambda r: (-r["voa"], r["tau"]))
            for k in ks:
                if best["tau"] in {r["tau"] for r in ranked[:k]}:
                    hits[k] += 1
        table[key] = {k: hits[k] / len(by_map) for k in ks}
    return table


def summarize(rows: list[dict]) -> dict:
    """Aggregate statistics; recomputable from the per-case rows alone."""
    topk = top_k_analysis(rows)
    groups = []
    for (assist, ds), group in sorted(_groups(rows).items()):
        groups.append({
            "assist": assist,
            "delta_sigma_voa": ds,
            "cases": len(group),
            "within_one_std": sum(within_one_std(r) for r in group),
            "within_one_std_fraction": sum(within_one_std(r) for r in group) / len(group),
            "top_k_hit_rate": {str(k): v for k, v in topk[(assist, ds)].items()},
        })
    return {"groups": groups, "cases": len(rows)}


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> ComparisonReport:
    """Run a full study; when an output directory is given, write every artifact there."""
    ids = list(range(config.map_count))
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run_map_star, [(config, i) for i in ids]))
    else:
        results = [_run_map(config, i) for i in ids]
    rows = [r for map_rows, _, _ in results for r in map_rows]
    report = ComparisonReport(rows, summarize(rows))
    out_dir = out_dir if out_dir is not None else config.out
    if out_dir is not None:
        write_report(report, config, results, Path(out_dir))
    return report


def write_cases_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CASE_COLUMNS)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def read_cases_csv(path: str | Path) -> list[dict]:
    ints = {"map_id", "n_runs", "step"}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CASE_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [{k: (v if k == "assist" else int(v) if k in ints else float(v)) for k, v in row.items()}
                for row in reader]


def write_curves_csv(rows: list[dict], path: Path) -> None:
    """Wide table per (map, assist, tau): AECD band and one VOA column per variance."""
    dss = sorted({r["delta_sigma_voa"] for r in rows})
    table: dict[tuple, dict] = {}
    for r in rows:
        key = (r["map_id"], r["assist"], r["tau"])
        entry = table.setdefault(key, {
            "map_id": r["map_id"], "assist": r["assist"], "tau": r["tau"], "aecd_mean": r["aecd_mean"],
            "aecd_ci_low": r["aecd_mean"] - r["aecd_ci99"], "aecd_ci_high": r["aecd_mean"] + r["aecd_ci99"],
            "aecd_std": r["aecd_std"],
        })
        entry[f"voa_ds_{r['delta_sigma_voa']:g}"] = r["voa"]
    columns = ["map_id", "assist", "tau", "aecd_mean", "aecd_ci_low", "aecd_ci_high", "aecd_std"] + \
        [f"voa_ds_{d:g}" for d in dss]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for key in sorted(table):
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in table[key].items()})


def write_report(report: ComparisonReport, config: ExperimentConfig, results, out: Path) -> None:
    (out / "maps").mkdir(parents=True, exist_ok=True)
    (out / "paths").mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
    for map_id, (_, cmap, path) in enumerate(results):
        costmap.save(cmap, out / "maps" / f"map_{map_id:04d}.json")
        save_path(path, out / "paths" / f"path_{map_id:04d}.json")
    write_cases_csv(report.rows, out / "cases.csv")
    write_curves_csv(report.rows, out / "curves.csv")
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(report.summary, fh, indent=2, sort_keys=True)
