"""Monte Carlo driver: one (density, seed, gap) cell per call, CSV emission."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import metrics
from .channel import observe_paths, report_motion
from .config import RunConfig
from .cvtmap import CvtMap
from .rng import substream, truncated_normal
from .scenario import build_world, ground_truth
from .tpf import CvtFilter, VehicleFilter, init_cvt_filter, init_vehicle_filter, predict_vehicle, run_slot
from .world import VehicleTruth

VEHICLE_COLUMNS = ("run_id", "seed", "density", "slot", "vehicle_id", "true_x", "true_y", "est_x", "est_y", "error_m")
CVT_COLUMNS = ("run_id", "slot", "cvt_id", "est_x", "est_y", "est_z", "nearest_true_vt_error_m", "member_count")
SUMMARY_COLUMNS = ("run_id", "seed", "density", "gap", "slots", "vehicle_mae_m", "vehicle_q80_m",
                   "cvt_mae_m", "mean_vt_count", "degeneracies")
SWEEP_COLUMNS = ("gap", "density", "seeds", "vehicle_mae_m", "mean_vt_count")


@dataclass
class CellResult:
    run_id: str
    seed: int
    density: int
    gap: float
    vehicle_rows: list[tuple] = field(default_factory=list)
    cvt_rows: list[tuple] = field(default_factory=list)
    vt_counts: list[int] = field(default_factory=list)  # paths observed, per vehicle per slot
    degeneracies: int = 0

    def vehicle_errors(self, first_slot: int = 1) -> np.ndarray:
        return np.array([r[9] for r in self.vehicle_rows if r[3] >= first_slot])

    def errors_by_slot(self) -> np.ndarray:
        """Vehicle errors as an array of shape ``(slots, density)``, slots starting at 1."""
        e = self.vehicle_errors()
        return e.reshape(-1, self.density)

    @property
    def mae(self) -> float:
        return metrics.mae(self.vehicle_errors())

    @property
    def mean_vt_count(self) -> float:
        return float(np.mean(self.vt_counts)) if self.vt_counts else 0.0

    def summary_row(self, slots: int) -> tuple:
        e = self.vehicle_errors()
        ce = [r[6] for r in self.cvt_rows]
        return (self.run_id, self.seed, self.density, _gap_str(self.gap), slots, metrics.mae(e),
                metrics.quantile_error(e, 0.8), metrics.mae(ce) if ce else math.nan,
                self.mean_vt_count, self.degeneracies)


def _gap_str(gap: float) -> str:
    return "inf" if math.isinf(gap) else f"{gap:g}"


def run_id(density: int, seed: int, gap: float) -> str:
    return f"d{density}_g{_gap_str(gap)}_s{seed}"


def run_cell(cfg: RunConfig, density: int, seed: int, gap: float | None = None) -> CellResult:
    """Simulate ``cfg.slots`` slots of cooperative localization and mapping."""
    gap = cfg.scenario.building_gap if gap is None else gap
    noise, tcfg = cfg.noise, cfg.tpf
    K, dt = cfg.slots, cfg.slot_duration
    world = build_world(cfg.scenario, density, K, dt, gap)
    true_pos, true_vel = ground_truth(world, cfg.scenario.truth_integration)
    true_vts = world.true_vts()
    M = density

    reported = np.empty_like(true_vel)
    for k in range(K + 1):
        for m in range(M):
            reported[k, m] = report_motion(true_vel[k, m], noise, substream(seed, "motion", k, m))

    vehicles: dict[int, VehicleFilter] = {}
    for m in range(M):
        fix = true_pos[0, m] + truncated_normal(substream(seed, "gps", m, 0), noise.sigma_gps, 2, noise.truncation)
        vehicles[m] = init_vehicle_filter(fix, tcfg.n_vehicle, noise.sigma_gps, noise.truncation,
                                          substream(seed, "gps", m, 1), m)
    cvts: dict[int, CvtFilter] = {}
    cmap = CvtMap(M, cfg.maintenance)
    out = CellResult(run_id(density, seed, gap), seed, density, gap)

    for k in range(1, K + 1):
        for m in range(M):
            predict_vehicle(vehicles[m], reported[k - 1, m], reported[k, m], dt, noise,
                            substream(seed, "predict", k, m))
        obs = []
        for m in range(M):
            truth = VehicleTruth(true_pos[k, m], true_vel[k, m], world.ue_height)
            zs = observe_paths(world, truth, noise, substream(seed, "observe", k, m), m)
            out.vt_counts.append(len(zs))
            obs.extend(zs)
        est3 = {m: np.append(vehicles[m].weights @ vehicles[m].positions, world.ue_height) for m in range(M)}
        report = cmap.maintain(est3, obs, k)
        live = cmap.by_id()
        for cid in list(cvts):
            if cid not in live:
                del cvts[cid]
        zmap = {z.index: z for z in obs}
        for cid in report.spawned:
            c = live[cid]
            sources = [(vehicles[m], zmap[(m, int(p))]) for m, p in enumerate(c.index) if p]
            if not sources:
                continue
            cvts[cid] = init_cvt_filter(sources, tcfg.n_cvt, noise, substream(seed, "cvt_init", k, cid),
                                        world.ue_height, cid)
        res = run_slot(vehicles, cvts, cmap.associations(), zmap, tcfg, noise, seed, k)
        out.degeneracies += res.degeneracies
        for m in range(M):
            est = res.vehicles[m]
            err = float(np.hypot(*(est - true_pos[k, m])))
            out.vehicle_rows.append((out.run_id, seed, density, k, m, true_pos[k, m, 0], true_pos[k, m, 1],
                                     est[0], est[1], err))
        for cid in sorted(res.cvts):
            est = res.cvts[cid]
            err = float(np.min(np.linalg.norm(true_vts - est, axis=1)))
            out.cvt_rows.append((out.run_id, k, cid, est[0], est[1], est[2], err, live[cid].sample_count))
    return out


# --- output -------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.6f}"
    return str(v)


def write_csv(path: Path, columns: Iterable[str], rows: Iterable[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _cell_job(args):
    cfg, density, seed, gap = args
    return run_cell(cfg, density, seed, gap)


def run_cells(cfg: RunConfig, cells: list[tuple[int, int, float]], jobs: int = 1) -> list[CellResult]:
    """Run cells serially or in a process pool; results come back in ``cells`` order."""
    args = [(cfg, d, s, g) for d, s, g in cells]
    if jobs <= 1 or len(args) <= 1:
        return [_cell_job(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_cell_job, args))


def write_results(out_dir: Path, results: list[CellResult], slots: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "vehicles.csv", VEHICLE_COLUMNS, (r for c in results for r in c.vehicle_rows))
    write_csv(out_dir / "cvts.csv", CVT_COLUMNS, (r for c in results for r in c.cvt_rows))
    write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, (c.summary_row(slots) for c in results))


def run_experiment(cfg: RunConfig, out_dir: str | Path | None = None) -> list[CellResult]:
    cells = [(d, s, cfg.scenario.building_gap) for d in cfg.densities for s in cfg.seeds]
    results = run_cells(cfg, cells, cfg.jobs)
    write_results(Path(out_dir or cfg.output), results, cfg.slots)
    return results


def sweep_table(results: list[CellResult]) -> list[tuple]:
    groups: dict[tuple[float, int], list[CellResult]] = {}
    for r in results:
        groups.setdefault((r.gap, r.density), []).append(r)
    rows = []
    for (gap, density), rs in sorted(groups.items()):
        rows.append((_gap_str(gap), density, len(rs), float(np.mean([r.mae for r in rs])),
                     float(np.mean([r.mean_vt_count for r in rs]))))
    return rows


def run_building_sweep(cfg: RunConfig, out_dir: str | Path | None = None) -> list[CellResult]:
    cells = [(d, s, g) for g in cfg.sweep_gaps for d in cfg.sweep_densities for s in cfg.seeds]
    results = run_cells(cfg, cells, cfg.jobs)
    out = Path(out_dir or cfg.output)
    write_results(out, results, cfg.slots)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, sweep_table(results))
    return results
