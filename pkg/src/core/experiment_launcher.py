#!/usr/bin/env python3
"""
Experiment Launcher
===================

Runs the replications of one experiment in separate processes. Each
replication draws from its own seed and writes into its own directory;
the parent process merges the per-replication files once all of them
have finished.

Layout of an output directory:
    rep-<seed>/...            per-replication tables and summary
    rep-<seed>/volumes.csv    per-(t, s) volumes before and after, with welfare or cost
    summary.json              merged summary (means over replications)
    table.csv                 per-OD before/after volumes at the chosen hour
    leakage.csv               leakage experiments only
    dp_check.json             leakage experiments only
"""

import os
import sys
import logging
import multiprocessing
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

# Add src directory to Python path for imports to work
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..'))

from config.settings import get_settings
from config.experiment_config import (
    ExperimentConfig, ConfigError, TWO_WAY_EXACT, TWO_WAY_EFFICIENT, ONE_WAY,
    LEAKAGE_TWO_WAY, SWEEP_PARAMETERS,
)
from config.scenario_builder import (
    build_scenario, two_way_leakage_instance, one_way_leakage_instance,
)
from core.model import DomainError, InfeasibleInstanceError, Passenger, Scenario, truthful_bids
from core.auction import privacy_guarantee, run_exact, run_two_way, sensitivity_delta_over
from core.pricing import aggregate_response, fixed_price_opt, price_sensitivity, run_one_way
from core.privacy import (
    AdjacentPair, ExactSelectionMechanism, IntervalPartition, OneStepPriceMechanism,
    dp_ratio_check, min_entropy_one_way_curve, min_entropy_two_way,
)
from utils.result_writer import (
    TABLE_COLUMNS, TRAJECTORY_COLUMNS, TWO_WAY_COLUMNS, VOLUME_COLUMNS, ensure_dir, write_csv, write_json,
)
from utils.scenario_io import load_bids, load_scenario
from utils.traffic_data import TrafficDataError, load_traffic_csv, synthetic_table

logger = logging.getLogger(__name__)

LEAKAGE_COLUMNS = ["epsilon", "T", "leakage_bits", "stderr_bits", "instance_id"]


def configure_logging(tag: Optional[str] = None, level: Optional[str] = None):
    """Root logging in the shared format; `tag` replaces the thread name"""
    level = level or get_settings().log_level
    label = tag or '%(threadName)s'
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format=f'%(asctime)s - %(name)s - [{label}] - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        force=True,
    )


@dataclass
class ReplicationResult:
    """Files and summary of one seeded replication"""
    seed: int
    out_dir: str
    files: Dict[str, str] = field(default_factory=dict)
    summary: Dict = field(default_factory=dict)
    table: List[Dict] = field(default_factory=list)
    leakage: List[Dict] = field(default_factory=list)
    error: Optional[Exception] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RunMetrics:
    """Merged result of every replication of one experiment"""
    mechanism: str
    out_dir: str
    replications: List[ReplicationResult]
    summary: Dict
    files: Dict[str, str] = field(default_factory=dict)
    partial: bool = False


def prepare_scenario(cfg: ExperimentConfig) -> Scenario:
    """Scenario file, traffic file, or a synthetic traffic table, in that order"""
    if cfg.scenario_path:
        sc = load_scenario(cfg.scenario_path)
        return sc.truncated(cfg.horizon) if cfg.horizon is not None else sc
    table = load_traffic_csv(cfg.traffic_path) if cfg.traffic_path else synthetic_table(cfg.population.seed)
    return build_scenario(table, cfg.population, cfg.fraction, cfg.penalty, horizon=cfg.horizon)


def _table_hour(cfg: ExperimentConfig, sc: Scenario) -> Optional[int]:
    if sc.T == 0:
        return None
    if cfg.hour >= sc.T:
        logger.warning(f"Hour {cfg.hour} is past the horizon; using {sc.T - 1}")
    return min(cfg.hour, sc.T - 1)


def _before(sc: Scenario, s: int, t: int) -> float:
    return float(sc.baseline[s, t] if sc.baseline is not None else sc.demand[s, t])


def _volume_rows(sc: Scenario, offload: np.ndarray, per_od: np.ndarray) -> List[Dict]:
    """Volumes before and after offloading for every (t, s), with that OD's welfare or social cost"""
    rows = []
    for t in range(sc.T):
        for s in range(sc.S):
            before = _before(sc, s, t)
            rows.append({
                "t": t, "s": s,
                "before": before,
                "offload": float(offload[s, t]),
                "after": before - min(float(offload[s, t]), before),
                "welfare_or_cost": float(per_od[s, t]),
            })
    return rows


def _table_rows(sc: Scenario, hour: Optional[int], offload: np.ndarray, payments: Sequence[float]) -> List[Dict]:
    if hour is None:
        return []
    rows = []
    for s in range(sc.S):
        before = _before(sc, s, hour)
        moved = min(float(offload[s, hour]), before)
        rows.append({
            "od": s,
            "label": sc.labels[s] if s < len(sc.labels) else str(s),
            "hour": hour,
            "before": before,
            "after": before - moved,
            "improvement_pct": 100.0 * moved / before if before > 0 else 0.0,
            "average_payment": float(payments[s]),
        })
    return rows


def _two_way_replication(cfg: ExperimentConfig, seed: int, rep_dir: str) -> ReplicationResult:
    sc = prepare_scenario(cfg)
    B = load_bids(cfg.bids_path, sc) if cfg.bids_path else truthful_bids(sc)
    rng = np.random.default_rng(seed)
    if cfg.mechanism == TWO_WAY_EXACT:
        outcome = run_exact(B, sc, cfg.auction, rng)
    else:
        outcome = run_two_way(B, sc, cfg.auction, rng)

    rows = [
        {
            "t": int(t), "s": int(s), "i": int(i),
            "selected": int(outcome.selection.x[i, s, t]),
            "q": float(B.q[i, s, t]),
            "payment": float(outcome.payments[i, s, t]),
            "welfare_term": float(B.q[i, s, t] - B.claimed[i, s, t]),
        }
        for i, s, t in sorted(zip(*np.nonzero(B.mask)), key=lambda k: (k[2], k[1], k[0]))
    ]
    outcome_path = write_csv(rows, os.path.join(rep_dir, "outcome.csv"), TWO_WAY_COLUMNS)
    volumes_path = write_csv(_volume_rows(sc, outcome.offload, outcome.welfare_by_od),
                             os.path.join(rep_dir, "volumes.csv"), VOLUME_COLUMNS)

    summary = outcome.summary()
    summary.update({"seed": seed, "S": sc.S, "T": sc.T, "N": sc.N, "epsilon": cfg.auction.epsilon})
    if cfg.mechanism == TWO_WAY_EFFICIENT:
        eps_total, delta_total = privacy_guarantee(cfg.auction, outcome.sensitivity, sc.S)
        summary.update({"delta": cfg.auction.delta, "privacy_epsilon": eps_total, "privacy_delta": delta_total})

    hour = _table_hour(cfg, sc)
    payments = []
    if hour is not None:
        for s in range(sc.S):
            paid = outcome.payments[:, s, hour][outcome.selection.x[:, s, hour] == 1]
            payments.append(float(paid.mean()) if paid.size else 0.0)
    table = _table_rows(sc, hour, outcome.offload, payments)
    summary["offload_improvement_pct"] = float(np.mean([r["improvement_pct"] for r in table])) if table else 0.0
    summary_path = write_json(summary, os.path.join(rep_dir, "summary.json"))
    files = {"outcome": outcome_path, "volumes": volumes_path, "summary": summary_path}
    return ReplicationResult(seed, rep_dir, files, summary, table)


def _one_way_replication(cfg: ExperimentConfig, seed: int, rep_dir: str) -> ReplicationResult:
    sc = prepare_scenario(cfg)
    fixed = fixed_price_opt(sc, cfg.pricing.p_cap, cfg.pricing.grid_step)
    result = run_one_way(sc, cfg.pricing, np.random.default_rng(seed), fixed)

    cumulative = result.report.cumulative
    rows = [
        {
            "t": t, "s": s,
            "price_published": float(result.published[s, t]),
            "price_unclipped": float(result.unclipped[s, t]),
            "total_offload": float(result.offload[s, t]),
            "deficit": float(result.deficit[s, t]),
            "cost": float(result.cost[s, t]),
            "cumulative_regret": float(cumulative[s, t]),
        }
        for t in range(sc.T) for s in range(sc.S)
    ]
    trajectory_path = write_csv(rows, os.path.join(rep_dir, "trajectory.csv"), TRAJECTORY_COLUMNS)
    volumes_path = write_csv(_volume_rows(sc, result.offload, result.cost),
                             os.path.join(rep_dir, "volumes.csv"), VOLUME_COLUMNS)

    summary = result.summary()
    summary.update({
        "seed": seed, "S": sc.S, "T": sc.T, "N": sc.N,
        "average_regret": float(result.report.regret / sc.T) if sc.T else 0.0,
        "dp": cfg.pricing.dp,
    })

    hour = _table_hour(cfg, sc)
    payments = []
    if hour is not None:
        record = aggregate_response(sc, result.published[:, hour], hour)
        paid = record.prices[record.od] * record.offload
        for s in range(sc.S):
            mine = (record.od == s) & record.participating
            payments.append(float(paid[mine].mean()) if np.any(mine) else 0.0)
    table = _table_rows(sc, hour, result.offload, payments)
    summary["offload_improvement_pct"] = float(np.mean([r["improvement_pct"] for r in table])) if table else 0.0
    summary_path = write_json(summary, os.path.join(rep_dir, "summary.json"))
    files = {"trajectory": trajectory_path, "volumes": volumes_path, "summary": summary_path}
    return ReplicationResult(seed, rep_dir, files, summary, table)


def _two_way_dp_check(cfg: ExperimentConfig) -> Dict:
    sc, B, levels = two_way_leakage_instance()
    neighbour = B.with_claimed(0, 0, float(levels[-1]))
    delta = sensitivity_delta_over([B, neighbour], sc, 0)
    mechanism = ExactSelectionMechanism(sc, 0, cfg.auction, delta)
    report = dp_ratio_check(mechanism, AdjacentPair(B, neighbour, 0))
    return {"bound": cfg.auction.epsilon, **report.to_dict()}


def _one_way_dp_check(cfg: ExperimentConfig, sc: Scenario, space) -> Dict:
    first = sc
    p0 = sc.population[0]
    swapped = [Passenger(p0.id, {s: space[0][-1] for s in p0.costs}, p0.capacity, p0.local_od)] + list(sc.population[1:])
    second = sc.replace_population(swapped)
    eta = float(cfg.pricing.eta.values(1)[0])
    delta_p = max(price_sensitivity(x, eta, cfg.pricing.delta_p_min, cfg.pricing.mode, cfg.pricing.p_cap)
                  for x in (first, second))
    mechanism = OneStepPriceMechanism(cfg.pricing.p_init, eta, delta_p, cfg.pricing.epsilon,
                                      mode=cfg.pricing.mode)
    report = dp_ratio_check(mechanism, AdjacentPair(first, second, 0), IntervalPartition(delta_p / 10.0))
    return {"bound": mechanism.bound, "epsilon": cfg.pricing.epsilon, "delta_p": delta_p, **report.to_dict()}


def _leakage_replication(cfg: ExperimentConfig, seed: int, rep_dir: str) -> ReplicationResult:
    if cfg.mechanism == LEAKAGE_TWO_WAY:
        sc, B, levels = two_way_leakage_instance()
        report = min_entropy_two_way(sc, B, levels, cfg.auction)
        rows = [{"epsilon": cfg.auction.epsilon, "T": 1, "leakage_bits": report.leakage,
                 "stderr_bits": report.stderr, "instance_id": "two-way-2x1"}]
        check = _two_way_dp_check(cfg)
    else:
        horizon = cfg.horizon if cfg.horizon is not None else 24
        sc, space = one_way_leakage_instance(horizon)
        horizons = list(range(1, horizon + 1)) or [0]
        reports = min_entropy_one_way_curve(sc, space, cfg.pricing, horizons, cfg.leakage_samples,
                                            np.random.default_rng(seed))
        rows = [{"epsilon": cfg.pricing.epsilon if cfg.pricing.dp else None, "T": r.horizon,
                 "leakage_bits": r.leakage, "stderr_bits": r.stderr, "instance_id": "one-way-2x1"}
                for r in reports]
        check = _one_way_dp_check(cfg, sc, space) if cfg.pricing.dp and np.isfinite(cfg.pricing.epsilon) else {}

    leakage_path = write_csv(rows, os.path.join(rep_dir, "leakage.csv"), LEAKAGE_COLUMNS)
    files = {"leakage": leakage_path}
    if check:
        files["dp_check"] = write_json(check, os.path.join(rep_dir, "dp_check.json"))
    summary = {"seed": seed, "leakage_bits": rows[-1]["leakage_bits"], "stderr_bits": rows[-1]["stderr_bits"],
               "max_log_ratio": check.get("max_log_ratio")}
    files["summary"] = write_json(summary, os.path.join(rep_dir, "summary.json"))
    return ReplicationResult(seed, rep_dir, files, summary, leakage=rows)


def run_replication(cfg: ExperimentConfig, seed: int) -> ReplicationResult:
    """Run one seeded replication; errors are returned, not raised"""
    if multiprocessing.current_process().name != "MainProcess":
        configure_logging(f"Rep-{seed}")
    rep_dir = ensure_dir(os.path.join(cfg.out_dir, f"rep-{seed}"))
    logger.info(f"Starting replication {seed} ({cfg.mechanism}, PID: {os.getpid()})")
    try:
        if cfg.mechanism in (TWO_WAY_EXACT, TWO_WAY_EFFICIENT):
            return _two_way_replication(cfg, seed, rep_dir)
        if cfg.mechanism == ONE_WAY:
            return _one_way_replication(cfg, seed, rep_dir)
        return _leakage_replication(cfg, seed, rep_dir)
    except (DomainError, InfeasibleInstanceError, ConfigError, TrafficDataError, OSError) as e:
        logger.error(f"[ERROR] Replication {seed} failed: {e}")
        return ReplicationResult(seed, rep_dir, error=e)


def _replication_task(args) -> ReplicationResult:
    return run_replication(*args)


def _mean_summary(summaries: List[Dict]) -> Dict:
    keys = sorted({k for s in summaries for k, v in s.items()
                   if isinstance(v, (int, float)) and not isinstance(v, bool) and k != "seed"})
    means = {}
    for key in keys:
        values = [s[key] for s in summaries if isinstance(s.get(key), (int, float))]
        means[key] = float(np.mean(values)) if values else None
    return means


class ExperimentLauncher:
    """Fans replications out over worker processes and merges the results"""

    def __init__(self, cfg: ExperimentConfig, workers: Optional[int] = None):
        self.cfg = cfg.validate()
        self.workers = workers or get_settings().workers
        logger.info(f"Experiment launcher initialized ({cfg.mechanism}, "
                    f"{len(cfg.replication_seeds)} replications, {self.workers} workers)")

    def run_all(self) -> List[ReplicationResult]:
        seeds = self.cfg.replication_seeds
        tasks = [(self.cfg, seed) for seed in seeds]
        if self.workers <= 1 or len(tasks) == 1:
            results = [_replication_task(task) for task in tasks]
        else:
            with multiprocessing.Pool(processes=min(self.workers, len(tasks))) as pool:
                results = pool.map(_replication_task, tasks)
        return sorted(results, key=lambda r: r.seed)

    def merge(self, results: List[ReplicationResult]) -> RunMetrics:
        out_dir = ensure_dir(self.cfg.out_dir)
        done = [r for r in results if r.ok]
        failed = [r for r in results if not r.ok]
        if not done:
            raise failed[0].error
        if failed:
            logger.warning(f"{len(failed)} of {len(results)} replications failed; results are partial")

        files: Dict[str, str] = {}
        if any(r.table for r in done):
            frame = pd.DataFrame([row for r in done for row in r.table], columns=TABLE_COLUMNS)
            merged = (frame.groupby(["od", "label", "hour"], sort=True, as_index=False)
                      [["before", "after", "improvement_pct", "average_payment"]].mean())
            files["table"] = write_csv(merged, os.path.join(out_dir, "table.csv"), TABLE_COLUMNS)
        if any(r.leakage for r in done):
            frame = pd.DataFrame([row for r in done for row in r.leakage], columns=LEAKAGE_COLUMNS)
            merged = (frame.groupby(["T", "instance_id"], sort=True, as_index=False, dropna=False)
                      .agg(epsilon=("epsilon", "first"), leakage_bits=("leakage_bits", "mean"),
                           stderr_bits=("stderr_bits", "mean")))
            files["leakage"] = write_csv(merged, os.path.join(out_dir, "leakage.csv"), LEAKAGE_COLUMNS)
            checks = [r.files["dp_check"] for r in done if "dp_check" in r.files]
            if checks:
                files["dp_check"] = checks[0]

        summary = {
            "mechanism": self.cfg.mechanism,
            "config": self.cfg.to_dict(),
            "replications": [r.summary for r in done],
            "failed_seeds": [r.seed for r in failed],
            "mean": _mean_summary([r.summary for r in done]),
            "partial": bool(failed),
        }
        files["summary"] = write_json(summary, os.path.join(out_dir, "summary.json"))
        return RunMetrics(self.cfg.mechanism, out_dir, results, summary, files, partial=bool(failed))

    def run(self) -> RunMetrics:
        return self.merge(self.run_all())


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> RunMetrics:
    """Run every replication of `cfg` and write the merged outputs"""
    metrics = ExperimentLauncher(cfg, workers).run()
    logger.info(f"Experiment finished: {metrics.out_dir} (partial={metrics.partial})")
    return metrics


def sweep(cfg: ExperimentConfig, parameter: str, values: Sequence[float],
          workers: Optional[int] = None) -> pd.DataFrame:
    """
    One experiment per value of `parameter`, each in its own subdirectory,
    merged into sweep.csv with the mean summary metrics of each point.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"unknown sweep parameter {parameter!r}; expected one of {', '.join(SWEEP_PARAMETERS)}")
    if len(values) == 0:
        raise ConfigError("sweep needs at least one value")

    rows = []
    for value in values:
        point = cfg.with_parameter(parameter, value)
        point.out_dir = os.path.join(cfg.out_dir, f"{parameter}={float(value):g}")
        metrics = run_experiment(point, workers)
        rows.append({parameter: value, "partial": metrics.partial, **metrics.summary["mean"]})

    frame = pd.DataFrame(rows)
    columns = [parameter, "partial"] + sorted(c for c in frame.columns if c not in (parameter, "partial"))
    write_csv(frame, os.path.join(ensure_dir(cfg.out_dir), "sweep.csv"), columns)
    return frame[columns]
