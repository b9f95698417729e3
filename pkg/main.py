#!/usr/bin/env python3
"""
Transit Offload - Private Incentive Mechanisms for Traffic Offloading
=====================================================================

Runs the incentive mechanisms that move drivers onto public transit:
a differentially private reverse auction where passengers bid (two-way)
and an online posted-price scheme where they only respond (one-way),
plus the privacy-leakage experiments and parameter sweeps.

Usage:
    python main.py two-way   [--exact] [--traffic volumes.csv | --scenario scenario.json] [--epsilon 1.0]
    python main.py one-way   [--mode subgradient] [--dp on --epsilon 1.0] [--eta-c 0.5]
    python main.py privacy   --target two-way|one-way [--epsilon 0.5] [--T 24]
    python main.py sweep     --target one-way --parameter eta_c --values 0.1,0.5,1.0
    python main.py gen-data  --out volumes.csv [--seed 0]

Exit codes:
    0 - success
    2 - invalid configuration or input data
    3 - infeasible instance (demand cannot be met, or too large to enumerate)

Environment Variables (optional, see .env.example):
    OFFLOAD_EXACT_CAP, OFFLOAD_WORKERS, OFFLOAD_LOG_LEVEL,
    OFFLOAD_OUTPUT_DIR, OFFLOAD_P_CAP, OFFLOAD_DELTA_P_MIN
"""

import sys
import os
import argparse
import logging
import multiprocessing
from dataclasses import replace
from datetime import datetime

# Add src directory to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from config.experiment_config import (
    ConfigError, ExperimentConfig, MECHANISMS, SWEEP_PARAMETERS, TWO_WAY_EXACT, TWO_WAY_EFFICIENT,
    ONE_WAY, LEAKAGE_TWO_WAY, LEAKAGE_ONE_WAY, config_from_dict, load_experiment_config,
)
from core.experiment_launcher import configure_logging, run_experiment, sweep
from core.model import DomainError, InfeasibleInstanceError
from utils.traffic_data import TrafficDataError, write_synthetic_traffic

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3


def print_startup_banner(command: str):
    print("=" * 80)
    print("[OFFLOAD] TRANSIT OFFLOAD INCENTIVE MECHANISMS")
    print("=" * 80)
    print(f"Started at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print(f"Command: {command}")
    print("=" * 80)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="experiment config JSON; flags override its values")
    p.add_argument("--scenario", help="scenario JSON")
    p.add_argument("--traffic", help="traffic volume CSV (county, direction, index, volume)")
    p.add_argument("--seed", type=int, help="first replication seed")
    p.add_argument("--reps", type=int, help="number of replications")
    p.add_argument("--out", help="output directory")
    p.add_argument("--hour", type=int, help="time index reported in table.csv")
    p.add_argument("--workers", type=int, help="worker processes for replications")
    p.add_argument("--N", type=int, dest="population", help="population size")
    p.add_argument("--fraction", type=float, help="share of traffic volume to offload")
    p.add_argument("--penalty", type=float, help="per-unit deficit penalty beta")
    p.add_argument("--T", type=int, dest="horizon", help="keep only the first T time steps")
    p.add_argument("--epsilon", type=float, help="privacy parameter")


def _add_pricing(p: argparse.ArgumentParser):
    p.add_argument("--mode", choices=["verbatim", "subgradient"], help="price update rule")
    p.add_argument("--dp", choices=["on", "off"], help="perturb published prices")
    p.add_argument("--p-init", type=float, help="initial price")
    p.add_argument("--p-cap", type=float, help="price cap")
    p.add_argument("--eta-schedule", choices=["inv_sqrt", "constant"], help="learning-rate schedule")
    p.add_argument("--eta-c", type=float, help="learning-rate constant eta_1 (below 1 for private runs)")


def _add_auction(p: argparse.ArgumentParser):
    p.add_argument("--delta", type=float, help="delta of the efficient auction")
    p.add_argument("--strict-cardinality", action="store_true", default=None,
                   help="keep drawing winners while the winner count is at most Q")
    p.add_argument("--bids", help="bid profile JSON (default: truthful bids)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Private incentive mechanisms for traffic offloading")
    parser.add_argument("--log-level", help="logging level (default from OFFLOAD_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("two-way", help="reverse auction over passenger bids")
    p.add_argument("--exact", action="store_true", help="exact exponential mechanism instead of the efficient one")
    _add_common(p)
    _add_auction(p)

    p = sub.add_parser("one-way", help="online posted prices")
    _add_common(p)
    _add_pricing(p)

    p = sub.add_parser("privacy", help="min-entropy leakage and DP ratio checks")
    p.add_argument("--target", choices=["two-way", "one-way"], default="two-way")
    p.add_argument("--samples", type=int, help="Monte Carlo samples for one-way leakage")
    _add_common(p)
    _add_pricing(p)

    p = sub.add_parser("sweep", help="run one experiment per parameter value")
    p.add_argument("--target", choices=list(MECHANISMS), default=ONE_WAY)
    p.add_argument("--parameter", choices=list(SWEEP_PARAMETERS), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--samples", type=int, help="Monte Carlo samples for one-way leakage")
    _add_common(p)
    _add_pricing(p)
    _add_auction(p)

    p = sub.add_parser("gen-data", help="write a synthetic traffic volume CSV")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duplicate-rate", type=float, default=0.1)
    return parser


def _mechanism(args) -> str:
    if args.command == "two-way":
        return TWO_WAY_EXACT if args.exact else TWO_WAY_EFFICIENT
    if args.command == "one-way":
        return ONE_WAY
    if args.command == "privacy":
        return LEAKAGE_TWO_WAY if args.target == "two-way" else LEAKAGE_ONE_WAY
    return args.target


def build_config(args) -> ExperimentConfig:
    """Config file (or defaults for the command's mechanism), then flag overrides"""
    mechanism = _mechanism(args)
    if args.config:
        cfg = replace(load_experiment_config(args.config), mechanism=mechanism)
    else:
        defaults = {"mechanism": mechanism}
        if mechanism == LEAKAGE_ONE_WAY:
            defaults.update({"dp": "on", "epsilon": 1.0})
        cfg = config_from_dict(defaults)

    flag = lambda name: getattr(args, name, None)
    try:
        auction, pricing, population = cfg.auction, cfg.pricing, cfg.population
        # pricing is validated once, with every flag applied
        changes = {}
        if flag("epsilon") is not None:
            auction = replace(auction, epsilon=args.epsilon)
            changes["epsilon"] = args.epsilon
        if flag("delta") is not None:
            auction = replace(auction, delta=args.delta)
        if flag("strict_cardinality"):
            auction = replace(auction, strict_cardinality=True)
        for name in ("mode", "p_init", "p_cap"):
            if flag(name) is not None:
                changes[name] = getattr(args, name)
        if flag("dp") is not None:
            changes["dp"] = args.dp == "on"
        if flag("eta_schedule") is not None or flag("eta_c") is not None:
            eta = pricing.eta
            changes["eta"] = replace(eta, kind=flag("eta_schedule") or eta.kind,
                                     c=eta.c if flag("eta_c") is None else args.eta_c)
        pricing = replace(pricing, **changes)
        if flag("population") is not None:
            population = replace(population, n=args.population)
    except DomainError as e:
        raise ConfigError(str(e)) from e

    overrides = {"auction": auction, "pricing": pricing, "population": population}
    for name, attr in (("scenario", "scenario_path"), ("traffic", "traffic_path"), ("bids", "bids_path"),
                       ("out", "out_dir"), ("hour", "hour"), ("reps", "reps"), ("fraction", "fraction"),
                       ("penalty", "penalty"), ("horizon", "horizon"), ("samples", "leakage_samples")):
        if flag(name) is not None:
            overrides[attr] = getattr(args, name)
    if flag("seed") is not None:
        overrides["seeds"] = [args.seed]
    return replace(cfg, **overrides).validate()


def _parse_values(raw: str):
    try:
        values = [float(v) for v in raw.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"sweep values must be numbers: {raw!r}") from e
    if not values:
        raise ConfigError("sweep needs at least one value")
    return values


def run_command(args) -> int:
    if args.command == "gen-data":
        table = write_synthetic_traffic(args.out, args.seed, duplicate_rate=args.duplicate_rate)
        print(f"[OK] Wrote {args.out} ({len(table)} distinct entries over {len(table.keys)} roads)")
        return EXIT_OK

    cfg = build_config(args)
    if args.command == "sweep":
        frame = sweep(cfg, args.parameter, _parse_values(args.values), args.workers)
        print(frame.to_string(index=False))
        print(f"\n[OK] Sweep written to {os.path.join(cfg.out_dir, 'sweep.csv')}")
        return EXIT_OK

    metrics = run_experiment(cfg, args.workers)
    for key, value in sorted(metrics.summary["mean"].items()):
        print(f"   {key}: {value}")
    status = "partial results" if metrics.partial else "completed successfully"
    print(f"\n[OK] {cfg.mechanism} {status}: {metrics.out_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(level=args.log_level.upper() if args.log_level else None)
    print_startup_banner(args.command)
    try:
        return run_command(args)
    except (ConfigError, TrafficDataError, DomainError) as e:
        logger.error(f"[ERROR] {e}")
        return EXIT_INVALID
    except InfeasibleInstanceError as e:
        logger.error(f"[ERROR] Infeasible instance: {e}")
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    # Required for multiprocessing on Windows
    multiprocessing.freeze_support()
    sys.exit(main())
