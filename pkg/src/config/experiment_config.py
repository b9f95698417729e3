#!/usr/bin/env python3
"""
Experiment Configuration
========================

Loads and validates experiment run configs. A config names one mechanism,
where the scenario comes from, the mechanism parameters, the seeds and the
output directory. JSON files provide the base values and CLI flags
override them.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional

from config.settings import get_settings
from core.auction import AuctionParams
from core.model import DomainError, PopulationSpec, QUADRATIC, LINEAR
from core.pricing import EtaSchedule, PricingParams

logger = logging.getLogger(__name__)

TWO_WAY_EXACT = "two-way-exact"
TWO_WAY_EFFICIENT = "two-way-efficient"
ONE_WAY = "one-way"
LEAKAGE_TWO_WAY = "leakage-two-way"
LEAKAGE_ONE_WAY = "leakage-one-way"
MECHANISMS = (TWO_WAY_EXACT, TWO_WAY_EFFICIENT, ONE_WAY, LEAKAGE_TWO_WAY, LEAKAGE_ONE_WAY)
SWEEP_PARAMETERS = ("epsilon", "T", "eta_c", "fraction")


class ConfigError(ValueError):
    """Invalid experiment configuration"""


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment"""
    mechanism: str = TWO_WAY_EFFICIENT
    scenario_path: Optional[str] = None
    traffic_path: Optional[str] = None
    bids_path: Optional[str] = None
    population: PopulationSpec = field(default_factory=PopulationSpec)
    fraction: float = 0.05
    penalty: float = 5.0
    horizon: Optional[int] = None
    auction: AuctionParams = field(default_factory=lambda: AuctionParams(epsilon=1.0))
    pricing: PricingParams = field(default_factory=PricingParams)
    seeds: List[int] = field(default_factory=lambda: [0])
    reps: int = 1
    out_dir: str = field(default_factory=lambda: get_settings().output_dir)
    hour: int = 12
    leakage_samples: int = 2000

    def validate(self) -> "ExperimentConfig":
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"unknown mechanism {self.mechanism!r}; expected one of {', '.join(MECHANISMS)}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ConfigError(f"offload fraction must lie in [0, 1], got {self.fraction}")
        if self.penalty < 0:
            raise ConfigError(f"penalty must be >= 0, got {self.penalty}")
        if self.horizon is not None and self.horizon < 0:
            raise ConfigError(f"horizon must be >= 0, got {self.horizon}")
        if self.scenario_path and self.traffic_path:
            raise ConfigError("give either a scenario file or a traffic file, not both")
        if self.leakage_samples < 2:
            raise ConfigError("leakage estimates need at least 2 samples")
        return self

    @property
    def replication_seeds(self) -> List[int]:
        """Configured seeds, extended with consecutive values up to `reps`"""
        seeds = list(self.seeds)
        while len(seeds) < self.reps:
            seeds.append(seeds[-1] + 1)
        return seeds

    def with_parameter(self, name: str, value: float) -> "ExperimentConfig":
        """Copy with one sweep parameter replaced"""
        try:
            if name == "epsilon":
                return replace(self, auction=replace(self.auction, epsilon=float(value)),
                               pricing=replace(self.pricing, epsilon=float(value)))
            if name == "T":
                return replace(self, horizon=int(value))
            if name == "eta_c":
                return replace(self, pricing=replace(self.pricing, eta=replace(self.pricing.eta, c=float(value))))
            if name == "fraction":
                return replace(self, fraction=float(value))
        except DomainError as e:
            raise ConfigError(f"invalid value {value!r} for {name}: {e}") from e
        raise ConfigError(f"unknown sweep parameter {name!r}; expected one of {', '.join(SWEEP_PARAMETERS)}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["population"] = self.population.to_dict()
        data["pricing"]["dp"] = "on" if self.pricing.dp else "off"
        data["pricing"]["epsilon"] = None if math.isinf(self.pricing.epsilon) else self.pricing.epsilon
        return data


def pricing_from_dict(data: Mapping, base: Optional[PricingParams] = None) -> PricingParams:
    """
    Run-config block: {mode, dp: on|off, epsilon, p_init, p_cap,
    eta: {schedule, c}}
    """
    base = base or PricingParams(p_cap=get_settings().p_cap, delta_p_min=get_settings().delta_p_min)
    eta = data.get("eta", {})
    dp = data.get("dp", "on" if base.dp else "off")
    if isinstance(dp, str):
        if dp not in ("on", "off"):
            raise ConfigError(f"dp must be 'on' or 'off', got {dp!r}")
        dp = dp == "on"
    epsilon = data.get("epsilon", base.epsilon)
    try:
        return PricingParams(
            mode=data.get("mode", base.mode),
            p_init=float(data.get("p_init", base.p_init)),
            p_cap=float(data.get("p_cap", base.p_cap)),
            eta=EtaSchedule(eta.get("schedule", base.eta.kind), float(eta.get("c", base.eta.c))),
            dp=bool(dp),
            epsilon=math.inf if epsilon is None else float(epsilon),
            delta_p_min=float(data.get("delta_p_min", base.delta_p_min)),
            grid_step=float(data.get("grid_step", base.grid_step)),
        )
    except (DomainError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid pricing config: {e}") from e


def config_from_dict(data: Mapping) -> ExperimentConfig:
    mechanism = data.get("mechanism", TWO_WAY_EFFICIENT)
    population = dict(data.get("population", {}))
    population.setdefault("family", QUADRATIC if mechanism in (ONE_WAY, LEAKAGE_ONE_WAY) else LINEAR)
    auction = data.get("auction", {})
    pricing_block = dict(data.get("pricing", {}))
    for key in ("mode", "dp", "epsilon", "p_init", "p_cap", "eta"):
        if key in data and key not in pricing_block:
            pricing_block[key] = data[key]
    seeds = data.get("seeds", [0])
    try:
        cfg = ExperimentConfig(
            mechanism=mechanism,
            scenario_path=data.get("scenario"),
            traffic_path=data.get("traffic"),
            bids_path=data.get("bids"),
            population=PopulationSpec.from_dict(population),
            fraction=float(data.get("fraction", 0.05)),
            penalty=float(data.get("penalty", 5.0)),
            horizon=data.get("horizon"),
            auction=AuctionParams(
                epsilon=float(auction.get("epsilon", 1.0)),
                delta=float(auction.get("delta", 0.1)),
                strict_cardinality=bool(auction.get("strict_cardinality", False)),
            ),
            pricing=pricing_from_dict(pricing_block),
            seeds=[int(s) for s in (seeds if isinstance(seeds, list) else [seeds])],
            reps=int(data.get("reps", 1)),
            out_dir=data.get("out", get_settings().output_dir),
            hour=int(data.get("hour", 12)),
            leakage_samples=int(data.get("leakage_samples", 2000)),
        )
    except DomainError as e:
        raise ConfigError(f"invalid experiment config: {e}") from e
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid experiment config: {e}") from e
    return cfg.validate()


def load_experiment_config(path: str) -> ExperimentConfig:
    """Load a JSON experiment config"""
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    logger.info(f"Loaded experiment config from {path}")
    return config_from_dict(data)
