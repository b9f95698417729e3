#!/usr/bin/env python3
"""
Scenario Builder
================

Turns traffic counts plus a population spec into a Scenario: one OD pair
per (county, direction), one time step per index, demand equal to the
configured share of the counted volume. Also builds the small instances
used by the leakage experiments.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from core.model import (
    BidProfile, CostFunction, DomainError, Passenger, PopulationSpec, Scenario,
    sample_population,
)
from utils.traffic_data import TrafficVolumeTable, TrafficDataError

logger = logging.getLogger(__name__)


def build_scenario(table: TrafficVolumeTable, spec: PopulationSpec, fraction: float = 0.05,
                   penalty: float = 5.0, seed: Optional[int] = None,
                   horizon: Optional[int] = None) -> Scenario:
    """
    Q[s, t] = fraction * volume[s, t]. The raw volumes are kept as the
    before-offload baseline. `horizon` keeps only the first time steps.
    """
    if not 0.0 <= fraction <= 1.0:
        raise DomainError(f"offload fraction must lie in [0, 1], got {fraction}")
    if len(table) == 0:
        raise TrafficDataError("traffic table is empty")
    volumes = table.volume_matrix()
    if horizon is not None:
        if horizon > volumes.shape[1]:
            raise DomainError(f"horizon {horizon} exceeds the {volumes.shape[1]} indices in the traffic data")
        volumes = volumes[:, :horizon]
    S, T = volumes.shape
    population = sample_population(spec, seed=seed, od_count=S, horizon=T)
    logger.info(f"Built scenario: S={S}, T={T}, N={len(population)}, fraction={fraction}")
    return Scenario(
        S=S,
        T=T,
        demand=fraction * volumes,
        penalty=np.full(S, float(penalty)),
        population=population,
        baseline=volumes,
        labels=tuple(table.labels),
    )


def two_way_leakage_instance(levels: Tuple[float, ...] = (0.2, 1.8)) -> Tuple[Scenario, BidProfile, List[float]]:
    """Two passengers bidding one unit on one OD pair with no demand to meet"""
    population = [
        Passenger(id=i, costs={0: CostFunction.linear_rate(1.0)}, capacity=1.0, local_od=(0,))
        for i in range(2)
    ]
    sc = Scenario(S=1, T=1, demand=np.zeros((1, 1)), penalty=np.zeros(1), population=population)
    B = BidProfile(np.ones((2, 1, 1)), np.full((2, 1, 1), float(levels[0])), np.ones((2, 1, 1), dtype=bool))
    return sc, B, list(levels)


def one_way_leakage_instance(horizon: int = 24, slopes: Tuple[float, ...] = (0.5, 1.5),
                             demand: float = 2.0, penalty: float = 2.0
                             ) -> Tuple[Scenario, List[List[CostFunction]]]:
    """
    Two quadratic-cost passengers on one OD pair; each may hold any of the
    curvatures in `slopes`. Returns the scenario and its cost space.
    """
    space = [CostFunction.quadratic(a / 2.0) for a in slopes]
    population = [
        Passenger(id=i, costs={0: space[0]}, capacity=3.5, local_od=(0,) * horizon)
        for i in range(2)
    ]
    sc = Scenario(S=1, T=horizon, demand=np.full((1, horizon), demand),
                  penalty=np.array([penalty]), population=population)
    return sc, [list(space), list(space)]
