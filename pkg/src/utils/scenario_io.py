"""
Scenario and bid files

Scenario JSON:
    {"S": 2, "T": 24, "demand": [[...], ...], "beta": [...],
     "population": [{"id": 0, "capacity": 3.5,
                     "cost": {"family": "linear", "params": {...}},
                     "local_od": [0, 0, ...]}, ...]}

A passenger entry may give "costs" as {"<s>": {"family": ..., "params": ...}}
instead of one "cost" shared by every OD pair it visits. "baseline" and
"labels" are optional.

Bid JSON: {"bids": [{"i": 0, "s": 0, "t": 0, "q": 3.5, "claimed_cost": 1.2}, ...]}
"""

import json
import logging
from typing import Any, Dict

import numpy as np

from core.model import BidProfile, DomainError, Passenger, Scenario

logger = logging.getLogger(__name__)


def _read_json(path: str) -> Any:
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise DomainError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise DomainError(f"{path} is not valid JSON: {e}") from e


def scenario_from_dict(data: Dict) -> Scenario:
    try:
        S, T = int(data["S"]), int(data["T"])
        population = [Passenger.from_dict(p) for p in data["population"]]
        demand = np.asarray(data["demand"], dtype=float).reshape(S, T) if S * T else np.zeros((S, T))
        penalty = np.asarray(data.get("beta", data.get("penalty")), dtype=float)
    except KeyError as e:
        raise DomainError(f"scenario is missing field {e}") from e
    except (TypeError, ValueError) as e:
        raise DomainError(f"scenario has a malformed field: {e}") from e
    baseline = data.get("baseline")
    return Scenario(
        S=S,
        T=T,
        demand=demand,
        penalty=penalty,
        population=population,
        baseline=None if baseline is None else np.asarray(baseline, dtype=float),
        labels=tuple(data.get("labels", ())),
    )


def scenario_to_dict(sc: Scenario) -> Dict:
    data = {
        "S": sc.S,
        "T": sc.T,
        "demand": sc.demand.tolist(),
        "beta": sc.penalty.tolist(),
        "population": [p.to_dict() for p in sc.population],
    }
    if sc.baseline is not None:
        data["baseline"] = sc.baseline.tolist()
    if sc.labels:
        data["labels"] = list(sc.labels)
    return data


def load_scenario(path: str) -> Scenario:
    sc = scenario_from_dict(_read_json(path))
    logger.info(f"Loaded scenario from {path}: S={sc.S}, T={sc.T}, N={sc.N}")
    return sc


def save_scenario(sc: Scenario, path: str):
    with open(path, 'w') as f:
        json.dump(scenario_to_dict(sc), f, indent=2, sort_keys=True)


def load_bids(path: str, sc: Scenario) -> BidProfile:
    data = _read_json(path)
    records = data.get("bids") if isinstance(data, dict) else data
    if not isinstance(records, list):
        raise DomainError(f"{path}: expected a list of bids")
    try:
        B = BidProfile.from_records(records, sc.N, sc.S, sc.T)
    except KeyError as e:
        raise DomainError(f"{path}: bid is missing field {e}") from e
    logger.info(f"Loaded {len(records)} bids from {path}")
    return B


def save_bids(B: BidProfile, path: str):
    with open(path, 'w') as f:
        json.dump({"bids": B.to_records()}, f, indent=2, sort_keys=True)
