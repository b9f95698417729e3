#!/usr/bin/env python3
"""
Offload Model
=============

Domain types shared by the two-way auction and the one-way pricing loop:
passenger cost functions, demand scenarios, bid and selection profiles,
plus welfare and feasibility evaluation.

All types are immutable after construction. Randomness is always passed
in explicitly as a numpy Generator.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

LINEAR = "linear"
QUADRATIC = "quadratic"

# Family codes used by the vectorized cost arrays
FAMILY_NONE = 0
FAMILY_LINEAR = 1
FAMILY_QUADRATIC = 2

# Comfort, reliability, delay, cost
DEFAULT_WEIGHT_MEAN = (0.16, 0.27, 0.36, 0.21)
DEFAULT_FACTOR_RATES = (0.4, 0.4, 0.4, 0.4)
DEFAULT_MIN_COST_RATE = 1e-3


class DomainError(ValueError):
    """Invalid numeric input to a model or mechanism operation"""


class InfeasibleInstanceError(RuntimeError):
    """No feasible selection profile exists, or an exact quantity is undefined"""


class InstanceTooLargeError(InfeasibleInstanceError):
    """Instance too large for exact mode"""


@dataclass(frozen=True)
class CostFunction:
    """
    Inconvenience cost C(q) of providing q offload units.

    Linear: C(q) = (w . f) q with factor weights w and factor rates f.
    Quadratic: C(q) = a q^2 + b q.
    """
    family: str
    weights: Tuple[float, ...] = ()
    rates: Tuple[float, ...] = ()
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.family == LINEAR:
            if len(self.weights) != len(self.rates):
                raise DomainError(f"weights and rates differ in length: {len(self.weights)} vs {len(self.rates)}")
            if self.slope < 0:
                raise DomainError(f"linear cost must be nondecreasing, got w.f = {self.slope}")
        elif self.family == QUADRATIC:
            if not self.a > 0 or self.b < 0:
                raise DomainError(f"quadratic cost needs a > 0 and b >= 0, got a={self.a}, b={self.b}")
        else:
            raise DomainError(f"unknown cost family: {self.family!r}")

    @classmethod
    def linear(cls, weights: Sequence[float], rates: Sequence[float]) -> "CostFunction":
        return cls(LINEAR, weights=tuple(float(w) for w in weights), rates=tuple(float(f) for f in rates))

    @classmethod
    def linear_rate(cls, rate: float) -> "CostFunction":
        """Linear cost with a single marginal rate c, so C(q) = c q"""
        return cls.linear((rate,), (1.0,))

    @classmethod
    def quadratic(cls, a: float, b: float = 0.0) -> "CostFunction":
        return cls(QUADRATIC, a=float(a), b=float(b))

    @property
    def slope(self) -> float:
        """Marginal rate w . f of a linear cost"""
        return float(sum(w * f for w, f in zip(self.weights, self.rates)))

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of C'"""
        return 2.0 * self.a if self.family == QUADRATIC else 0.0

    def to_dict(self) -> Dict:
        if self.family == LINEAR:
            return {"family": LINEAR, "params": {"weights": list(self.weights), "rates": list(self.rates)}}
        return {"family": QUADRATIC, "params": {"a": self.a, "b": self.b}}

    @classmethod
    def from_dict(cls, data: Mapping) -> "CostFunction":
        params = data.get("params", {})
        family = data.get("family")
        if family == LINEAR:
            if "rate" in params:
                return cls.linear_rate(params["rate"])
            return cls.linear(params["weights"], params["rates"])
        if family == QUADRATIC:
            return cls.quadratic(params["a"], params.get("b", 0.0))
        raise DomainError(f"unknown cost family: {family!r}")


def _check_offload(q: float):
    if q < 0 or np.isnan(q):
        raise DomainError(f"offload must be nonnegative, got {q}")


def eval_cost(c: CostFunction, q: float) -> float:
    """C(q) for q >= 0"""
    _check_offload(q)
    if q == 0:
        return 0.0
    if c.family == LINEAR:
        return c.slope * q
    return c.a * q * q + c.b * q


def eval_gradient(c: CostFunction, q: float) -> float:
    """C'(q) for q >= 0"""
    _check_offload(q)
    if c.family == LINEAR:
        return c.slope
    return 2.0 * c.a * q + c.b


@dataclass(frozen=True)
class Passenger:
    """A passenger with per-OD cost functions; a missing OD means infinite cost"""
    id: int
    costs: Mapping[int, CostFunction]
    capacity: float
    local_od: Tuple[int, ...]

    def __post_init__(self):
        if not self.capacity >= 0:
            raise DomainError(f"passenger {self.id}: capacity must be >= 0, got {self.capacity}")
        for t, s in enumerate(self.local_od):
            if s not in self.costs:
                raise DomainError(f"passenger {self.id}: no cost function for local OD {s} at t={t}")

    def cost_for(self, s: int) -> Optional[CostFunction]:
        return self.costs.get(s)

    def to_dict(self) -> Dict:
        home = {s for s in self.local_od}
        data = {
            "id": self.id,
            "capacity": None if np.isinf(self.capacity) else self.capacity,
            "local_od": list(self.local_od),
        }
        if len(self.costs) == 1 and home == set(self.costs):
            data["cost"] = next(iter(self.costs.values())).to_dict()
        else:
            data["costs"] = {str(s): c.to_dict() for s, c in sorted(self.costs.items())}
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> "Passenger":
        local_od = tuple(int(s) for s in data["local_od"])
        if "costs" in data:
            costs = {int(s): CostFunction.from_dict(c) for s, c in data["costs"].items()}
        else:
            cost = CostFunction.from_dict(data["cost"])
            costs = {s: cost for s in set(local_od)}
        capacity = data.get("capacity")
        return cls(
            id=int(data["id"]),
            costs=costs,
            capacity=float("inf") if capacity is None else float(capacity),
            local_od=local_od,
        )


@dataclass(frozen=True, eq=False)
class CostArrays:
    """Per-(passenger, OD) cost parameters laid out for vectorized evaluation"""
    family: np.ndarray     # (N, S) family codes
    slope: np.ndarray      # (N, S) linear rate
    a: np.ndarray          # (N, S)
    b: np.ndarray          # (N, S)
    capacity: np.ndarray   # (N,)
    local_od: np.ndarray   # (N, T)

    def at(self, t: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Parameters of every passenger's local cost at time t"""
        rows = np.arange(self.family.shape[0])
        od = self.local_od[:, t]
        return od, self.family[rows, od], self.slope[rows, od], self.a[rows, od], self.b[rows, od], self.capacity


@dataclass(frozen=True, eq=False)
class Scenario:
    """OD pairs, horizon, demand Q[s, t], penalties beta[s] and the population"""
    S: int
    T: int
    demand: np.ndarray
    penalty: np.ndarray
    population: Tuple[Passenger, ...]
    baseline: Optional[np.ndarray] = None
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        demand = np.asarray(self.demand, dtype=float)
        penalty = np.asarray(self.penalty, dtype=float)
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "penalty", penalty)
        object.__setattr__(self, "population", tuple(self.population))
        if demand.shape != (self.S, self.T):
            raise DomainError(f"demand shape {demand.shape} does not match (S, T) = ({self.S}, {self.T})")
        if penalty.shape != (self.S,):
            raise DomainError(f"penalty shape {penalty.shape} does not match S = {self.S}")
        if np.any(demand < 0) or np.any(penalty < 0):
            raise DomainError("demand and penalty must be nonnegative")
        if not self.population:
            raise DomainError("scenario population is empty")
        if self.baseline is not None:
            baseline = np.asarray(self.baseline, dtype=float)
            if baseline.shape != (self.S, self.T):
                raise DomainError(f"baseline shape {baseline.shape} does not match (S, T)")
            object.__setattr__(self, "baseline", baseline)
        for p in self.population:
            if len(p.local_od) != self.T:
                raise DomainError(f"passenger {p.id}: local_od covers {len(p.local_od)} steps, horizon is {self.T}")
            if any(s < 0 or s >= self.S for s in p.costs):
                raise DomainError(f"passenger {p.id}: cost for an OD pair outside 0..{self.S - 1}")

    @property
    def N(self) -> int:
        return len(self.population)

    @cached_property
    def cost_arrays(self) -> CostArrays:
        n = self.N
        family = np.zeros((n, self.S), dtype=np.int8)
        slope = np.zeros((n, self.S))
        a = np.ones((n, self.S))
        b = np.zeros((n, self.S))
        for i, p in enumerate(self.population):
            for s, c in p.costs.items():
                if c.family == LINEAR:
                    family[i, s] = FAMILY_LINEAR
                    slope[i, s] = c.slope
                else:
                    family[i, s] = FAMILY_QUADRATIC
                    a[i, s] = c.a
                    b[i, s] = c.b
        capacity = np.array([p.capacity for p in self.population], dtype=float)
        local_od = np.array([p.local_od for p in self.population], dtype=np.int64).reshape(n, self.T)
        return CostArrays(family, slope, a, b, capacity, local_od)

    def replace_population(self, population: Iterable[Passenger]) -> "Scenario":
        return Scenario(self.S, self.T, self.demand, self.penalty, tuple(population), self.baseline, self.labels)

    def truncated(self, horizon: int) -> "Scenario":
        """First `horizon` steps"""
        if not 0 <= horizon <= self.T:
            raise DomainError(f"horizon {horizon} outside 0..{self.T}")
        if horizon == self.T:
            return self
        population = [Passenger(p.id, p.costs, p.capacity, p.local_od[:horizon]) for p in self.population]
        baseline = None if self.baseline is None else self.baseline[:, :horizon]
        return Scenario(self.S, horizon, self.demand[:, :horizon], self.penalty, population, baseline, self.labels)


@dataclass(frozen=True)
class Bid:
    q: float
    claimed_cost: float


@dataclass(frozen=True, eq=False)
class BidProfile:
    """Bid matrix B over (i, s, t); mask False means no bid for that OD pair"""
    q: np.ndarray
    claimed: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        claimed = np.asarray(self.claimed, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if q.ndim != 3 or q.shape != claimed.shape or q.shape != mask.shape:
            raise DomainError(f"bid arrays must share an (N, S, T) shape, got {q.shape}, {claimed.shape}, {mask.shape}")
        if np.any(q[mask] < 0):
            raise DomainError("bid offload must be nonnegative")
        object.__setattr__(self, "q", np.where(mask, q, 0.0))
        object.__setattr__(self, "claimed", np.where(mask, claimed, 0.0))
        object.__setattr__(self, "mask", mask)

    @classmethod
    def empty(cls, N: int, S: int, T: int) -> "BidProfile":
        return cls(np.zeros((N, S, T)), np.zeros((N, S, T)), np.zeros((N, S, T), dtype=bool))

    @classmethod
    def from_records(cls, records: Iterable[Mapping], N: int, S: int, T: int) -> "BidProfile":
        """Build from rows {i, s, t, q, claimed_cost}"""
        q = np.zeros((N, S, T))
        claimed = np.zeros((N, S, T))
        mask = np.zeros((N, S, T), dtype=bool)
        for row in records:
            i, s, t = int(row["i"]), int(row["s"]), int(row["t"])
            if not (0 <= i < N and 0 <= s < S and 0 <= t < T):
                raise DomainError(f"bid index ({i}, {s}, {t}) outside ({N}, {S}, {T})")
            q[i, s, t] = float(row["q"])
            claimed[i, s, t] = float(row["claimed_cost"])
            mask[i, s, t] = True
        return cls(q, claimed, mask)

    def to_records(self) -> List[Dict]:
        return [
            {"i": int(i), "s": int(s), "t": int(t), "q": float(self.q[i, s, t]), "claimed_cost": float(self.claimed[i, s, t])}
            for i, s, t in zip(*np.nonzero(self.mask))
        ]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.q.shape

    @property
    def welfare_terms(self) -> np.ndarray:
        """Per-bid welfare q - C, zero where there is no bid"""
        return np.where(self.mask, self.q - self.claimed, 0.0)

    def bid(self, i: int, s: int, t: int) -> Optional[Bid]:
        if not self.mask[i, s, t]:
            return None
        return Bid(float(self.q[i, s, t]), float(self.claimed[i, s, t]))

    def with_claimed(self, i: int, t: int, claimed_cost: float) -> "BidProfile":
        """Replace passenger i's claimed cost on every OD it bids for at t"""
        claimed = self.claimed.copy()
        claimed[i, :, t] = np.where(self.mask[i, :, t], claimed_cost, 0.0)
        return BidProfile(self.q, claimed, self.mask)

    def without(self, i: int) -> "BidProfile":
        mask = self.mask.copy()
        mask[i] = False
        return BidProfile(self.q, self.claimed, mask)

    def filtered(self, keep: np.ndarray) -> "BidProfile":
        return BidProfile(self.q, self.claimed, self.mask & keep)


@dataclass(frozen=True, eq=False)
class SelectionProfile:
    """
    Binary assignment X. Shape (N, S, T), or (N, S) for a single time
    step, in which case `t` names the step.
    """
    x: np.ndarray
    t: Optional[int] = None

    def __post_init__(self):
        x = np.asarray(self.x)
        expected_ndim = 2 if self.t is not None else 3
        if x.ndim != expected_ndim:
            raise DomainError(f"selection must have {expected_ndim} dims, got shape {x.shape}")
        object.__setattr__(self, "x", x.astype(np.int8))

    @classmethod
    def from_assignment(cls, assignment: Sequence[int], S: int, t: int) -> "SelectionProfile":
        """From a per-passenger OD index (-1 for unselected) at time t"""
        assignment = np.asarray(assignment, dtype=np.int64)
        x = np.zeros((assignment.size, S), dtype=np.int8)
        rows = np.nonzero(assignment >= 0)[0]
        x[rows, assignment[rows]] = 1
        return cls(x, t)

    def assignment(self) -> np.ndarray:
        if self.t is None:
            raise DomainError("assignment is defined for single-step selections")
        out = np.full(self.x.shape[0], -1, dtype=np.int64)
        rows, cols = np.nonzero(self.x)
        out[rows] = cols
        return out

    def __eq__(self, other):
        return isinstance(other, SelectionProfile) and self.t == other.t and np.array_equal(self.x, other.x)

    def __hash__(self):
        return hash((self.t, self.x.tobytes()))


def _bid_slices(X: SelectionProfile, B: BidProfile) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if X.t is not None:
        q, claimed, mask = B.q[:, :, X.t], B.claimed[:, :, X.t], B.mask[:, :, X.t]
    else:
        q, claimed, mask = B.q, B.claimed, B.mask
    if X.x.shape != q.shape:
        raise DomainError(f"selection shape {X.x.shape} does not match bids {q.shape}")
    return q, claimed, mask


def social_welfare(X: SelectionProfile, B: BidProfile, sc: Scenario) -> float:
    """Omega(X, B) = sum over selected bids of q - C"""
    q, claimed, mask = _bid_slices(X, B)
    if B.shape[1] != sc.S:
        raise DomainError(f"bid profile has {B.shape[1]} OD pairs, scenario has {sc.S}")
    selected = (X.x == 1) & mask
    return float(np.sum((q - claimed)[selected]))


def check_feasible(X: SelectionProfile, B: BidProfile, sc: Scenario) -> bool:
    """One OD per passenger per step, binary entries, demand covered"""
    q, _, mask = _bid_slices(X, B)
    x = X.x
    if not np.all((x == 0) | (x == 1)):
        return False
    if np.any(x.sum(axis=1) > 1):
        return False
    if np.any((x == 1) & ~mask):
        return False
    covered = np.sum(x * q, axis=0)
    demand = sc.demand[:, X.t] if X.t is not None else sc.demand
    return bool(np.all(covered >= demand))


def truthful_bids(sc: Scenario, times: Optional[Iterable[int]] = None) -> BidProfile:
    """Every passenger bids its full capacity and true cost on its local OD"""
    N, S, T = sc.N, sc.S, sc.T
    profile_q = np.zeros((N, S, T))
    claimed = np.zeros((N, S, T))
    mask = np.zeros((N, S, T), dtype=bool)
    steps = range(T) if times is None else times
    for i, p in enumerate(sc.population):
        if np.isinf(p.capacity):
            raise DomainError(f"passenger {p.id}: cannot bid an infinite capacity")
        for t in steps:
            s = p.local_od[t]
            profile_q[i, s, t] = p.capacity
            claimed[i, s, t] = eval_cost(p.costs[s], p.capacity)
            mask[i, s, t] = True
    return BidProfile(profile_q, claimed, mask)


@dataclass(frozen=True)
class PopulationSpec:
    """
    Parameters of the sampled passenger population.

    Quadratic passengers get C(q) = (r / 2) q^2 with r = max(w.f, min_cost_rate):
    a passenger whose clipped weights give no cost rate still has a finite
    best response (p / min_cost_rate) and a bounded response slope.
    """
    n: int = 500
    weight_mean: Tuple[float, ...] = DEFAULT_WEIGHT_MEAN
    weight_cov_scale: float = 0.3
    factor_rates: Tuple[float, ...] = DEFAULT_FACTOR_RATES
    capacity_mean: float = 3.5
    capacity_var: float = 0.3
    seed: int = 0
    family: str = LINEAR
    min_cost_rate: float = DEFAULT_MIN_COST_RATE

    def __post_init__(self):
        if self.n < 0:
            raise DomainError(f"population size must be >= 0, got {self.n}")
        if not self.min_cost_rate > 0:
            raise DomainError(f"min_cost_rate must be > 0, got {self.min_cost_rate}")
        if len(self.weight_mean) != len(self.factor_rates):
            raise DomainError("weight_mean and factor_rates must have the same length")
        if self.capacity_var < 0:
            raise DomainError(f"capacity variance must be >= 0, got {self.capacity_var}")
        if self.family not in (LINEAR, QUADRATIC):
            raise DomainError(f"unknown population family: {self.family!r}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "PopulationSpec":
        return cls(
            n=int(data.get("N", data.get("n", 500))),
            weight_mean=tuple(data.get("weight_mean", DEFAULT_WEIGHT_MEAN)),
            weight_cov_scale=float(data.get("weight_cov_scale", 0.3)),
            factor_rates=tuple(data.get("factor_rates", DEFAULT_FACTOR_RATES)),
            capacity_mean=float(data.get("capacity_mean", 3.5)),
            capacity_var=float(data.get("capacity_var", 0.3)),
            seed=int(data.get("seed", 0)),
            family=data.get("family", LINEAR),
            min_cost_rate=float(data.get("min_cost_rate", DEFAULT_MIN_COST_RATE)),
        )

    def to_dict(self) -> Dict:
        return {
            "N": self.n,
            "weight_mean": list(self.weight_mean),
            "weight_cov_scale": self.weight_cov_scale,
            "factor_rates": list(self.factor_rates),
            "capacity_mean": self.capacity_mean,
            "capacity_var": self.capacity_var,
            "seed": self.seed,
            "family": self.family,
            "min_cost_rate": self.min_cost_rate,
        }


def sample_population(spec: PopulationSpec, seed: Optional[int] = None,
                      od_count: int = 1, horizon: int = 1,
                      covariance: Optional[np.ndarray] = None) -> List[Passenger]:
    """
    Draw N passengers. Weights are multivariate normal and capacities
    normal, both clamped at 0. Each passenger keeps one home OD pair for
    the whole horizon.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    dim = len(spec.weight_mean)
    mean = np.asarray(spec.weight_mean, dtype=float)
    cov = np.eye(dim) * spec.weight_cov_scale if covariance is None else np.asarray(covariance, dtype=float)
    if cov.shape != (dim, dim) or not np.allclose(cov, cov.T):
        raise DomainError("weight covariance must be a symmetric matrix matching the weight mean")
    if np.linalg.eigvalsh(cov).min() < -1e-12:
        raise DomainError("weight covariance is not positive semidefinite")

    if spec.n == 0:
        return []

    weights = np.clip(rng.multivariate_normal(mean, cov, size=spec.n, method="eigh"), 0.0, None)
    capacities = np.clip(rng.normal(spec.capacity_mean, np.sqrt(spec.capacity_var), size=spec.n), 0.0, None)
    homes = rng.integers(0, od_count, size=spec.n)
    rates = tuple(float(f) for f in spec.factor_rates)

    population = []
    for i in range(spec.n):
        w = tuple(float(v) for v in weights[i])
        if spec.family == LINEAR:
            cost = CostFunction.linear(w, rates)
        else:
            cost = CostFunction.quadratic(max(float(np.dot(w, rates)), spec.min_cost_rate) / 2.0)
        s = int(homes[i])
        population.append(Passenger(id=i, costs={s: cost}, capacity=float(capacities[i]), local_od=(s,) * horizon))

    logger.debug(f"Sampled {spec.n} passengers over {od_count} OD pairs (family={spec.family})")
    return population
