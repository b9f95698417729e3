#!/usr/bin/env python3
"""
Private Reverse Auction
=======================

Two-way communication mechanisms. The government collects bids (offload,
claimed cost) and picks passengers to fill each OD pair's offload demand.

Exact mechanism:
- Enumerates every feasible selection profile at a time step
- Samples one with probability proportional to exp(eps * welfare / 2 Delta)
- Pays each passenger an entropy-corrected share of the welfare

Efficient mechanism:
- Decomposes the problem per OD pair
- Draws winners one at a time with weights exp(eps' * (q - C))
- Pays each winner a closed-form threshold-style incentive
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax
from scipy.stats import entropy

from core.model import (
    BidProfile,
    DomainError,
    InfeasibleInstanceError,
    InstanceTooLargeError,
    Scenario,
    SelectionProfile,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AuctionParams:
    """Privacy parameters of the auction"""
    epsilon: float
    delta: float = 0.1
    strict_cardinality: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")

    @property
    def eps_prime(self) -> float:
        return self.epsilon / (math.e * math.log(math.e / self.delta))


@dataclass
class SelectionDraw:
    """Winners of one decomposed sub-auction"""
    winners: List[int]
    covered: float
    demand: float

    @property
    def deficit(self) -> float:
        return max(self.demand - self.covered, 0.0)


@dataclass
class AuctionOutcome:
    """Selection profile, payments and accounting of one auction run"""
    selection: SelectionProfile
    payments: np.ndarray
    welfare: float
    winners: Dict[Tuple[int, int], List[int]]
    deficits: np.ndarray
    welfare_by_od: np.ndarray
    offload: np.ndarray
    ir_violations: int = 0
    mechanism: str = "efficient"
    sensitivity: float = 0.0

    def summary(self) -> Dict:
        return {
            "mechanism": self.mechanism,
            "welfare": float(self.welfare),
            "total_payment": float(np.sum(self.payments)),
            "selected": int(np.sum(self.selection.x)),
            "deficit_cells": int(np.count_nonzero(self.deficits > 0)),
            "total_deficit": float(np.sum(self.deficits)),
            "ir_violations": int(self.ir_violations),
            "sensitivity": float(self.sensitivity),
        }


@dataclass
class ExactDistribution:
    """The exponential-mechanism distribution over the feasible set at one step"""
    t: int
    assignments: np.ndarray  # (K, N) chosen OD per passenger, -1 for none
    welfare: np.ndarray      # (K,)
    log_prob: np.ndarray     # (K,)
    delta: float
    scale: float             # eps / (2 Delta), 0 when Delta is 0

    @property
    def prob(self) -> np.ndarray:
        return np.exp(self.log_prob)

    @property
    def size(self) -> int:
        return self.assignments.shape[0]

    def selection_probability(self, i: int) -> float:
        return float(np.sum(self.prob[self.assignments[:, i] >= 0]))

    def profile(self, k: int, S: int) -> SelectionProfile:
        return SelectionProfile.from_assignment(self.assignments[k], S, self.t)


def _exact_cap(cap: Optional[int]) -> int:
    if cap is not None:
        return cap
    from config.settings import get_settings
    return get_settings().exact_cap


def _feasible_assignments(B: BidProfile, sc: Scenario, t: int, cap: Optional[int] = None) -> np.ndarray:
    """All assignments at t meeting one-OD-per-passenger and demand coverage"""
    N, S, T = B.shape
    if S != sc.S or not 0 <= t < T:
        raise DomainError(f"bid profile shape {B.shape} does not fit scenario (S={sc.S}) at t={t}")
    cap = _exact_cap(cap)
    options = [[-1] + [int(s) for s in np.nonzero(B.mask[i, :, t])[0]] for i in range(N)]
    candidates = math.prod(len(o) for o in options)
    if candidates > cap:
        raise InstanceTooLargeError(f"instance too large for exact mode: {candidates} candidate profiles exceed cap {cap}")

    grid = np.array(list(itertools.product(*options)), dtype=np.int64).reshape(candidates, N)
    q = B.q[:, :, t]
    keep = np.ones(candidates, dtype=bool)
    for s in range(S):
        covered = (grid == s) @ q[:, s]
        keep &= covered >= sc.demand[s, t]
    return grid[keep]


def _assignment_welfare(assignments: np.ndarray, B: BidProfile, t: int) -> np.ndarray:
    N, S, _ = B.shape
    terms = np.zeros((N, S + 1))
    terms[:, :S] = B.welfare_terms[:, :, t]
    # -1 indexes the zero column
    return terms[np.arange(N), assignments].sum(axis=1)


def enumerate_feasible(B: BidProfile, sc: Scenario, t: int, cap: Optional[int] = None) -> List[SelectionProfile]:
    """Every selection profile satisfying the feasibility constraints at t"""
    return [SelectionProfile.from_assignment(a, sc.S, t) for a in _feasible_assignments(B, sc, t, cap)]


def sensitivity_delta(B: BidProfile, sc: Scenario, t: int, mode: str = "exact", cap: Optional[int] = None) -> float:
    """
    Welfare range Delta. Exact mode enumerates the feasible set; bound mode
    uses sum_i max_s max(0, q - C) minus 0.
    """
    if mode == "bound":
        terms = np.clip(B.welfare_terms[:, :, t], 0.0, None)
        return float(terms.max(axis=1).sum())
    if mode != "exact":
        raise DomainError(f"unknown sensitivity mode: {mode!r}")
    assignments = _feasible_assignments(B, sc, t, cap)
    if assignments.shape[0] == 0:
        raise InfeasibleInstanceError(f"no feasible selection profile at t={t}")
    welfare = _assignment_welfare(assignments, B, t)
    return float(welfare.max() - welfare.min())


def sensitivity_delta_over(profiles: Sequence[BidProfile], sc: Scenario, t: int, cap: Optional[int] = None) -> float:
    """
    Welfare range over a family of bid profiles with identical offloads.
    Fixing Delta this way keeps the mechanism's scale constant across
    adjacent inputs and unilateral misreports.
    """
    if not profiles:
        raise DomainError("no bid profiles given")
    assignments = _feasible_assignments(profiles[0], sc, t, cap)
    if assignments.shape[0] == 0:
        raise InfeasibleInstanceError(f"no feasible selection profile at t={t}")
    high, low = -np.inf, np.inf
    for B in profiles:
        if not (np.array_equal(B.mask, profiles[0].mask) and np.array_equal(B.q, profiles[0].q)):
            raise DomainError("profiles must share bid offloads and masks")
        welfare = _assignment_welfare(assignments, B, t)
        high, low = max(high, welfare.max()), min(low, welfare.min())
    return float(high - low)


def _gibbs(welfare: np.ndarray, epsilon: float, delta: float) -> Tuple[np.ndarray, float]:
    scale = epsilon / (2.0 * delta) if delta > 0 else 0.0
    logits = scale * welfare
    return logits - logsumexp(logits), scale


def exact_distribution(B: BidProfile, sc: Scenario, t: int, params: AuctionParams,
                       delta: Optional[float] = None, cap: Optional[int] = None) -> ExactDistribution:
    """Pr(X) proportional to exp(eps * Omega(X, B) / 2 Delta) over the feasible set"""
    assignments = _feasible_assignments(B, sc, t, cap)
    if assignments.shape[0] == 0:
        raise InfeasibleInstanceError(f"no feasible selection profile at t={t}")
    welfare = _assignment_welfare(assignments, B, t)
    if delta is None:
        delta = float(welfare.max() - welfare.min())
    log_prob, scale = _gibbs(welfare, params.epsilon, delta)
    return ExactDistribution(t, assignments, welfare, log_prob, delta, scale)


def exact_select(B: BidProfile, sc: Scenario, t: int, params: AuctionParams, rng: np.random.Generator,
                 delta: Optional[float] = None, cap: Optional[int] = None) -> SelectionProfile:
    dist = exact_distribution(B, sc, t, params, delta, cap)
    k = int(rng.choice(dist.size, p=dist.prob / dist.prob.sum()))
    return dist.profile(k, sc.S)


def exact_payment(B: BidProfile, sc: Scenario, t: int, i: int, params: AuctionParams,
                  delta: Optional[float] = None, cap: Optional[int] = None,
                  dist: Optional[ExactDistribution] = None) -> float:
    """
    Expected incentive for passenger i:

        E_D[sum_j q x - sum_{j != i} C x] + tau * H(D) - tau * ln Z_{-i}

    with tau = 2 Delta / eps, H the natural-log entropy of the mechanism's
    distribution D and Z_{-i} the partition function without passenger i.
    """
    N = B.shape[0]
    if not 0 <= i < N:
        raise DomainError(f"passenger {i} is not in the bid profile (N={N})")
    if not B.mask[i, :, t].any():
        return 0.0

    if dist is None:
        dist = exact_distribution(B, sc, t, params, delta, cap)
    prob = dist.prob

    rows = np.arange(N)
    q_sel = np.zeros((N, sc.S + 1))
    c_sel = np.zeros((N, sc.S + 1))
    q_sel[:, :sc.S] = B.q[:, :, t]
    c_sel[:, :sc.S] = B.claimed[:, :, t]
    c_sel[i] = 0.0
    transfer = q_sel[rows, dist.assignments].sum(axis=1) - c_sel[rows, dist.assignments].sum(axis=1)
    expected = float(np.dot(prob, transfer))

    others = B.without(i)
    rest = _feasible_assignments(others, sc, t, cap)
    if rest.shape[0] == 0:
        raise InfeasibleInstanceError(f"payment undefined: demand at t={t} cannot be met without passenger {i}")
    if dist.delta == 0:
        return expected

    tau = 1.0 / dist.scale
    log_z_rest = logsumexp(dist.scale * _assignment_welfare(rest, others, t))
    return expected + tau * float(entropy(prob)) - tau * float(log_z_rest)


def run_exact(B: BidProfile, sc: Scenario, params: AuctionParams, rng: np.random.Generator,
              cap: Optional[int] = None) -> AuctionOutcome:
    """
    Exact mechanism over every time step. The realized payment of a
    selected passenger is its expected incentive over its selection
    probability, so the ex-ante transfer matches the expected incentive.
    """
    N, S, T = B.shape
    x = np.zeros((N, S, T), dtype=np.int8)
    payments = np.zeros((N, S, T))
    deficits = np.zeros((S, T))
    welfare_by_od = np.zeros((S, T))
    winners: Dict[Tuple[int, int], List[int]] = {}
    ir_violations = 0
    max_delta = 0.0

    for t in range(T):
        dist = exact_distribution(B, sc, t, params, cap=cap)
        max_delta = max(max_delta, dist.delta)
        k = int(rng.choice(dist.size, p=dist.prob / dist.prob.sum()))
        chosen = dist.assignments[k]
        for i in np.nonzero(chosen >= 0)[0]:
            s = int(chosen[i])
            x[i, s, t] = 1
            winners.setdefault((s, t), []).append(int(i))
            expected = exact_payment(B, sc, t, int(i), params, cap=cap, dist=dist)
            payments[i, s, t] = expected / dist.selection_probability(int(i))
            welfare_by_od[s, t] += B.q[i, s, t] - B.claimed[i, s, t]
            if payments[i, s, t] < B.claimed[i, s, t]:
                ir_violations += 1
        deficits[:, t] = np.clip(sc.demand[:, t] - np.sum(x[:, :, t] * B.q[:, :, t], axis=0), 0.0, None)
        logger.debug(f"t={t}: exact draw from {dist.size} profiles (Delta={dist.delta:.6g})")

    outcome = AuctionOutcome(
        selection=SelectionProfile(x),
        payments=payments,
        welfare=float(welfare_by_od.sum()),
        winners=winners,
        deficits=deficits,
        welfare_by_od=welfare_by_od,
        offload=np.sum(x * B.q, axis=0),
        ir_violations=ir_violations,
        mechanism="exact",
        sensitivity=max_delta,
    )
    return outcome


def selection_probabilities(welfare: np.ndarray, eps_prime: float) -> np.ndarray:
    """Single-draw weights proportional to exp(eps' * (q - C))"""
    return softmax(eps_prime * np.asarray(welfare, dtype=float))


def decomposed_select(B: BidProfile, sc: Scenario, s: int, t: int, params: AuctionParams,
                      rng: np.random.Generator, exclude: Iterable[int] = ()) -> SelectionDraw:
    """
    Draw winners for OD pair s at time t one at a time until the demand is
    covered or the pool runs dry. Strict-cardinality mode keeps drawing
    while |W| <= Q instead.
    """
    demand = float(sc.demand[s, t])
    excluded = set(exclude)
    pool = [int(i) for i in np.nonzero(B.mask[:, s, t])[0] if int(i) not in excluded]
    terms = B.welfare_terms[:, s, t]
    winners: List[int] = []
    covered = 0.0

    def keep_going() -> bool:
        if params.strict_cardinality:
            return len(winners) <= demand
        return covered < demand

    while pool and keep_going():
        weights = selection_probabilities(terms[pool], params.eps_prime)
        k = int(rng.choice(len(pool), p=weights))
        i = pool.pop(k)
        winners.append(i)
        covered += float(B.q[i, s, t])

    draw = SelectionDraw(winners, covered, demand)
    if draw.deficit > 0:
        logger.debug(f"OD {s}, t={t}: pool exhausted with deficit {draw.deficit:.6g}")
    return draw


def efficient_payment(q: float, claimed_cost: float, eps_prime: float) -> float:
    """
    r = (q + z) exp(eps' (q - C)) - integral_0^{q+z} exp(eps' y) dy
    with z = C / exp(eps' (q - C)). May be negative.
    """
    if q < 0 or claimed_cost < 0:
        raise DomainError(f"payment needs q >= 0 and C >= 0, got q={q}, C={claimed_cost}")
    if not eps_prime > 0:
        raise DomainError(f"eps' must be > 0, got {eps_prime}")
    growth = math.exp(eps_prime * (q - claimed_cost))
    upper = q + claimed_cost / growth
    return upper * growth - math.expm1(eps_prime * upper) / eps_prime


def privacy_guarantee(params: AuctionParams, delta: float, S: int) -> Tuple[float, float]:
    """(eps Delta S / (e (e - 1)), delta S) guarantee of the efficient mechanism"""
    return params.epsilon * delta * S / (math.e * (math.e - 1.0)), params.delta * S


def run_two_way(B: BidProfile, sc: Scenario, params: AuctionParams, rng: np.random.Generator) -> AuctionOutcome:
    """
    Efficient mechanism: drop negative-welfare bids, then for each t run the
    per-OD sub-auctions in order s = 0..S-1, removing earlier winners from
    later pools.
    """
    N, S, T = B.shape
    if S != sc.S or T != sc.T:
        raise DomainError(f"bid profile shape {B.shape} does not fit scenario ({sc.S}, {sc.T})")
    bids = B.filtered(B.q - B.claimed >= 0)
    dropped = int(np.count_nonzero(B.mask) - np.count_nonzero(bids.mask))
    if dropped:
        logger.info(f"Filtered {dropped} negative-welfare bids")

    x = np.zeros((N, S, T), dtype=np.int8)
    payments = np.zeros((N, S, T))
    deficits = np.zeros((S, T))
    welfare_by_od = np.zeros((S, T))
    winners: Dict[Tuple[int, int], List[int]] = {}
    ir_violations = 0
    eps_prime = params.eps_prime

    for t in range(T):
        taken: set = set()
        for s in range(S):
            draw = decomposed_select(bids, sc, s, t, params, rng, exclude=taken)
            winners[(s, t)] = draw.winners
            deficits[s, t] = draw.deficit
            for i in draw.winners:
                q, claimed = float(bids.q[i, s, t]), float(bids.claimed[i, s, t])
                x[i, s, t] = 1
                payments[i, s, t] = efficient_payment(q, claimed, eps_prime)
                welfare_by_od[s, t] += q - claimed
                if payments[i, s, t] < claimed:
                    ir_violations += 1
            taken.update(draw.winners)

    sensitivity = max((sensitivity_delta(bids, sc, t, mode="bound") for t in range(T)), default=0.0)
    outcome = AuctionOutcome(
        selection=SelectionProfile(x),
        payments=payments,
        welfare=float(welfare_by_od.sum()),
        winners=winners,
        deficits=deficits,
        welfare_by_od=welfare_by_od,
        offload=np.sum(x * bids.q, axis=0),
        ir_violations=ir_violations,
        mechanism="efficient",
        sensitivity=sensitivity,
    )

    flagged = int(np.count_nonzero(deficits > 0))
    if flagged:
        logger.warning(f"Demand unmet in {flagged} of {S * T} (OD, t) cells")
    if ir_violations:
        logger.warning(f"{ir_violations} winners paid below their claimed cost")
    return outcome
