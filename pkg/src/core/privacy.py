#!/usr/bin/env python3
"""
Privacy Verification
====================

Measurement side of the mechanisms:
- Laplace noise by inverse CDF, and exact Laplace interval masses
- Differential-privacy ratio checks on adjacent inputs, exact by
  enumeration or sampled with Wilson confidence intervals
- Min-entropy leakage of the auction (exact) and of the posted prices
  (Monte Carlo over binned price observations)
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binomtest

from core.model import (
    BidProfile,
    CostFunction,
    DomainError,
    InstanceTooLargeError,
    Passenger,
    Scenario,
)

logger = logging.getLogger(__name__)

LEAKAGE_SPACE_CAP = 10 ** 4
_LOG_HALF = math.log(0.5)


def laplace_sample(scale: float, rng: Optional[np.random.Generator] = None, u=None, size=None):
    """
    Inverse-CDF Laplace(0, scale) draw. Pass `u` in (0, 1) to evaluate the
    inverse CDF directly.
    """
    if not scale > 0:
        raise DomainError(f"Laplace scale must be > 0, got {scale}")
    if u is None:
        if rng is None:
            raise DomainError("laplace_sample needs an rng or a uniform draw")
        u = rng.uniform(np.finfo(float).tiny, 1.0, size=size)
    centered = np.asarray(u, dtype=float) - 0.5
    draw = -scale * np.sign(centered) * np.log1p(-2.0 * np.abs(centered))
    return float(draw) if np.ndim(draw) == 0 else draw


def step_epsilon(epsilon: float, eta_1: float) -> float:
    """Privacy level (1 - eta_1) epsilon that each perturbed price update must meet"""
    if not 0 <= eta_1 < 1:
        raise DomainError(f"private price updates need 0 <= eta_1 < 1, got eta_1={eta_1}")
    if not epsilon > 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    return (1.0 - eta_1) * epsilon


def laplace_log_mass(lo, hi, loc, scale: float) -> np.ndarray:
    """log P(lo <= loc + Laplace(scale) < hi), stable in both tails"""
    lo, hi, loc = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float), np.asarray(loc, float))
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        tail = np.log1p(-np.exp(-(hi - lo) / scale))
        right = _LOG_HALF - (lo - loc) / scale + tail
        left = _LOG_HALF - (loc - hi) / scale + tail
        middle = np.log1p(-0.5 * np.exp(-(loc - lo) / scale) - 0.5 * np.exp(-(hi - loc) / scale))
        return np.where(lo >= loc, right, np.where(hi <= loc, left, middle))


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion"""
    if trials <= 0:
        raise DomainError("Wilson interval needs at least one trial")
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class AdjacentPair:
    """Two inputs differing only in one passenger's entry"""
    first: Any
    second: Any
    index: int

    def __post_init__(self):
        if isinstance(self.first, BidProfile) and isinstance(self.second, BidProfile):
            self._check_bids()
        elif isinstance(self.first, Scenario) and isinstance(self.second, Scenario):
            self._check_scenarios()

    def _check_bids(self):
        a, b = self.first, self.second
        if a.shape != b.shape:
            raise DomainError("adjacent bid profiles must share a shape")
        others = np.ones(a.shape[0], dtype=bool)
        others[self.index] = False
        for x, y in ((a.q, b.q), (a.claimed, b.claimed), (a.mask, b.mask)):
            if not np.array_equal(x[others], y[others]):
                raise DomainError(f"bid profiles differ outside passenger {self.index}")

    def _check_scenarios(self):
        a, b = self.first, self.second
        if a.N != b.N or a.S != b.S or a.T != b.T:
            raise DomainError("adjacent scenarios must share N, S and T")
        if not (np.array_equal(a.demand, b.demand) and np.array_equal(a.penalty, b.penalty)):
            raise DomainError("adjacent scenarios must share demand and penalties")
        for i, (p, q) in enumerate(zip(a.population, b.population)):
            if i != self.index and p != q:
                raise DomainError(f"scenarios differ in passenger {i}, not only {self.index}")


@dataclass(frozen=True)
class IntervalPartition:
    """Cells [origin + k w, origin + (k + 1) w) over the real line"""
    width: float
    origin: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise DomainError(f"cell width must be > 0, got {self.width}")

    def cells(self, values: np.ndarray) -> np.ndarray:
        return np.floor((np.asarray(values, dtype=float) - self.origin) / self.width).astype(np.int64)


@dataclass
class DPCheckReport:
    """Largest observed |ln Pr1(L) / Pr2(L)| over the outcome cells"""
    mode: str
    max_log_ratio: float
    interval: Optional[Tuple[float, float]] = None
    cells: List[Dict] = field(default_factory=list)
    merged_cells: int = 0

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode,
            "max_log_ratio": self.max_log_ratio,
            "interval": list(self.interval) if self.interval else None,
            "merged_cells": self.merged_cells,
            "cells": self.cells,
        }


class ExactSelectionMechanism:
    """Exponential-mechanism selection at one time step with a fixed Delta"""

    def __init__(self, sc: Scenario, t: int, params, delta: Optional[float] = None, cap: Optional[int] = None):
        self.sc = sc
        self.t = t
        self.params = params
        self.delta = delta
        self.cap = cap

    def _distribution(self, B: BidProfile):
        from core.auction import exact_distribution
        return exact_distribution(B, self.sc, self.t, self.params, self.delta, self.cap)

    def _codes(self, assignments: np.ndarray) -> np.ndarray:
        base = (self.sc.S + 1) ** np.arange(assignments.shape[1], dtype=np.int64)
        return (assignments + 1) @ base

    def outcome_distribution(self, B: BidProfile) -> Dict[int, float]:
        dist = self._distribution(B)
        return dict(zip(self._codes(dist.assignments).tolist(), dist.prob.tolist()))

    def sample(self, B: BidProfile, rng: np.random.Generator, n: int) -> np.ndarray:
        dist = self._distribution(B)
        picks = rng.choice(dist.size, size=n, p=dist.prob / dist.prob.sum())
        return self._codes(dist.assignments)[picks]


class OneStepPriceMechanism:
    """
    First private price update for OD pair s: p* = update(p_1, responses),
    published unclipped as p* + Laplace(delta_p / ((1 - eta) epsilon)).
    `bound` is the log-ratio the release must respect.
    """

    def __init__(self, p_init: float, eta: float, delta_p: float, epsilon: float,
                 s: int = 0, t: int = 0, mode: str = "verbatim", p_cap: float = math.inf):
        if not epsilon > 0 or not delta_p > 0:
            raise DomainError("one-step price mechanism needs epsilon > 0 and delta_p > 0")
        self.bound = step_epsilon(epsilon, eta)
        self.p_init = p_init
        self.eta = eta
        self.delta_p = delta_p
        self.epsilon = epsilon
        self.s = s
        self.t = t
        self.mode = mode
        self.p_cap = p_cap

    @property
    def scale(self) -> float:
        return self.delta_p / self.bound

    def target(self, sc: Scenario) -> float:
        from core.pricing import aggregate_response, feedback_from, ogd_update
        prices = np.full(sc.S, self.p_init)
        record = aggregate_response(sc, prices, self.t)
        feedback = feedback_from(record, sc.demand[:, self.t])[self.s]
        return ogd_update(self.p_init, feedback, self.eta, self.mode, sc.penalty[self.s], self.p_cap)

    def outcome_distribution(self, sc: Scenario, partition: IntervalPartition, reach: float = 40.0) -> Dict:
        """Exact cell masses within `reach` scales of the target, tails lumped"""
        center = self.target(sc)
        first = int(partition.cells(center - reach * self.scale))
        last = int(partition.cells(center + reach * self.scale))
        return self._cell_masses(center, partition, first, last)

    def _cell_masses(self, center: float, partition: IntervalPartition, first: int, last: int) -> Dict:
        cells = np.arange(first, last + 1)
        lo = partition.origin + cells * partition.width
        masses = dict(zip(cells.tolist(), np.exp(laplace_log_mass(lo, lo + partition.width, center, self.scale)).tolist()))
        masses["below"] = float(np.exp(laplace_log_mass(-np.inf, lo[0], center, self.scale)))
        masses["above"] = float(np.exp(laplace_log_mass(lo[-1] + partition.width, np.inf, center, self.scale)))
        return masses

    def sample(self, sc: Scenario, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.target(sc) + laplace_sample(self.scale, rng, size=n)


def _pair_distributions(mechanism, pair: AdjacentPair, partition) -> Tuple[Dict, Dict]:
    if isinstance(mechanism, OneStepPriceMechanism):
        if partition is None:
            raise DomainError("price mechanism needs an interval partition")
        c1, c2 = mechanism.target(pair.first), mechanism.target(pair.second)
        reach = 40.0 * mechanism.scale
        first = int(partition.cells(min(c1, c2) - reach))
        last = int(partition.cells(max(c1, c2) + reach))
        return (mechanism._cell_masses(c1, partition, first, last),
                mechanism._cell_masses(c2, partition, first, last))
    d1 = mechanism.outcome_distribution(pair.first)
    d2 = mechanism.outcome_distribution(pair.second)
    if partition is not None:
        d1, d2 = _coarsen(d1, partition), _coarsen(d2, partition)
    return d1, d2


def _coarsen(dist: Dict, partition: Callable) -> Dict:
    out: Dict = {}
    for label, p in dist.items():
        cell = partition(label)
        out[cell] = out.get(cell, 0.0) + p
    return out


def _exact_check(d1: Dict, d2: Dict) -> DPCheckReport:
    cells = []
    merged = [0.0, 0.0]
    merged_count = 0
    worst = 0.0
    for cell in sorted(set(d1) | set(d2), key=str):
        p1, p2 = d1.get(cell, 0.0), d2.get(cell, 0.0)
        if p1 == 0.0 or p2 == 0.0:
            merged[0] += p1
            merged[1] += p2
            merged_count += 1
            continue
        ratio = abs(math.log(p1) - math.log(p2))
        worst = max(worst, ratio)
        cells.append({"cell": str(cell), "p_first": p1, "p_second": p2, "log_ratio": ratio})
    if merged_count:
        if merged[0] > 0 and merged[1] > 0:
            ratio = abs(math.log(merged[0]) - math.log(merged[1]))
        elif merged[0] == 0 and merged[1] == 0:
            ratio = 0.0
        else:
            ratio = math.inf
        worst = max(worst, ratio)
        cells.append({"cell": "merged", "p_first": merged[0], "p_second": merged[1], "log_ratio": ratio})
    return DPCheckReport("exact", worst, None, cells, merged_count)


def _sampled_check(x1: np.ndarray, x2: np.ndarray, trials: int, confidence: float) -> DPCheckReport:
    labels1, counts1 = np.unique(x1, return_counts=True)
    labels2, counts2 = np.unique(x2, return_counts=True)
    c1 = dict(zip(labels1.tolist(), counts1.tolist()))
    c2 = dict(zip(labels2.tolist(), counts2.tolist()))
    cells = []
    worst, lower, upper = 0.0, 0.0, 0.0
    for cell in sorted(set(c1) | set(c2)):
        k1, k2 = c1.get(cell, 0), c2.get(cell, 0)
        lo1, hi1 = wilson_interval(k1, trials, confidence)
        lo2, hi2 = wilson_interval(k2, trials, confidence)
        with np.errstate(divide="ignore"):
            low_ratio = np.log(lo1) - np.log(hi2)
            high_ratio = np.log(hi1) - np.log(lo2)
        # bounds on |ln(p1 / p2)|
        cell_low = 0.0 if low_ratio <= 0 <= high_ratio else min(abs(low_ratio), abs(high_ratio))
        cell_high = max(abs(low_ratio), abs(high_ratio))
        point = abs(math.log(k1 / k2)) if k1 and k2 else math.inf
        if k1 and k2:
            worst = max(worst, point)
        lower, upper = max(lower, cell_low), max(upper, cell_high)
        cells.append({"cell": str(cell), "count_first": k1, "count_second": k2,
                      "log_ratio": point, "low": float(cell_low), "high": float(cell_high)})
    return DPCheckReport("sampled", worst, (float(lower), float(upper)), cells)


def dp_ratio_check(mechanism, pair: AdjacentPair, partition=None, trials: Optional[int] = None,
                   rng: Optional[np.random.Generator] = None, confidence: float = 0.95) -> DPCheckReport:
    """
    Largest log-ratio of outcome probabilities between the pair's inputs.
    Exact mode (trials None) enumerates the outcome distribution; cells
    with zero probability on either side are merged into one. Sampled mode
    reports a Wilson-interval range, never a single verdict.
    """
    if trials is None:
        d1, d2 = _pair_distributions(mechanism, pair, partition)
        report = _exact_check(d1, d2)
    else:
        if rng is None:
            raise DomainError("sampled DP check needs an rng")
        x1 = mechanism.sample(pair.first, rng, trials)
        x2 = mechanism.sample(pair.second, rng, trials)
        if partition is not None:
            cells = partition.cells if isinstance(partition, IntervalPartition) else np.vectorize(partition)
            x1, x2 = cells(x1), cells(x2)
        report = _sampled_check(np.asarray(x1), np.asarray(x2), trials, confidence)
    logger.debug(f"DP check ({report.mode}): max log-ratio {report.max_log_ratio:.6g}")
    return report


@dataclass
class LeakageReport:
    """Min-entropy leakage in bits under a uniform prior"""
    prior_entropy: float
    posterior_entropy: float
    leakage: float
    inputs: int
    outputs: int
    stderr: float = 0.0
    samples: int = 0
    horizon: Optional[int] = None

    def to_dict(self) -> Dict:
        return {
            "prior_entropy": self.prior_entropy,
            "posterior_entropy": self.posterior_entropy,
            "leakage_bits": self.leakage,
            "stderr_bits": self.stderr,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "samples": self.samples,
            "horizon": self.horizon,
        }


def leakage_from_channel(prior: np.ndarray, channel: np.ndarray) -> LeakageReport:
    """H_inf(V) - H_inf(V | Y) for a discrete channel Pr(y | v)"""
    prior = np.asarray(prior, dtype=float)
    channel = np.asarray(channel, dtype=float)
    if channel.ndim != 2 or channel.shape[0] != prior.size:
        raise DomainError(f"channel shape {channel.shape} does not match prior of size {prior.size}")
    prior_entropy = -math.log2(prior.max())
    vulnerability = float(np.sum(np.max(prior[:, None] * channel, axis=0)))
    posterior_entropy = -math.log2(vulnerability)
    leakage = min(max(prior_entropy - posterior_entropy, 0.0), prior_entropy)
    return LeakageReport(prior_entropy, posterior_entropy, leakage, prior.size, channel.shape[1])


def _uniform_leakage(ratio_mean: float, inputs: int, outputs: int, stderr: float,
                     samples: int, horizon: int) -> LeakageReport:
    prior_entropy = math.log2(inputs)
    leakage = min(max(math.log2(ratio_mean), 0.0), prior_entropy)
    return LeakageReport(prior_entropy, prior_entropy - leakage, leakage, inputs, outputs, stderr, samples, horizon)


def min_entropy_two_way(sc: Scenario, base: BidProfile, levels: Sequence, params, t: int = 0,
                        space_cap: int = LEAKAGE_SPACE_CAP, cap: Optional[int] = None) -> LeakageReport:
    """
    Exact leakage of the exponential-mechanism selection about the claimed
    costs. Every bidder at t draws its claimed cost from `levels` (shared,
    or one list per bidder); bid offloads stay as in `base`.
    """
    from core.auction import exact_distribution, sensitivity_delta_over

    bidders = [int(i) for i in np.nonzero(base.mask[:, :, t].any(axis=1))[0]]
    per_bidder = list(levels) if len(levels) and isinstance(levels[0], (list, tuple)) else [list(levels)] * len(bidders)
    if len(per_bidder) != len(bidders):
        raise DomainError(f"{len(per_bidder)} level lists for {len(bidders)} bidders")
    size = math.prod(len(choices) for choices in per_bidder)
    if size > space_cap:
        raise InstanceTooLargeError(f"bid space of {size} profiles exceeds {space_cap}")

    profiles = []
    for combo in itertools.product(*per_bidder):
        B = base
        for i, cost in zip(bidders, combo):
            B = B.with_claimed(i, t, float(cost))
        profiles.append(B)

    delta = sensitivity_delta_over(profiles, sc, t, cap)
    channel = np.array([exact_distribution(B, sc, t, params, delta, cap).prob for B in profiles])
    return leakage_from_channel(np.full(len(profiles), 1.0 / len(profiles)), channel)


def _profile_scenarios(sc: Scenario, cost_space: Sequence[Sequence[CostFunction]]) -> List[Scenario]:
    if len(cost_space) != sc.N:
        raise DomainError(f"cost space lists {len(cost_space)} passengers, scenario has {sc.N}")
    size = math.prod(len(choices) for choices in cost_space)
    if size > LEAKAGE_SPACE_CAP:
        raise InstanceTooLargeError(f"cost space of {size} profiles exceeds {LEAKAGE_SPACE_CAP}")
    scenarios = []
    for combo in itertools.product(*cost_space):
        population = [
            Passenger(p.id, {s: cost for s in p.costs}, p.capacity, p.local_od)
            for p, cost in zip(sc.population, combo)
        ]
        scenarios.append(sc.replace_population(population))
    return scenarios


def _noiseless_curve(scenarios: List[Scenario], params, horizons: Sequence[int]) -> List[LeakageReport]:
    from core.pricing import run_one_way
    from dataclasses import replace

    quiet = replace(params, dp=False)
    paths = []
    T = max(horizons)
    for scen in scenarios:
        trimmed = scen.truncated(T)
        paths.append(run_one_way(trimmed, quiet, np.random.default_rng(0)).published)
    reports = []
    K = len(scenarios)
    for horizon in horizons:
        distinct = {np.round(path[:, :horizon], 12).tobytes() for path in paths}
        reports.append(_uniform_leakage(len(distinct), K, len(distinct), 0.0, 0, horizon))
    return reports


def min_entropy_one_way_curve(sc: Scenario, cost_space: Sequence[Sequence[CostFunction]], params,
                              horizons: Sequence[int], samples: int = 2000,
                              rng: Optional[np.random.Generator] = None) -> List[LeakageReport]:
    """
    Leakage of the published price sequence about the cost profile for each
    horizon, with common random numbers across horizons. Prices are
    published on cells of width delta_p / 10; the observer's likelihood of
    a cell sequence is exact, the average over sequences is Monte Carlo.
    """
    from core.pricing import _respond, od_feedback, ogd_update, price_sensitivity

    horizons = sorted(int(h) for h in horizons)
    if not horizons or horizons[0] < 0 or horizons[-1] > sc.T:
        raise DomainError(f"horizons must lie in 0..{sc.T}")
    scenarios = _profile_scenarios(sc, cost_space)
    K = len(scenarios)
    T_max = horizons[-1]
    if T_max == 0:
        return [_uniform_leakage(1.0, K, 1, 0.0, 0, 0) for _ in horizons]
    if not params.dp or math.isinf(params.epsilon):
        return _noiseless_curve(scenarios, params, horizons)

    rng = rng if rng is not None else np.random.default_rng(0)
    eta = params.eta.values(T_max)
    delta_p = max(price_sensitivity(scen, float(eta[0]), params.delta_p_min, params.mode, params.p_cap)
                  for scen in scenarios)
    scale = delta_p / step_epsilon(params.epsilon, float(eta[0]))
    width = delta_p / 10.0
    top_cell = max(int(math.ceil(params.p_cap / width)) - 1, 0)
    S, M = sc.S, samples

    truth = rng.integers(K, size=M)
    targets = np.full((K, M, S), params.p_init)
    loglik = np.zeros((K, M))
    reports = [_uniform_leakage(1.0, K, 1, 0.0, M, 0) for h in horizons if h == 0]
    pending = [h for h in horizons if h > 0]

    for t in range(T_max):
        shown = targets[truth, np.arange(M)] + laplace_sample(scale, rng, size=(M, S))
        cells = np.clip(np.floor(shown / width), 0, top_cell)
        lo = np.where(cells == 0, -np.inf, cells * width)
        hi = np.where(cells == top_cell, np.inf, (cells + 1) * width)
        for k in range(K):
            loglik[k] += laplace_log_mass(lo, hi, targets[k], scale).sum(axis=1)
        published = np.minimum(cells * width, params.p_cap)

        while pending and pending[0] == t + 1:
            ratio = K * np.exp(loglik.max(axis=0) - logsumexp(loglik, axis=0))
            mean = float(ratio.mean())
            stderr = float(ratio.std(ddof=1) / math.sqrt(M) / (mean * math.log(2))) if M > 1 else 0.0
            reports.append(_uniform_leakage(mean, K, top_cell + 1, stderr, M, pending.pop(0)))

        if t == T_max - 1:
            break
        for k, scen in enumerate(scenarios):
            od, family, slope, a, b, capacity = scen.cost_arrays.at(t)
            q, gradient, h, _ = _respond(family, slope, a, b, capacity, published[:, od])
            feedback = od_feedback(od, q, gradient, h, scen.demand[:, t], S)
            targets[k] = ogd_update(published, feedback, float(eta[t]), params.mode, scen.penalty, params.p_cap)

    logger.info(f"One-way leakage over {K} cost profiles, {M} samples: "
                + ", ".join(f"T={r.horizon}: {r.leakage:.4f}" for r in reports))
    return reports


def min_entropy_one_way(sc: Scenario, cost_space: Sequence[Sequence[CostFunction]], params, T: int,
                        samples: int = 2000, rng: Optional[np.random.Generator] = None) -> LeakageReport:
    return min_entropy_one_way_curve(sc, cost_space, params, [T], samples, rng)[0]
