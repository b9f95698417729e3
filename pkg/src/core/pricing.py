#!/usr/bin/env python3
"""
Private Incentive Pricing
=========================

One-way communication mechanism. The government posts a price per OD pair
and time step, passengers answer with their best response, and prices are
updated by online gradient descent. Published prices can be perturbed
with Laplace noise calibrated to the price sensitivity.

Update modes:
    verbatim     - p <- max(p - eta * sum C'(q*), 0) over participants
    subgradient  - p <- p' - eta * (g.h / h.1 - beta * [deficit]) on [0, p_cap],
                   where p' = min(p, largest participant C'). Near the demand
                   kink the step is limited to the price change that closes
                   the gap between offload and demand.
"""

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from core.model import (
    FAMILY_LINEAR,
    FAMILY_QUADRATIC,
    LINEAR,
    QUADRATIC,
    DomainError,
    Passenger,
    Scenario,
    eval_gradient,
)
from core.privacy import laplace_sample, step_epsilon

logger = logging.getLogger(__name__)

VERBATIM = "verbatim"
SUBGRADIENT = "subgradient"
INV_SQRT = "inv_sqrt"
CONSTANT = "constant"

DEFAULT_P_CAP = 50.0
DEFAULT_GRID_STEP = 1e-3
DEFAULT_DELTA_P_MIN = 1e-6
# private runs need eta_1 < 1
DEFAULT_ETA_C = 0.5
_GRID_CHUNK = 4096


@dataclass(frozen=True)
class EtaSchedule:
    """Learning rates eta_t = c / sqrt(t) or eta_t = c"""
    kind: str = INV_SQRT
    c: float = DEFAULT_ETA_C

    def __post_init__(self):
        if self.kind not in (INV_SQRT, CONSTANT):
            raise DomainError(f"unknown learning-rate schedule: {self.kind!r}")
        if self.c < 0:
            raise DomainError(f"learning rate must be nonnegative, got c={self.c}")

    def values(self, T: int) -> np.ndarray:
        return eta_schedule(self.kind, self.c, T)


def eta_schedule(kind: str, c: float, T: int) -> np.ndarray:
    """eta_1..eta_T"""
    if c < 0:
        raise DomainError(f"learning rate must be nonnegative, got c={c}")
    steps = np.arange(1, T + 1, dtype=float)
    if kind == INV_SQRT:
        return c / np.sqrt(steps)
    if kind == CONSTANT:
        return np.full(T, float(c))
    raise DomainError(f"unknown learning-rate schedule: {kind!r}")


@dataclass(frozen=True)
class PricingParams:
    """Configuration of the closed pricing loop"""
    mode: str = SUBGRADIENT
    p_init: float = 0.02
    p_cap: float = DEFAULT_P_CAP
    eta: EtaSchedule = field(default_factory=EtaSchedule)
    dp: bool = False
    epsilon: float = math.inf
    delta_p_min: float = DEFAULT_DELTA_P_MIN
    grid_step: float = DEFAULT_GRID_STEP

    def __post_init__(self):
        if self.mode not in (VERBATIM, SUBGRADIENT):
            raise DomainError(f"unknown update mode: {self.mode!r}")
        if not self.p_cap > 0:
            raise DomainError(f"price cap must be > 0, got {self.p_cap}")
        if not 0 <= self.p_init <= self.p_cap:
            raise DomainError(f"initial price {self.p_init} outside [0, {self.p_cap}]")
        if self.dp and not self.epsilon > 0:
            raise DomainError(f"epsilon must be > 0, got {self.epsilon}")
        if self.private:
            step_epsilon(self.epsilon, self.eta.c)
        if not self.delta_p_min > 0:
            raise DomainError(f"delta_p_min must be > 0, got {self.delta_p_min}")

    @property
    def private(self) -> bool:
        return self.dp and not math.isinf(self.epsilon)

    @property
    def step_epsilon(self) -> float:
        """Privacy level each published price meets; eta_1 = c for both schedules"""
        return step_epsilon(self.epsilon, self.eta.c) if self.private else math.inf


@dataclass(frozen=True, eq=False)
class PriceSchedule:
    """Prices p[s, t] in [0, p_cap] and the learning rates that produced them"""
    prices: np.ndarray
    eta: np.ndarray
    p_cap: float = DEFAULT_P_CAP

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        if prices.ndim != 2:
            raise DomainError(f"prices must be (S, T), got shape {prices.shape}")
        if np.any(prices < 0) or np.any(prices > self.p_cap):
            raise DomainError(f"prices must lie in [0, {self.p_cap}]")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float))

    @classmethod
    def constant(cls, per_od: Sequence[float], T: int, p_cap: float = DEFAULT_P_CAP) -> "PriceSchedule":
        per_od = np.asarray(per_od, dtype=float)
        return cls(np.repeat(per_od[:, None], T, axis=1), np.ones(T), p_cap)


@dataclass(eq=False)
class ResponseRecord:
    """
    Passenger responses at one time step. Per-passenger arrays are indexed
    by population order; `od` is each passenger's local OD pair.
    """
    t: int
    prices: np.ndarray
    od: np.ndarray
    offload: np.ndarray
    gradient: np.ndarray
    slope: np.ndarray
    cost: np.ndarray
    S: int

    @property
    def participating(self) -> np.ndarray:
        return self.offload > 0

    def _per_od(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.od, weights=values, minlength=self.S)

    def total_offload(self) -> np.ndarray:
        return self._per_od(self.offload)

    def total_cost(self) -> np.ndarray:
        return self._per_od(self.cost)

    def grad_sum(self) -> np.ndarray:
        """g.1 over participating passengers"""
        return self._per_od(np.where(self.participating, self.gradient, 0.0))

    def g_dot_h(self) -> np.ndarray:
        return self._per_od(np.where(self.slope > 0, self.gradient * self.slope, 0.0))

    def h_sum(self) -> np.ndarray:
        return self._per_od(self.slope)

    def max_gradient(self) -> float:
        active = self.gradient[self.participating]
        return float(active.max()) if active.size else 0.0

    def utilities(self) -> np.ndarray:
        return self.prices[self.od] * self.offload - self.cost

    def deficit(self, demand: np.ndarray) -> np.ndarray:
        return np.clip(demand - self.total_offload(), 0.0, None)


@dataclass(frozen=True)
class Feedback:
    """
    What the government learns about one OD pair after posting a price.
    Fields are scalars for one OD pair or arrays over OD pairs.
    """
    grad_sum: float
    g_dot_h: float = 0.0
    h_sum: float = 0.0
    deficit: float = 0.0
    surplus: float = 0.0
    peak_gradient: float = math.inf   # largest participant C'; inf if nobody participates


def _respond(family, slope, a, b, capacity, price):
    """
    Vectorized best response. Returns offload, C'(q), right derivative of
    q in p, and C(q). Broadcasts price against the passenger arrays.
    """
    price = np.asarray(price, dtype=float)
    interior = (price - b) / (2.0 * a)
    q_quad = np.clip(interior, 0.0, capacity)
    q_lin = np.where(price >= slope, capacity, 0.0)
    is_lin = family == FAMILY_LINEAR
    is_quad = family == FAMILY_QUADRATIC
    q = np.where(is_quad, q_quad, np.where(is_lin, q_lin, 0.0))

    gradient = np.where(is_quad, 2.0 * a * q + b, np.where(is_lin, slope, 0.0))
    h = np.where(is_quad & (interior >= 0) & (interior < capacity), 1.0 / (2.0 * a), 0.0)
    with np.errstate(invalid="ignore"):
        cost = np.where(q > 0, np.where(is_quad, a * q * q + b * q, slope * q), 0.0)
    return q, gradient, h, cost


def best_response(passenger: Passenger, s: int, p: float) -> float:
    """argmax over q in [0, capacity] of p q - C(q); linear ties go to capacity"""
    if p < 0:
        raise DomainError(f"price must be nonnegative, got {p}")
    cost = passenger.cost_for(s)
    if cost is None:
        return 0.0
    if cost.family == LINEAR:
        return passenger.capacity if p >= cost.slope else 0.0
    return float(min(max((p - cost.b) / (2.0 * cost.a), 0.0), passenger.capacity))


def aggregate_response(sc: Scenario, prices: np.ndarray, t: int) -> ResponseRecord:
    """Best responses of every passenger to the price of its local OD at t"""
    prices = np.asarray(prices, dtype=float)
    if prices.shape != (sc.S,):
        raise DomainError(f"prices must have shape ({sc.S},), got {prices.shape}")
    if np.any(prices < 0):
        raise DomainError("prices must be nonnegative")
    od, family, slope, a, b, capacity = sc.cost_arrays.at(t)
    q, gradient, h, cost = _respond(family, slope, a, b, capacity, prices[od])
    return ResponseRecord(t, prices, od, q, gradient, h, cost, sc.S)


def od_feedback(od: np.ndarray, offload, gradient, slope, demand, S: int) -> Feedback:
    """
    Per-OD feedback from passenger responses. The response arrays may carry
    leading batch axes in front of the passenger axis; fields come back
    shaped (..., S).
    """
    member = od[:, None] == np.arange(S)[None, :]
    onehot = member.astype(float)
    offload, gradient, slope = (np.asarray(x, dtype=float) for x in (offload, gradient, slope))
    active = offload > 0
    total = offload @ onehot
    peak = np.max(np.where(active[..., None] & member, gradient[..., None], -np.inf), axis=-2, initial=-np.inf)
    demand = np.asarray(demand, dtype=float)
    return Feedback(
        grad_sum=np.where(active, gradient, 0.0) @ onehot,
        g_dot_h=np.where(slope > 0, gradient * slope, 0.0) @ onehot,
        h_sum=slope @ onehot,
        deficit=np.clip(demand - total, 0.0, None),
        surplus=np.clip(total - demand, 0.0, None),
        peak_gradient=np.where(np.isfinite(peak), peak, np.inf),
    )


def feedback_from(record: ResponseRecord, demand: np.ndarray) -> List[Feedback]:
    batch = od_feedback(record.od, record.offload, record.gradient, record.slope, demand, record.S)
    columns = [np.asarray(getattr(batch, f.name)) for f in fields(Feedback)]
    return [Feedback(*(float(column[s]) for column in columns)) for s in range(record.S)]


def _feedback_arrays(feedback) -> Dict[str, np.ndarray]:
    if isinstance(feedback, (list, tuple)):
        return {f.name: np.array([getattr(x, f.name) for x in feedback], dtype=float) for f in fields(Feedback)}
    return {f.name: np.asarray(getattr(feedback, f.name), dtype=float) for f in fields(Feedback)}


def ogd_update(price, feedback, eta: float, mode: str = VERBATIM, beta=0.0, p_cap: float = math.inf):
    """
    One gradient step. `price`, `feedback` fields and `beta` may be scalars
    or per-OD arrays.

    Subgradient mode first lowers the price to the largest marginal cost
    any participant actually pays, then steps along the mean marginal cost
    of the interior passengers g.h / h.1 (the price itself when nobody is
    interior) minus beta while demand is unmet. When beta dominates that
    mean, the step is at most (deficit + surplus) / h.1, the price change
    that brings the offload to the demand.
    """
    if eta < 0:
        raise DomainError(f"learning rate must be nonnegative, got {eta}")
    fb = _feedback_arrays(feedback)
    price = np.asarray(price, dtype=float)

    if mode == VERBATIM:
        updated = price - eta * fb["grad_sum"]
    elif mode == SUBGRADIENT:
        beta = np.asarray(beta, dtype=float)
        h_sum = fb["h_sum"]
        interior = h_sum > 0
        per_unit = np.where(interior, h_sum, 1.0)
        base = np.minimum(price, fb["peak_gradient"])
        g_bar = np.where(interior, fb["g_dot_h"] / per_unit, base)
        step = eta * (g_bar - beta * (fb["deficit"] > 0))
        limit = np.where(interior & (beta >= g_bar), (fb["deficit"] + fb["surplus"]) / per_unit, np.inf)
        updated = base - np.clip(step, -limit, limit)
    else:
        raise DomainError(f"unknown update mode: {mode!r}")
    updated = np.clip(updated, 0.0, p_cap)
    return float(updated) if updated.ndim == 0 else updated


def cost_terms(prices: np.ndarray, sc: Scenario) -> np.ndarray:
    """Per-(s, t) social cost sum_i C + beta [Q - sum_i q]^+"""
    prices = np.asarray(prices, dtype=float)
    terms = np.zeros((sc.S, sc.T))
    for t in range(sc.T):
        record = aggregate_response(sc, prices[:, t], t)
        terms[:, t] = record.total_cost() + sc.penalty * record.deficit(sc.demand[:, t])
    return terms


def social_cost(p: PriceSchedule, sc: Scenario) -> float:
    """Lambda(p)"""
    if p.prices.shape != (sc.S, sc.T):
        raise DomainError(f"schedule shape {p.prices.shape} does not match ({sc.S}, {sc.T})")
    return float(cost_terms(p.prices, sc).sum())


@dataclass
class FixedPriceResult:
    prices: np.ndarray
    per_od: np.ndarray

    @property
    def total(self) -> float:
        return float(self.per_od.sum())


def _member_groups(sc: Scenario, s: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Time steps grouped by the set of passengers local to OD s"""
    local = sc.cost_arrays.local_od == s
    groups: Dict[bytes, List[int]] = {}
    for t in range(sc.T):
        groups.setdefault(local[:, t].tobytes(), []).append(t)
    return [(np.nonzero(local[:, ts[0]])[0], np.array(ts)) for ts in groups.values()]


def _od_objective(sc: Scenario, s: int, prices: np.ndarray) -> np.ndarray:
    """Sum over t of OD s's cost for each candidate fixed price"""
    arrays = sc.cost_arrays
    beta = sc.penalty[s]
    out = np.zeros(prices.shape[0])
    for members, steps in _member_groups(sc, s):
        demand = np.sort(sc.demand[s, steps])
        suffix = np.concatenate([np.cumsum(demand[::-1])[::-1], [0.0]])
        fam, slope = arrays.family[members, s], arrays.slope[members, s]
        a, b, cap = arrays.a[members, s], arrays.b[members, s], arrays.capacity[members]
        for lo in range(0, prices.shape[0], _GRID_CHUNK):
            chunk = prices[lo:lo + _GRID_CHUNK, None]
            q, _, _, cost = _respond(fam, slope, a, b, cap, chunk)
            total = q.sum(axis=1)
            covered = np.searchsorted(demand, total, side="right")
            shortfall = suffix[covered] - (demand.size - covered) * total
            out[lo:lo + _GRID_CHUNK] += steps.size * cost.sum(axis=1) + beta * shortfall
    return out


def fixed_price_opt(sc: Scenario, p_cap: float = DEFAULT_P_CAP, step: float = DEFAULT_GRID_STEP) -> FixedPriceResult:
    """
    Best fixed price per OD pair: dense grid on [0, p_cap], then a bounded
    scalar refinement around the grid minimum, kept only if strictly better.
    """
    grid = np.linspace(0.0, p_cap, int(round(p_cap / step)) + 1)
    prices = np.zeros(sc.S)
    per_od = np.zeros(sc.S)
    for s in range(sc.S):
        values = _od_objective(sc, s, grid)
        k = int(np.argmin(values))
        best_p, best_v = float(grid[k]), float(values[k])
        lo, hi = max(0.0, best_p - step), min(p_cap, best_p + step)
        if hi > lo:
            refined = minimize_scalar(lambda p: float(_od_objective(sc, s, np.array([p]))[0]),
                                      bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
            if refined.success and refined.fun < best_v:
                best_p, best_v = float(refined.x), float(refined.fun)
        prices[s], per_od[s] = best_p, best_v
    logger.debug(f"Fixed-price optimum: {prices.tolist()}")
    return FixedPriceResult(prices, per_od)


@dataclass
class RegretReport:
    """Realized cost, best fixed cost, regret and the analytic bound"""
    social_cost: float
    optimal_cost: float
    optimal_prices: np.ndarray
    regret: float
    bound: float
    bound_applicable: bool
    skipped_terms: int
    cumulative: np.ndarray       # (S, T) regret per OD against p*_s
    k: np.ndarray                # (S, T)
    g_bar: float

    @property
    def average_regret(self) -> np.ndarray:
        """R(t) / t"""
        total = self.cumulative.sum(axis=0)
        return total / np.arange(1, total.size + 1)


def regret(p: PriceSchedule, sc: Scenario, fixed: Optional[FixedPriceResult] = None,
           step: float = DEFAULT_GRID_STEP) -> RegretReport:
    """R(T) = Lambda(p) - Lambda*, plus the regret bound evaluated on the run"""
    S, T = sc.S, sc.T
    if p.prices.shape != (S, T):
        raise DomainError(f"schedule shape {p.prices.shape} does not match ({S}, {T})")
    if fixed is None:
        fixed = fixed_price_opt(sc, p.p_cap, step)
    eta = p.eta if p.eta.size == T else np.ones(T)

    terms = np.zeros((S, T))
    optimal_terms = np.zeros((S, T))
    k = np.zeros((S, T))
    grad_total = np.zeros((S, T))
    g_bar = 0.0
    for t in range(T):
        record = aggregate_response(sc, p.prices[:, t], t)
        terms[:, t] = record.total_cost() + sc.penalty * record.deficit(sc.demand[:, t])
        star = aggregate_response(sc, fixed.prices, t)
        optimal_terms[:, t] = star.total_cost() + sc.penalty * star.deficit(sc.demand[:, t])
        below = fixed.prices >= p.prices[:, t]
        k[:, t] = record.g_dot_h() + below * sc.penalty * record.h_sum()
        grad_total[:, t] = record.grad_sum()
        g_bar = max(g_bar, record.max_gradient())

    cumulative = np.cumsum(terms - optimal_terms, axis=1)
    lam = float(terms.sum())
    lam_star = float(optimal_terms.sum())

    usable = grad_total > 0
    skipped = int(np.count_nonzero(~usable))
    bound = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        for s in range(S):
            if usable[s, T - 1] and eta[T - 1] > 0:
                bound += p.p_cap ** 2 * k[s, T - 1] / (2.0 * eta[T - 1] * grad_total[s, T - 1])
            ratio = np.where(usable[s], eta * g_bar ** 2 * sc.N ** 2 * k[s] / (2.0 * grad_total[s]), 0.0)
            bound += float(ratio.sum())
    applicable = skipped == 0
    if not applicable:
        logger.debug(f"Regret bound skipped {skipped} terms with no participants")

    return RegretReport(
        social_cost=lam,
        optimal_cost=lam_star,
        optimal_prices=fixed.prices,
        regret=lam - lam_star,
        bound=bound if applicable else math.nan,
        bound_applicable=applicable,
        skipped_terms=skipped,
        cumulative=cumulative,
        k=k,
        g_bar=g_bar,
    )


def _sensitivity_terms(population: Sequence[Passenger], mode: str = VERBATIM, beta: float = 0.0) -> float:
    worst = 0.0
    for passenger in population:
        unit = min(1.0, passenger.capacity)
        for cost in passenger.costs.values():
            entering = eval_gradient(cost, unit) if unit > 0 else 0.0
            term = max(cost.lipschitz, entering)
            if mode == SUBGRADIENT and cost.family == QUADRATIC:
                term = max(term, (term + beta) / (2.0 * cost.a))
            worst = max(worst, term)
    return worst


def price_sensitivity(sc: Scenario, eta: float, delta_p_min: float = DEFAULT_DELTA_P_MIN,
                      mode: str = VERBATIM, p_cap: float = DEFAULT_P_CAP) -> float:
    """
    Delta p for a unit L1 change in one passenger's offload: eta_1 times the
    largest of the Lipschitz constants of C' and the marginal cost of a
    passenger entering or leaving, floored at delta_p_min. Subgradient mode
    also moves g.h and the beta h deficit term, which scale with h = 1 / 2a
    for quadratic passengers.

    Updates are clipped to [0, p_cap], so Delta p never exceeds p_cap.
    """
    if not sc.population:
        raise DomainError("price sensitivity needs a nonempty population")
    if eta < 0:
        raise DomainError(f"learning rate must be nonnegative, got {eta}")
    beta = float(sc.penalty.max()) if sc.penalty.size else 0.0
    return max(min(eta * _sensitivity_terms(sc.population, mode, beta), p_cap), delta_p_min)


def price_sensitivity_grid(sc: Scenario, eta: float, points: int = 2001, horizon: float = 10.0) -> float:
    """Brute-force Delta p: scan offload pairs (q, q + d) with d = min(1, capacity)"""
    worst = 0.0
    for passenger in sc.population:
        d = min(1.0, passenger.capacity)
        if d <= 0:
            continue
        top = passenger.capacity - d if np.isfinite(passenger.capacity) else horizon
        for cost in passenger.costs.values():
            for q in np.linspace(0.0, max(top, 0.0), points):
                before = eval_gradient(cost, q) if q > 0 else 0.0
                after = eval_gradient(cost, q + d)
                worst = max(worst, abs(after - before))
    return eta * worst


def dp_price(p_star, delta_p: float, epsilon: float, rng: np.random.Generator,
             p_cap: float = DEFAULT_P_CAP) -> Tuple[np.ndarray, np.ndarray]:
    """
    Publish p* + Laplace(delta_p / epsilon), clipped to [0, p_cap]. Returns
    (published, unclipped). An infinite epsilon draws no noise.
    """
    if not epsilon > 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    if not delta_p > 0:
        raise DomainError(f"delta_p must be > 0, got {delta_p}")
    p_star = np.asarray(p_star, dtype=float)
    if math.isinf(epsilon):
        unclipped = p_star.copy()
    else:
        unclipped = p_star + laplace_sample(delta_p / epsilon, rng, size=p_star.shape)
    return np.clip(unclipped, 0.0, p_cap), unclipped


def privacy_budget(eta: np.ndarray, epsilon: float) -> Tuple[float, float]:
    """Raw (T - sum_{t<T} eta_t) * eps and the claimed value clamped at 0"""
    if math.isinf(epsilon):
        return math.inf, math.inf
    T = len(eta)
    raw = (T - float(np.sum(eta[:-1]))) * epsilon
    return raw, max(raw, 0.0)


@dataclass
class OneWayResult:
    """Trajectories and accounting of one closed-loop pricing run"""
    published: np.ndarray       # (S, T)
    unclipped: np.ndarray       # (S, T)
    offload: np.ndarray         # (S, T)
    deficit: np.ndarray         # (S, T)
    cost: np.ndarray            # (S, T)
    min_utility: np.ndarray     # (T,)
    eta: np.ndarray
    report: RegretReport
    delta_p: float
    budget_raw: float
    budget: float
    p_cap: float = DEFAULT_P_CAP

    @property
    def schedule(self) -> PriceSchedule:
        return PriceSchedule(self.published, self.eta, self.p_cap)

    def summary(self) -> Dict:
        return {
            "social_cost": self.report.social_cost,
            "optimal_cost": self.report.optimal_cost,
            "regret": self.report.regret,
            "regret_bound": None if math.isnan(self.report.bound) else self.report.bound,
            "bound_applicable": self.report.bound_applicable,
            "optimal_prices": self.report.optimal_prices.tolist(),
            "delta_p": self.delta_p,
            "privacy_budget_raw": None if math.isinf(self.budget_raw) else self.budget_raw,
            "privacy_budget": None if math.isinf(self.budget) else self.budget,
            "min_passenger_utility": float(self.min_utility.min()) if self.min_utility.size else 0.0,
            "total_deficit": float(self.deficit.sum()),
        }


def run_one_way(sc: Scenario, params: PricingParams, rng: np.random.Generator,
                fixed: Optional[FixedPriceResult] = None) -> OneWayResult:
    """
    Closed loop: publish the (optionally perturbed) price, collect the best
    responses, update from the published price. Private runs draw
    Laplace(delta_p / ((1 - eta_1) epsilon)) noise, so every release meets
    the per-step level (1 - eta_1) epsilon.
    """
    S, T = sc.S, sc.T
    eta = params.eta.values(T)
    private = params.private
    delta_p = price_sensitivity(sc, float(eta[0]) if T else 0.0, params.delta_p_min, params.mode, params.p_cap)

    published = np.zeros((S, T))
    unclipped = np.zeros((S, T))
    offload = np.zeros((S, T))
    deficit = np.zeros((S, T))
    cost = np.zeros((S, T))
    min_utility = np.zeros(T)

    target = np.full(S, params.p_init)
    for t in range(T):
        if private:
            shown, raw = dp_price(target, delta_p, params.step_epsilon, rng, params.p_cap)
        else:
            shown, raw = np.clip(target, 0.0, params.p_cap), target.copy()
        published[:, t], unclipped[:, t] = shown, raw

        record = aggregate_response(sc, shown, t)
        offload[:, t] = record.total_offload()
        deficit[:, t] = record.deficit(sc.demand[:, t])
        cost[:, t] = record.total_cost() + sc.penalty * deficit[:, t]
        min_utility[t] = float(record.utilities().min())

        if t < T - 1:
            target = ogd_update(shown, feedback_from(record, sc.demand[:, t]), float(eta[t]),
                                params.mode, sc.penalty, params.p_cap)
            target = np.atleast_1d(target)

    report = regret(PriceSchedule(published, eta, params.p_cap), sc, fixed, params.grid_step)
    budget_raw, budget = privacy_budget(eta, params.epsilon if private else math.inf)
    if budget_raw < 0:
        logger.warning(f"Privacy budget {budget_raw:.6g} is negative; claiming 0")
    logger.info(f"One-way run: T={T}, S={S}, regret={report.regret:.6g}, delta_p={delta_p:.6g}")

    return OneWayResult(
        published=published,
        unclipped=unclipped,
        offload=offload,
        deficit=deficit,
        cost=cost,
        min_utility=min_utility,
        eta=eta,
        report=report,
        delta_p=delta_p,
        budget_raw=budget_raw,
        budget=budget,
        p_cap=params.p_cap,
    )
