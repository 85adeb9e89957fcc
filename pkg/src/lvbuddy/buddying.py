"""Assigning monitored profiles ("buddies") to the customers of a feeder.

Two methods: the simple algorithm, which matches each domestic customer to
the same-group profile with the closest mean daily demand, and a genetic
algorithm minimising the weighted cost

    F = (1 - w) * sum_h |a(h) - s(h)| / S
        + w * (sum_dom |U_j - U^_kj| / D + sum_nondom U_j |1 - alpha_j| / D)

where ``a`` is the buddied aggregate, ``s`` the substation series,
``S = sum s`` and ``D = sum U_j``. All evaluation happens on the pool's window;
restrict the pool (``pool.window(...)``) to select the training period.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (ConfigError, DataError, DegenerateNormalizerError, UnsupportedFeederError,
                     WindowMismatchError)
from .model import (ALPHA_MAX, ALPHA_MIN, BuddyAssignment, Customer, Feeder, MonitoredPool,
                    aggregate_assignment)


@dataclass(frozen=True)
class GAConfig:
    w: float = 0.0
    population_size: int = 100
    max_generations: int = 500
    stall_generations: int = 50
    tournament_size: int = 3
    crossover_rate: float = 0.5
    mutation_rate: float | None = None  # None: 1 / number of customers
    alpha_mutation_std: float = 0.05
    elitism: int = 2
    optimize_alpha: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ConfigError(f"w must lie in [0, 1], got {self.w}")
        if self.population_size < 2:
            raise ConfigError("population_size must be at least 2")
        if not 0 <= self.elitism < self.population_size:
            raise ConfigError("elitism must be smaller than the population")
        if self.max_generations < 0 or self.stall_generations < 1 or self.tournament_size < 1:
            raise ConfigError("generation counts and tournament size must be positive")
        for name in ("crossover_rate", "mutation_rate"):
            rate = getattr(self, name)
            if rate is not None and not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.alpha_mutation_std < 0:
            raise ConfigError("alpha_mutation_std must be non-negative")

    def replace(self, **changes) -> "GAConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GAConfig":
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown GA keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "GAConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    substation_term: float
    domestic_term: float
    nondomestic_term: float
    S: float | None
    D: float
    w: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CostBreakdown":
        return cls(**d)


def _known_u(feeder: Feeder) -> np.ndarray:
    missing = [c.id for c in feeder.customers if c.qmr_mean_daily is None]
    if missing:
        raise DataError(f"feeder {feeder.id}: unknown mean daily demand for {missing[:5]}; impute first")
    return np.array([c.qmr_mean_daily for c in feeder.customers])


def _substation(feeder: Feeder, pool: MonitoredPool) -> np.ndarray:
    s = feeder.substation_series
    if s is None:
        raise DataError(f"feeder {feeder.id}: substation series required when w < 1")
    if not s.covers(pool.start_date, pool.n_days):
        raise WindowMismatchError(f"feeder {feeder.id}: substation series does not cover the pool window")
    return s.window(pool.start_date, pool.n_days).values


def cost(feeder: Feeder, assignment: BuddyAssignment, pool: MonitoredPool, w: float) -> CostBreakdown:
    """Weighted substation / mean-daily-demand cost of an assignment over the pool window.

    With ``w == 1`` the substation term is skipped and no substation data is needed.
    """
    if not 0.0 <= w <= 1.0:
        raise ConfigError(f"w must lie in [0, 1], got {w}")
    assignment.validate(feeder, pool)
    u = _known_u(feeder)
    D = float(u.sum())
    if D == 0:
        raise DegenerateNormalizerError(f"feeder {feeder.id}: total mean daily demand D is zero")
    dom = nondom = 0.0
    for c, k, a, uj in zip(feeder.customers, assignment.profile_ids, assignment.alphas, u):
        if c.is_domestic:
            dom += abs(uj - pool.mean_daily[k])
        else:
            nondom += uj * abs(1.0 - a)
    dom, nondom = dom / D, nondom / D
    if w < 1.0:
        s = _substation(feeder, pool)
        S = float(s.sum())
        if S <= 0:
            raise DegenerateNormalizerError(f"feeder {feeder.id}: substation total S is {S}")
        a = aggregate_assignment(feeder, assignment, pool).values
        sub = float(np.abs(a - s).sum() / S)
    else:
        S, sub = None, 0.0
    total = (1.0 - w) * sub + w * (dom + nondom)
    return CostBreakdown(total, sub, dom, nondom, S, D, w)


def simple_buddy(feeder: Feeder, pool: MonitoredPool) -> BuddyAssignment:
    """Closest mean daily demand within the group; non-domestic customers get their standard profile."""
    ids, alphas = [], []
    for c in feeder.customers:
        candidates = pool.candidates(c.group)
        if c.is_domestic:
            if c.qmr_mean_daily is None:
                raise DataError(f"customer {c.id}: unknown mean daily demand; impute first")
            gaps = np.abs(c.qmr_mean_daily - pool.mean_daily[candidates])
            ids.append(int(candidates[np.argmin(gaps)]))  # first minimum: smallest index wins ties
            alphas.append(None)
        else:
            ids.append(int(candidates[0]))
            alphas.append(1.0)
    return BuddyAssignment(tuple(ids), tuple(alphas))


# --- genetic algorithm ------------------------------------------------------

class _Problem:
    """Vectorised cost evaluation for a population of chromosomes.

    A chromosome is one integer gene per customer (position in that
    customer's candidate list) plus one alpha per non-domestic customer.
    """

    def __init__(self, feeder: Feeder, pool: MonitoredPool, w: float):
        self.w = w
        self.M = feeder.M
        self.u = _known_u(feeder)
        self.D = float(self.u.sum())
        if self.D == 0:
            raise DegenerateNormalizerError(f"feeder {feeder.id}: total mean daily demand D is zero")
        cands = [pool.candidates(c.group) for c in feeder.customers]
        self.sizes = np.array([c.size for c in cands])
        used = np.unique(np.concatenate(cands))
        local = {int(k): i for i, k in enumerate(used)}
        self.used = used
        self.table = np.zeros((self.M, self.sizes.max()), dtype=np.int64)
        for j, c in enumerate(cands):
            self.table[j, :c.size] = [local[int(k)] for k in c]
        self.dom = np.array([c.is_domestic for c in feeder.customers])
        self.nd = np.flatnonzero(~self.dom)
        self.mean_daily = pool.mean_daily[used]
        if w < 1.0:
            self.s = _substation(feeder, pool)
            self.S = float(self.s.sum())
            if self.S <= 0:
                raise DegenerateNormalizerError(f"feeder {feeder.id}: substation total S is {self.S}")
            self.P = np.ascontiguousarray(pool.matrix[used])

    def local_ids(self, genes: np.ndarray) -> np.ndarray:
        return self.table[np.arange(self.M), genes]

    def evaluate(self, genes: np.ndarray, alphas: np.ndarray) -> np.ndarray:
        pop = genes.shape[0]
        k = self.table[np.arange(self.M)[None, :], genes]  # (pop, M) local profile ids
        dom_term = np.abs(self.u[self.dom] - self.mean_daily[k[:, self.dom]]).sum(axis=1) / self.D
        nd_term = (self.u[self.nd] * np.abs(1.0 - alphas)).sum(axis=1) / self.D
        total = self.w * (dom_term + nd_term)
        if self.w < 1.0:
            weights = np.zeros((pop, self.used.size))
            coef = np.ones((pop, self.M))
            coef[:, self.nd] = alphas * self.u[self.nd]
            np.add.at(weights, (np.repeat(np.arange(pop), self.M), k.ravel()), coef.ravel())
            a = weights @ self.P
            total = total + (1.0 - self.w) * np.abs(a - self.s).sum(axis=1) / self.S
        return total


class GAResult(NamedTuple):
    assignment: BuddyAssignment
    cost: CostBreakdown
    trace: list[float]


def ga_buddy(feeder: Feeder, pool: MonitoredPool, cfg: GAConfig = GAConfig()) -> GAResult:
    """Genetic-algorithm buddying.

    The initial population holds the simple-algorithm solution plus random
    group-respecting individuals with alpha ~ U[0.8, 1.2]. Each generation
    keeps ``cfg.elitism`` best individuals and breeds the rest by tournament
    selection, uniform crossover and per-gene mutation. Stops after
    ``max_generations`` or ``stall_generations`` without improvement.
    ``trace[g]`` is the best cost in generation ``g`` (non-increasing).
    """
    prob = _Problem(feeder, pool, cfg.w)
    rng = np.random.default_rng(cfg.seed)
    M, n_nd, n = prob.M, prob.nd.size, cfg.population_size
    rate = cfg.mutation_rate if cfg.mutation_rate is not None else 1.0 / M

    genes = (rng.random((n, M)) * prob.sizes).astype(np.int64)
    if cfg.optimize_alpha:
        alphas = rng.uniform(ALPHA_MIN, ALPHA_MAX, (n, n_nd))
    else:
        alphas = np.ones((n, n_nd))
    seed_solution = simple_buddy(feeder, pool)
    pos = {int(k): i for i, k in enumerate(prob.used)}
    for j, k in enumerate(seed_solution.profile_ids):
        genes[0, j] = int(np.flatnonzero(prob.table[j, :prob.sizes[j]] == pos[k])[0])
    alphas[0] = 1.0

    fitness = prob.evaluate(genes, alphas)
    trace = [float(fitness.min())]
    best, stall = trace[0], 0
    for _ in range(cfg.max_generations):
        order = np.argsort(fitness, kind="stable")
        n_child = n - cfg.elitism
        contenders = rng.integers(0, n, (n_child, 2, cfg.tournament_size))
        winners = np.take_along_axis(
            contenders, np.argmin(fitness[contenders], axis=2)[..., None], axis=2)[..., 0]
        p1, p2 = winners[:, 0], winners[:, 1]

        take = rng.random((n_child, M)) < cfg.crossover_rate
        child_genes = np.where(take, genes[p2], genes[p1])
        mutate = rng.random((n_child, M)) < rate
        fresh = (rng.random((n_child, M)) * prob.sizes).astype(np.int64)
        child_genes = np.where(mutate, fresh, child_genes)

        take_a = rng.random((n_child, n_nd)) < cfg.crossover_rate
        child_alphas = np.where(take_a, alphas[p2], alphas[p1])
        if cfg.optimize_alpha:
            step = rng.random((n_child, n_nd)) < rate
            child_alphas = np.clip(child_alphas + step * rng.normal(0, cfg.alpha_mutation_std,
                                                                    (n_child, n_nd)),
                                   ALPHA_MIN, ALPHA_MAX)

        elite = order[:cfg.elitism]
        genes = np.concatenate([genes[elite], child_genes])
        alphas = np.concatenate([alphas[elite], child_alphas])
        fitness = np.concatenate([fitness[elite], prob.evaluate(child_genes, child_alphas)])
        current = float(fitness.min())
        trace.append(current)
        if current < best:
            best, stall = current, 0
        else:
            stall += 1
            if stall >= cfg.stall_generations:
                break

    i = int(np.argmin(fitness))
    ids = tuple(int(k) for k in prob.used[prob.local_ids(genes[i])])
    alpha_out: list[float | None] = [None] * M
    for col, j in enumerate(prob.nd):
        alpha_out[j] = float(alphas[i, col])
    assignment = BuddyAssignment(ids, tuple(alpha_out))
    return GAResult(assignment, cost(feeder, assignment, pool, cfg.w), trace)


# --- non-domestic scaling strategies ----------------------------------------------

@dataclass(frozen=True)
class ScalingResult:
    name: str
    feeder: Feeder  # the feeder as buddied (U_j replaced for the "actual" strategy)
    assignment: BuddyAssignment
    effective_scale: float  # alpha_j * U_j of the non-domestic customer, kWh/day


def scale_strategies(feeder: Feeder, pool: MonitoredPool, truth_daily: float,
                     cfg: GAConfig = GAConfig()) -> dict[str, ScalingResult]:
    """Scale the single non-domestic customer's standard profile three ways.

    ``estimated`` uses the meter-reading U_j, ``actual`` the measured mean
    daily demand ``truth_daily``, ``optimal`` lets the GA (w = 0) choose alpha.
    """
    nd = [j for j, c in enumerate(feeder.customers) if not c.is_domestic]
    if len(nd) != 1:
        raise UnsupportedFeederError(
            f"feeder {feeder.id}: scaling strategies need exactly one non-domestic customer, found {len(nd)}")
    if not np.isfinite(truth_daily) or truth_daily <= 0:
        raise DataError("truth_daily must be a positive mean daily demand")
    j = nd[0]
    est = simple_buddy(feeder, pool)
    customers = list(feeder.customers)
    c = customers[j]
    customers[j] = Customer(c.id, c.cls, float(truth_daily))
    actual_feeder = feeder.replace_customers(customers)
    act = simple_buddy(actual_feeder, pool)
    opt = ga_buddy(feeder, pool, cfg.replace(w=0.0)).assignment
    u = feeder.customers[j].qmr_mean_daily
    return {
        "estimated": ScalingResult("estimated", feeder, est, float(u)),
        "actual": ScalingResult("actual", actual_feeder, act, float(truth_daily)),
        "optimal": ScalingResult("optimal", feeder, opt, float(opt.alphas[j] * u)),
    }


# --- serialisation ------------------------------------------------------------

def assignment_records(feeder: Feeder, assignment: BuddyAssignment, pool: MonitoredPool) -> list[dict]:
    out = []
    for c, k, a in zip(feeder.customers, assignment.profile_ids, assignment.alphas):
        rec = {"customer_id": c.id, "profile_id": k, "profile_name": pool[k].id}
        if a is not None:
            rec["alpha"] = a
        out.append(rec)
    return out


def assignment_from_records(records: list[dict], feeder: Feeder) -> BuddyAssignment:
    by_id = {r["customer_id"]: r for r in records}
    try:
        rows = [by_id[c.id] for c in feeder.customers]
    except KeyError as exc:
        raise DataError(f"assignment lacks customer {exc}") from None
    return BuddyAssignment(tuple(r["profile_id"] for r in rows), tuple(r.get("alpha") for r in rows))
