"""Synthetic monitored pools and feeders with known ground truth.

Monitored domestic profiles are built from weekly templates (PC1 with
morning/evening peaks, PC2 with an overnight storage-heating peak), an annual
winter bump, day-to-day variation and multiplicative half-hourly noise, then
rescaled so their mean daily demand hits a target drawn to match the monitored
sample statistics. Feeder customers are "twins" of pool members: a customer's
true demand is its pool profile times idiosyncratic noise, so the truth is a
valid buddy assignment but not a perfect fit unless the noise is zero.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import seeding
from .catalogue import default_catalogue
from .errors import ConfigError, EmptyCandidateGroupError
from .ingestion.calendar import HolidayCalendar, standard_pool_profiles
from .ingestion.files import Windows
from .model import (ALPHA_MAX, ALPHA_MIN, BAND_GROUPS, SLOTS_PER_DAY, BuddyAssignment, Customer,
                    Domestic, Feeder, GroupKey, HalfHourlySeries, MonitoredPool, MonitoredProfile,
                    NonDomestic, StandardProfile, _as_date, mean_daily_demand)

# monitored PC1 / PC2 mean daily demand (kWh): mean, std, min, max
PC1_STATS = (11.245, 6.427, 0.761, 35.775)
PC2_STATS = (16.015, 11.678, 4.800, 46.110)


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    start_date: str = "2015-01-05"
    n_days: int = 140
    train_days: int = 56
    # monitored sample
    n_pc1: int = 40
    n_pc2: int = 8
    n_solar: int = 4
    pc1_stats: tuple[float, float, float, float] = PC1_STATS
    pc2_stats: tuple[float, float, float, float] = PC2_STATS
    solar_generation: tuple[float, float] = (4.0, 10.0)  # kWh/day at summer peak
    profile_noise: float = 0.25
    # feeders
    n_feeders: int = 12
    customers_min: int = 5
    customers_max: int = 60
    nondomestic_prob: float = 0.05
    nondomestic_types: tuple[str, ...] = ()  # empty: whole catalogue
    nondomestic_median: float = 50.0
    nondomestic_log_sigma: float = 0.8
    alpha_true_spread: float = 0.2
    customer_noise: float = 0.25
    measurement_noise: float = 0.0
    # quarterly meter reading errors
    qmr_sigma: float = 0.1
    qmr_gross_prob_domestic: float = 0.0
    qmr_gross_prob_nondomestic: float = 0.0
    qmr_gross_range: tuple[float, float] = (0.005, 0.05)
    qmr_missing_prob_nondomestic: float = 0.0

    def __post_init__(self):
        try:
            _as_date(self.start_date)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"start_date: {exc}") from None
        for name in ("n_days", "n_feeders", "customers_min", "customers_max"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_pc1 < 0 or self.n_pc2 < 0 or self.n_solar < 0 or self.n_pc1 + self.n_pc2 < 1:
            raise ConfigError("need at least one monitored domestic profile")
        if self.customers_min > self.customers_max:
            raise ConfigError("customers_min exceeds customers_max")
        if not 7 <= self.train_days < self.n_days:
            raise ConfigError("train_days must be at least 7 and shorter than n_days")
        for name in ("nondomestic_prob", "qmr_gross_prob_domestic", "qmr_gross_prob_nondomestic",
                     "qmr_missing_prob_nondomestic"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        for name in ("qmr_sigma", "nondomestic_log_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("profile_noise", "customer_noise", "measurement_noise"):
            if not 0 <= getattr(self, name) < 0.5:
                raise ConfigError(f"{name} must lie in [0, 0.5)")
        if not 0.0 <= self.alpha_true_spread <= 0.2:
            raise ConfigError("alpha_true_spread must lie in [0, 0.2]")
        lo, hi = self.qmr_gross_range
        if not 0 < lo <= hi:
            raise ConfigError("qmr_gross_range must be positive and ordered")

    @property
    def windows(self) -> Windows:
        return Windows.default(self.start_date, self.n_days, self.train_days)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        kwargs = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def full_scale(cls, **overrides) -> "ScenarioConfig":
        """199 PC1, 15 PC2 and 28 solar monitored profiles; 8 weeks training plus a 364-day test year."""
        base = dict(n_pc1=199, n_pc2=15, n_solar=28, n_days=420)
        base.update(overrides)
        return cls(**base)


# --- mean daily demand sampling -----------------------------------------------

def check_feasible(stats) -> None:
    mean, std, lo, hi = stats
    if not lo < mean < hi or std <= 0:
        raise ConfigError(f"infeasible statistics {stats}: need min < mean < max and std > 0")
    if std ** 2 > (hi - mean) * (mean - lo):
        raise ConfigError(f"infeasible statistics {stats}: std too large for the range")


def sample_mean_daily(rng: np.random.Generator, n: int, stats) -> np.ndarray:
    """Draws from a Beta distribution on [min, max] with exactly the given mean and std."""
    check_feasible(stats)
    mean, std, lo, hi = stats
    m = (mean - lo) / (hi - lo)
    v = (std / (hi - lo)) ** 2
    k = m * (1 - m) / v - 1
    return lo + (hi - lo) * rng.beta(m * k, (1 - m) * k, size=n)


# --- shapes -------------------------------------------------------------------

_HOURS = (np.arange(SLOTS_PER_DAY) + 0.5) / 2


def _bump(centre, width, amplitude):
    d = np.abs(_HOURS - centre)
    d = np.minimum(d, 24 - d)
    return amplitude * np.exp(-0.5 * (d / width) ** 2)


def _weekly_template(profile_class: int, rng: np.random.Generator) -> np.ndarray:
    """(7, 48) relative shape with per-household perturbations of peak times and sizes."""
    shift = rng.normal(0, 0.75)
    amp = rng.lognormal(0, 0.3, size=4)
    base = 0.3 * rng.lognormal(0, 0.3)
    days = []
    for weekday in range(7):
        weekend = weekday >= 5
        morning = 9.5 if weekend else 7.5
        day = base + _bump(morning + shift, 1.0, 0.6 * amp[0]) + _bump(18.5 + shift, 2.0, 1.0 * amp[1])
        if weekend:
            day = day + _bump(13 + shift, 2.5, 0.4 * amp[2])
        if profile_class == 2:
            day = day + _bump(3.5 + shift / 2, 2.0, 1.5 * amp[3])
        days.append(day)
    return np.array(days)


def _day_of_year(start: dt.date, n_days: int) -> np.ndarray:
    return np.array([(start + dt.timedelta(days=i)).timetuple().tm_yday for i in range(n_days)])


def _noise(rng, sigma, size) -> np.ndarray:
    """Mean-one multiplicative noise ``1 + sigma * z`` with z a standard normal truncated at +-2."""
    if sigma == 0:
        return np.ones(size)
    return 1 + sigma * np.clip(rng.standard_normal(size), -2.0, 2.0)


def _domestic_profile(rng, profile_class, start, n_days, target, noise) -> np.ndarray:
    template = _weekly_template(profile_class, rng)
    weekday = np.array([(start + dt.timedelta(days=i)).weekday() for i in range(n_days)])
    doy = _day_of_year(start, n_days)
    seasonal = 1 + (0.25 if profile_class == 1 else 0.4) * np.cos(2 * np.pi * (doy - 15) / 365)
    day_factor = seasonal * _noise(rng, 0.1, n_days)
    values = template[weekday] * day_factor[:, None] * _noise(rng, noise, (n_days, SLOTS_PER_DAY))
    values = values.ravel()
    return values * (target * n_days / values.sum())


def _solar_generation(rng, start, n_days, peak_daily) -> np.ndarray:
    doy = _day_of_year(start, n_days)
    season = 0.55 + 0.45 * np.cos(2 * np.pi * (doy - 172) / 365)
    cloud = rng.uniform(0.3, 1.0, n_days)
    shape = _bump(12.5, 2.5, 1.0)
    shape = shape / shape.sum()
    return (peak_daily * season * cloud)[:, None] * shape[None, :]


def _band_groups(rng, mean_daily: np.ndarray) -> list[str]:
    """Tax-band group loosely increasing with demand."""
    if mean_daily.size == 0:
        return []
    rank = np.argsort(np.argsort(mean_daily)) / max(mean_daily.size - 1, 1)
    pos = np.clip(np.rint(rank * 5 + rng.normal(0, 1.2, mean_daily.size)), 0, 5).astype(int)
    return [BAND_GROUPS[i] for i in pos]


def generate_monitored_profiles(cfg: ScenarioConfig) -> list[MonitoredProfile]:
    """Domestic monitored sample only (no standard profiles)."""
    rng = seeding.make_rng(cfg.seed, seeding.POOL)
    start = _as_date(cfg.start_date)
    targets = {1: sample_mean_daily(rng, cfg.n_pc1, cfg.pc1_stats),
               2: sample_mean_daily(rng, cfg.n_pc2, cfg.pc2_stats)}
    bands = {pc: _band_groups(rng, targets[pc]) for pc in (1, 2)}
    profiles = []
    for pc in (1, 2):
        for i, (target, band) in enumerate(zip(targets[pc], bands[pc])):
            values = _domestic_profile(rng, pc, start, cfg.n_days, target, cfg.profile_noise)
            profiles.append(MonitoredProfile(f"pc{pc}-{i:03d}", GroupKey("dom", pc, band),
                                             HalfHourlySeries(start, values)))
    if cfg.n_solar:
        solar_pc = np.where(rng.uniform(size=cfg.n_solar) < 0.8, 1, 2)
        for i, pc in enumerate(solar_pc):
            stats = cfg.pc1_stats if pc == 1 else cfg.pc2_stats
            target = sample_mean_daily(rng, 1, stats)[0]
            band = BAND_GROUPS[int(rng.integers(0, len(BAND_GROUPS)))]
            values = _domestic_profile(rng, int(pc), start, cfg.n_days, target, cfg.profile_noise)
            values = values - _solar_generation(rng, start, cfg.n_days,
                                                rng.uniform(*cfg.solar_generation)).ravel()
            profiles.append(MonitoredProfile(f"pv-{i:03d}", GroupKey("dom", int(pc), band, True),
                                             HalfHourlySeries(start, values, allows_negative=True)))
    return profiles


def scenario_calendar(cfg: ScenarioConfig) -> HolidayCalendar:
    return HolidayCalendar.england(cfg.start_date, cfg.n_days)


def scenario_catalogue(cfg: ScenarioConfig) -> list[StandardProfile]:
    catalogue = default_catalogue()
    if cfg.nondomestic_types:
        unknown = set(cfg.nondomestic_types) - {sp.type_tag for sp in catalogue}
        if unknown:
            raise ConfigError(f"unknown non-domestic types {sorted(unknown)}")
    return catalogue


def generate_pool(cfg: ScenarioConfig) -> MonitoredPool:
    """Monitored domestic sample plus annualised standard profiles over the scenario window."""
    standard = standard_pool_profiles(scenario_catalogue(cfg), cfg.start_date, cfg.n_days,
                                      scenario_calendar(cfg))
    return MonitoredPool(tuple(generate_monitored_profiles(cfg)) + tuple(standard))


# --- feeders ------------------------------------------------------------------

@dataclass(frozen=True)
class TrueAssignment(BuddyAssignment):
    """Ground-truth assignment plus each customer's actual mean daily demand."""

    true_mean_daily: tuple[float, ...] = ()
    nominal_mean_daily: tuple[float, ...] = ()


def generate_feeder(cfg: ScenarioConfig, pool: MonitoredPool, index: int = 0, *,
                    n_customers: int | None = None,
                    nondomestic: Sequence[str] | None = None,
                    rng: np.random.Generator | None = None) -> tuple[Feeder, TrueAssignment]:
    """One feeder whose substation series is the sum of its customers' true demand.

    ``nondomestic`` fixes the non-domestic customer types explicitly; with
    ``n_customers`` it also fixes the total (the rest being domestic).
    Otherwise sizes and mix are drawn from ``cfg``.
    """
    rng = rng if rng is not None else seeding.make_rng(cfg.seed, seeding.FEEDERS, index)
    fid = f"F{index:03d}"
    domestic_ix = np.array([i for i, p in enumerate(pool.profiles) if p.group.is_domestic])
    types = list(cfg.nondomestic_types) or [p.group.type_tag for p in pool.profiles
                                             if not p.group.is_domestic]
    if n_customers is None:
        lo, hi = np.log(cfg.customers_min), np.log(cfg.customers_max + 1)
        n_customers = int(min(np.floor(np.exp(rng.uniform(lo, hi))), cfg.customers_max))
    if nondomestic is None:
        is_nd = rng.uniform(size=n_customers) < cfg.nondomestic_prob if types else np.zeros(n_customers, bool)
        nd_types = [types[int(rng.integers(len(types)))] for _ in range(int(is_nd.sum()))]
    else:
        nd_types = list(nondomestic)
        if len(nd_types) > n_customers:
            raise ConfigError("more non-domestic customers than customers")
        is_nd = np.zeros(n_customers, bool)
        is_nd[n_customers - len(nd_types):] = True
    if (~is_nd).any() and domestic_ix.size == 0:
        raise EmptyCandidateGroupError("pool has no domestic profiles")

    customers, ids, alphas, true_daily, nominal = [], [], [], [], []
    total = np.zeros(pool.n_slots)
    nd_iter = iter(nd_types)
    for j in range(n_customers):
        cid = f"{fid}-c{j:03d}"
        noise = _noise(rng, cfg.customer_noise, pool.n_slots)
        if is_nd[j]:
            tag = next(nd_iter)
            group = GroupKey("nd", type_tag=tag)
            k = int(pool.candidates(group)[0])
            u_nom = float(rng.lognormal(np.log(cfg.nondomestic_median), cfg.nondomestic_log_sigma))
            s = cfg.alpha_true_spread
            alpha = float(np.clip(rng.uniform(1 - s, 1 + s), ALPHA_MIN, ALPHA_MAX))
            demand = alpha * u_nom * pool.matrix[k] * noise
            qmr = u_nom * _qmr_error(rng, cfg, cfg.qmr_gross_prob_nondomestic)
            if rng.uniform() < cfg.qmr_missing_prob_nondomestic:
                qmr = None
            cls = NonDomestic(tag)
            alphas.append(alpha)
        else:
            k = int(domestic_ix[rng.integers(domestic_ix.size)])
            g = pool[k].group
            band = g.band_group if len(g.band_group) == 1 else "FGH"[int(rng.integers(3))]
            demand = pool.matrix[k] * noise
            u_nom = mean_daily_demand(demand)
            qmr = u_nom * _qmr_error(rng, cfg, cfg.qmr_gross_prob_domestic)
            if qmr <= 0:  # net exporters have no positive reading; report the gross import instead
                qmr = mean_daily_demand(np.maximum(demand, 0))
            cls = Domestic(g.profile_class, band, g.solar)
            alphas.append(None)
        customers.append(Customer(cid, cls, qmr))
        ids.append(k)
        true_daily.append(mean_daily_demand(demand))
        nominal.append(u_nom)
        total += demand
    if cfg.measurement_noise:
        total = total * _noise(rng, cfg.measurement_noise, pool.n_slots)
    solar = any(getattr(c.cls, "has_solar", False) for c in customers)
    substation = HalfHourlySeries(pool.start_date, total, allows_negative=solar or bool(np.any(total < 0)))
    truth = TrueAssignment(tuple(ids), tuple(alphas), tuple(true_daily), tuple(nominal))
    return Feeder(fid, tuple(customers), substation), truth


def _qmr_error(rng, cfg, gross_prob) -> float:
    factor = float(np.exp(rng.normal(0, cfg.qmr_sigma))) if cfg.qmr_sigma else 1.0
    if gross_prob and rng.uniform() < gross_prob:
        factor = float(rng.uniform(*cfg.qmr_gross_range))
    return factor


@dataclass
class SyntheticNetwork:
    config: ScenarioConfig
    pool: MonitoredPool
    catalogue: list[StandardProfile]
    calendar: HolidayCalendar
    feeders: list[Feeder]
    truths: list[TrueAssignment] = field(default_factory=list)

    @property
    def windows(self) -> Windows:
        return self.config.windows

    @property
    def domestic_profiles(self) -> list[MonitoredProfile]:
        return [p for p in self.pool.profiles if p.group.is_domestic]


def generate_network(cfg: ScenarioConfig) -> SyntheticNetwork:
    pool = generate_pool(cfg)
    feeders, truths = [], []
    for i in range(cfg.n_feeders):
        f, t = generate_feeder(cfg, pool, i)
        feeders.append(f)
        truths.append(t)
    return SyntheticNetwork(cfg, pool, scenario_catalogue(cfg), scenario_calendar(cfg), feeders, truths)


def truth_records(net: SyntheticNetwork) -> list[dict]:
    out = []
    for f, t in zip(net.feeders, net.truths):
        out.append({"feeder_id": f.id, "assignments": [
            {"customer_id": c.id, "profile_id": k, "profile_name": net.pool[k].id,
             **({} if a is None else {"alpha": a}), "true_mean_daily": td, "nominal_mean_daily": nd}
            for c, k, a, td, nd in zip(f.customers, t.profile_ids, t.alphas,
                                       t.true_mean_daily, t.nominal_mean_daily)]})
    return out
