"""Feeder confidence bands: customer bootstrap and per-half-hour quantile regression."""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import seeding
from .errors import (ConfigError, DataError, EmptyCandidateGroupError, NumericalError,
                     RankDeficientError, WindowMismatchError)
from .ingestion.files import _fmt, _parse_float, _timestamp, atomic_write, dump_json
from .model import (ALPHA_MAX, ALPHA_MIN, SLOTS_PER_DAY, Feeder, HalfHourlySeries, MonitoredPool,
                    _as_date)


def pinball(z, tau):
    """Pinball loss ``|z * (tau - 1[z < 0])|``, elementwise."""
    tau = np.asarray(tau, dtype=float)
    if np.any((tau <= 0) | (tau >= 1)):
        raise ConfigError("tau must lie strictly inside (0, 1)")
    z = np.asarray(z, dtype=float)
    out = np.abs(z * (tau - (z < 0)))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class ConfidenceBands:
    lower: HalfHourlySeries
    upper: HalfHourlySeries
    method: str
    n_crossings: int = 0  # slots swapped to keep lower <= upper

    def __post_init__(self):
        if not self.lower.same_window(self.upper):
            raise WindowMismatchError("lower and upper bands cover different windows")
        if np.any(self.lower.values > self.upper.values):
            raise DataError("lower band exceeds upper band")

    @property
    def start_date(self) -> dt.date:
        return self.lower.start_date

    @property
    def n_days(self) -> int:
        return self.lower.n_days

    def window(self, start, n_days: int) -> "ConfidenceBands":
        return ConfidenceBands(self.lower.window(start, n_days), self.upper.window(start, n_days),
                               self.method, self.n_crossings)

    def coverage(self, actual: HalfHourlySeries) -> float:
        """Fraction of slots where ``actual`` lies within the bands."""
        if not actual.same_window(self.lower):
            raise WindowMismatchError("actual series and bands cover different windows")
        y = actual.values
        return float(np.mean((y >= self.lower.values) & (y <= self.upper.values)))


def _bands(lower, upper, start, method, n_crossings=0) -> ConfidenceBands:
    return ConfidenceBands(HalfHourlySeries(start, lower, allows_negative=True),
                           HalfHourlySeries(start, upper, allows_negative=True), method, n_crossings)


# --- bootstrap --------------------------------------------------------------

SCALINGS = ("uniform", "gaussian")


def gaussian_sigma(u):
    """Standard deviation of the Gaussian non-domestic scale around mean ``u``."""
    return 20.0 * np.asarray(u, dtype=float) / 196.0


@dataclass(frozen=True)
class BootstrapConfig:
    n_resamples: int = 1500
    scaling: str = "uniform"
    quantiles: tuple[float, float] = (0.1, 0.9)
    seed: int = 0
    include_solar: bool = True

    def __post_init__(self):
        if self.n_resamples < 1:
            raise ConfigError("n_resamples must be >= 1")
        if self.scaling not in SCALINGS:
            raise ConfigError(f"scaling must be one of {SCALINGS}, got {self.scaling!r}")
        lo, hi = self.quantiles
        if not 0 < lo < hi < 1:
            raise ConfigError(f"quantiles must satisfy 0 < lower < upper < 1, got {self.quantiles}")
        object.__setattr__(self, "quantiles", (float(lo), float(hi)))

    def replace(self, **changes) -> "BootstrapConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BootstrapConfig":
        d = dict(d)
        if "quantiles" in d:
            d["quantiles"] = tuple(d["quantiles"])
        return cls(**d)


def bootstrap_weights(feeder: Feeder, pool: MonitoredPool, cfg: BootstrapConfig):
    """Per-resample weights on pool profiles: ``(columns, W)`` with ``W`` of shape (n_resamples, len(columns)).

    Domestic customers are resampled with replacement from their whole profile
    class; each non-domestic customer contributes its standard profile times
    a random scale. The two use separate random streams, so the domestic
    draws never depend on the scaling distribution.
    """
    B = cfg.n_resamples
    rng_dom = seeding.make_rng(cfg.seed, 0)
    rng_nd = seeding.make_rng(cfg.seed, 1)
    blocks, columns = [], []
    for pc in (1, 2):
        m = sum(1 for c in feeder.customers if c.is_domestic and c.cls.profile_class == pc)
        idx = pool.profile_class_indices(pc, cfg.include_solar)
        if m and not idx.size:
            raise EmptyCandidateGroupError(f"no monitored profile of class PC{pc} to resample")
        draws = rng_dom.integers(0, max(idx.size, 1), (B, m))
        counts = np.zeros((B, idx.size))
        if m:
            np.add.at(counts, (np.repeat(np.arange(B), m), draws.ravel()), 1.0)
        blocks.append(counts)
        columns.extend(idx.tolist())

    nondom = [c for c in feeder.customers if not c.is_domestic]
    if nondom:
        u = np.array([np.nan if c.qmr_mean_daily is None else c.qmr_mean_daily for c in nondom])
        if np.isnan(u).any():
            raise DataError(f"feeder {feeder.id}: unknown non-domestic mean daily demand; impute first")
        if cfg.scaling == "uniform":
            scales = rng_nd.uniform(ALPHA_MIN, ALPHA_MAX, (B, u.size)) * u
        else:
            scales = rng_nd.normal(u, gaussian_sigma(u), (B, u.size))
        blocks.append(scales)
        columns.extend(int(pool.candidates(c.group)[0]) for c in nondom)
    return np.array(columns, dtype=np.int64), np.hstack(blocks)


def bootstrap_bands(feeder: Feeder, pool: MonitoredPool, cfg: BootstrapConfig = BootstrapConfig(),
                    chunk_slots: int = 1024) -> ConfidenceBands:
    """Empirical per-slot quantiles of resampled feeder aggregates over the pool window."""
    columns, W = bootstrap_weights(feeder, pool, cfg)
    P = pool.matrix[columns]
    n = pool.n_slots
    lower, upper = np.empty(n), np.empty(n)
    for start in range(0, n, chunk_slots):
        stop = min(start + chunk_slots, n)
        q = np.quantile(W @ P[:, start:stop], cfg.quantiles, axis=0)
        lower[start:stop], upper[start:stop] = q
    return _bands(lower, upper, pool.start_date, f"bootstrap-{cfg.scaling}")


# --- quantile regression ------------------------------------------------------

def n_coefficients(P: int) -> int:
    return 4 + 2 * P


def design_matrix(days: np.ndarray, dates, P: int) -> np.ndarray:
    """Rows ``[1, d, Saturday, Sunday, sin(2 pi p d / 365), cos(...), ...]`` per day."""
    days = np.asarray(days, dtype=float)
    weekday = np.array([d.weekday() for d in dates])
    cols = [np.ones_like(days), days, (weekday == 5).astype(float), (weekday == 6).astype(float)]
    for p in range(1, P + 1):
        angle = 2 * np.pi * p * days / 365.0
        cols += [np.sin(angle), np.cos(angle)]
    return np.column_stack(cols)


def _day_index(origin: dt.date, start: dt.date, n_days: int):
    first = (start - origin).days + 1
    dates = [start + dt.timedelta(days=i) for i in range(n_days)]
    return np.arange(first, first + n_days), dates


@dataclass(frozen=True, eq=False)
class QuantileModel:
    """Per half-hour linear quantile model; day ``d = 1`` falls on ``origin``."""

    tau: float
    P: int
    origin: dt.date
    coef: np.ndarray  # (48, 4 + 2P)
    train_start: dt.date | None = None
    train_days: int | None = None

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ConfigError("tau must lie strictly inside (0, 1)")
        object.__setattr__(self, "origin", _as_date(self.origin))
        if self.train_start is not None:
            object.__setattr__(self, "train_start", _as_date(self.train_start))
        coef = np.array(self.coef, dtype=float)
        if coef.shape != (SLOTS_PER_DAY, n_coefficients(self.P)):
            raise DataError(f"coefficient array has shape {coef.shape}, "
                            f"expected {(SLOTS_PER_DAY, n_coefficients(self.P))}")
        if not np.all(np.isfinite(coef)):
            raise NumericalError("non-finite quantile-model coefficient")
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuantileModel):
            return NotImplemented
        return (self.tau, self.P, self.origin, self.train_start, self.train_days) == \
            (other.tau, other.P, other.origin, other.train_start, other.train_days) \
            and np.array_equal(self.coef, other.coef)

    def predict(self, start, n_days: int) -> np.ndarray:
        days, dates = _day_index(self.origin, _as_date(start), n_days)
        return (design_matrix(days, dates, self.P) @ self.coef.T).ravel()

    def to_dict(self) -> dict:
        return {"tau": self.tau, "P": self.P, "origin": self.origin.isoformat(),
                "train_start": None if self.train_start is None else self.train_start.isoformat(),
                "train_days": self.train_days, "coef": self.coef.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileModel":
        return cls(d["tau"], d["P"], d["origin"], np.array(d["coef"]), d.get("train_start"),
                   d.get("train_days"))

    def save(self, path) -> Path:
        return atomic_write(path, dump_json(self.to_dict()))

    @classmethod
    def load(cls, path) -> "QuantileModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _solve_lp(X: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    # min tau * 1'u + (1 - tau) * 1'v  s.t.  X b + u - v = y,  u, v >= 0
    n, k = X.shape
    eye = sp.identity(n, format="csr")
    A = sp.hstack([sp.csr_matrix(X), eye, -eye], format="csr")
    c = np.concatenate([np.zeros(k), np.full(n, tau), np.full(n, 1.0 - tau)])
    bounds = [(None, None)] * k + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=A, b_eq=y, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise NumericalError(f"quantile-regression LP failed: {res.message}")
    return res.x[:k]


def fit_quantile_model(substation: HalfHourlySeries, tau: float, P: int = 3, origin=None) -> QuantileModel:
    """Fit one linear quantile model per half-hour by linear programming.

    ``origin`` (the date of day 1) defaults to the first day of ``substation``;
    pass the dataset start when fitting on a sub-window.
    """
    if not 0 < tau < 1:
        raise ConfigError("tau must lie strictly inside (0, 1)")
    if P < 0:
        raise ConfigError("Fourier order P must be non-negative")
    if substation.n_days < 14:
        raise DataError("quantile regression needs at least two weeks of data")
    origin = substation.start_date if origin is None else _as_date(origin)
    days, dates = _day_index(origin, substation.start_date, substation.n_days)
    X = design_matrix(days, dates, P)
    scale = np.ones(X.shape[1])
    scale[1] = 365.0  # trend in years keeps the LP well conditioned
    Xs = X / scale
    sv = np.linalg.svd(Xs, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0] or X.shape[0] < X.shape[1]:
        raise RankDeficientError(
            f"design matrix is rank deficient for {substation.n_days} days with Fourier order P={P}; "
            "lower P or use a longer training window")
    Y = substation.by_day()
    coef = np.array([_solve_lp(Xs, Y[:, h], tau) / scale for h in range(SLOTS_PER_DAY)])
    return QuantileModel(float(tau), P, origin, coef, substation.start_date, substation.n_days)


def predict_bands(model_low: QuantileModel, model_high: QuantileModel, start, n_days: int) -> ConfidenceBands:
    """Evaluate both models over a window, swapping values wherever they cross."""
    if model_low.P != model_high.P or model_low.origin != model_high.origin:
        raise DataError("quantile models differ in Fourier order or day origin")
    start = _as_date(start)
    lo, hi = model_low.predict(start, n_days), model_high.predict(start, n_days)
    crossed = lo > hi
    lower, upper = np.where(crossed, hi, lo), np.where(crossed, lo, hi)
    return _bands(lower, upper, start, "qr", int(crossed.sum()))


def qr_bands(substation: HalfHourlySeries, start, n_days: int, *, P: int = 3,
             quantiles=(0.1, 0.9), origin=None) -> tuple[ConfidenceBands, QuantileModel, QuantileModel]:
    low = fit_quantile_model(substation, quantiles[0], P, origin)
    high = fit_quantile_model(substation, quantiles[1], P, origin)
    return predict_bands(low, high, start, n_days), low, high


# --- bands CSV --------------------------------------------------------------

def write_bands_csv(path, bands: ConfidenceBands) -> Path:
    lines = ["timestamp,lower_kwh,upper_kwh"]
    lines += [f"{_timestamp(t)},{_fmt(a)},{_fmt(b)}" for t, a, b in
              zip(bands.lower.timestamps(), bands.lower.values.tolist(), bands.upper.values.tolist())]
    return atomic_write(path, "\n".join(lines) + "\n")


def read_bands_csv(path, method: str = "file") -> ConfidenceBands:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["timestamp", "lower_kwh", "upper_kwh"]:
            raise DataError(f"{path}: header must be timestamp,lower_kwh,upper_kwh")
        rows = [(line, r) for line, r in enumerate(reader, start=2) if r]
    if not rows:
        raise DataError(f"{path}: no data rows")
    first = dt.datetime.fromisoformat(rows[0][1][0])
    step = dt.timedelta(minutes=30)
    lower, upper = [], []
    for i, (line, r) in enumerate(rows):
        if len(r) != 3 or r[0] != _timestamp(first + i * step):
            raise DataError(f"{path}: line {line}: malformed row or unexpected timestamp")
        lower.append(_parse_float(r[1], line, "lower_kwh"))
        upper.append(_parse_float(r[2], line, "upper_kwh"))
    if first.time() != dt.time():
        raise DataError(f"{path}: bands must start at midnight")
    return _bands(np.array(lower), np.array(upper), first.date(), method)
