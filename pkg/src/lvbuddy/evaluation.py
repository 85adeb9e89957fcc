"""Error metrics, power-law error curves, alpha histograms and feeder summaries."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .errors import DataError, DegenerateNormalizerError, WindowMismatchError
from .ingestion.files import _fmt, atomic_write
from .model import ALPHA_MAX, ALPHA_MIN, SLOTS_PER_WEEK, BuddyAssignment, Feeder, HalfHourlySeries
from .uncertainty import ConfidenceBands, pinball

CRPS_DEFINITION = ("mean over slots of 0.5*(pinball_0.1(y - lower) + pinball_0.9(y - upper)), "
                   "divided by the mean half-hourly demand of y")


def _values(x, ref: HalfHourlySeries | None = None) -> np.ndarray:
    if isinstance(x, HalfHourlySeries):
        if ref is not None and not x.same_window(ref):
            raise WindowMismatchError("series cover different windows")
        return x.values
    return np.asarray(x, dtype=float)


def rmae(actual, estimate) -> float:
    """Total absolute error divided by total actual demand."""
    ref = actual if isinstance(actual, HalfHourlySeries) else None
    s, a = _values(actual), _values(estimate, ref)
    if s.shape != a.shape:
        raise WindowMismatchError(f"length mismatch: {s.shape} vs {a.shape}")
    S = s.sum()
    if S <= 0:
        raise DegenerateNormalizerError(f"total actual demand is {S}")
    return float(np.abs(s - a).sum() / S)


def normalized_crps(actual, bands: ConfidenceBands, quantiles=(0.1, 0.9)) -> float:
    """Two-quantile pinball average, normalised by the mean half-hourly demand."""
    if isinstance(actual, HalfHourlySeries) and not actual.same_window(bands.lower):
        raise WindowMismatchError("actual series and bands cover different windows")
    y = _values(actual)
    if y.shape != bands.lower.values.shape:
        raise WindowMismatchError("actual series and bands differ in length")
    mean = y.mean()
    if mean <= 0:
        raise DegenerateNormalizerError(f"mean demand is {mean}")
    score = 0.5 * (pinball(y - bands.lower.values, quantiles[0]) + pinball(y - bands.upper.values, quantiles[1]))
    return float(score.mean() / mean)


def mean_demand(series) -> float:
    """Mean half-hourly demand (kWh)."""
    return float(_values(series).mean())


# --- power law ------------------------------------------------------------------

@dataclass(frozen=True)
class PowerLawFit:
    """``y = a * x**(-b)`` fitted in log-log space, with multiplicative bounds."""

    a: float
    b: float
    log_residual_std: float
    lower_factor: float
    upper_factor: float
    n: int
    r_squared: float
    confidence: float
    x: tuple[float, ...]
    y: tuple[float, ...]
    inside: tuple[bool, ...]

    def predict(self, x):
        return self.a * np.asarray(x, dtype=float) ** (-self.b)

    def bounds(self, x):
        fit = self.predict(x)
        return fit * self.lower_factor, fit * self.upper_factor

    @property
    def n_outside(self) -> int:
        return self.n - sum(self.inside)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PowerLawFit":
        d = dict(d)
        for k in ("x", "y", "inside"):
            d[k] = tuple(d[k])
        return cls(**d)


def power_law_fit(x, y=None, confidence: float = 0.99) -> PowerLawFit:
    """Least-squares line through ``(log x, log y)``.

    Accepts ``power_law_fit(points)`` with ``(x, y)`` pairs or ``power_law_fit(x, y)``.
    Bounds are the fitted line times ``exp(+-z * s)`` where ``s`` is the
    residual standard deviation (two fitted parameters) and ``z`` the normal
    quantile for the two-sided ``confidence``.
    """
    if y is None:
        pts = np.asarray(x, dtype=float).reshape(-1, 2)
        x, y = pts[:, 0], pts[:, 1]
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("x and y must be 1-d arrays of equal length")
    if x.size < 3:
        raise DataError(f"power-law fit needs at least 3 points, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(x > 0) and np.all(y > 0)):
        raise DataError("power-law fit needs finite, strictly positive coordinates")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise DataError("power-law fit needs at least two distinct x values")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (intercept + slope * lx)
    s = float(np.sqrt((resid ** 2).sum() / (x.size - 2)))
    ss_tot = ((ly - ly.mean()) ** 2).sum()
    r2 = float(1.0 - (resid ** 2).sum() / ss_tot) if ss_tot > 0 else 1.0
    z = float(norm.ppf(0.5 + confidence / 2))
    inside = np.abs(resid) <= z * s * (1 + 1e-12) + 1e-15
    return PowerLawFit(float(np.exp(intercept)), float(-slope), s, float(np.exp(-z * s)), float(np.exp(z * s)),
                       int(x.size), r2, confidence, tuple(x.tolist()), tuple(y.tolist()),
                       tuple(bool(v) for v in inside))


# --- alpha histograms ------------------------------------------------------------

@dataclass(frozen=True)
class AlphaHistogram:
    edges: np.ndarray
    counts: dict  # w -> (n_bins,) int array


def _alphas(items) -> list[float]:
    out = []
    for item in items:
        if isinstance(item, BuddyAssignment):
            out.extend(a for a in item.alphas if a is not None)
        elif item is not None:
            out.append(float(item))
    return out


def alpha_histogram(by_w: Mapping[float, Iterable], bins: int = 20) -> AlphaHistogram:
    """Counts of non-domestic alphas in equal bins over [0.8, 1.2], per weight.

    Values of ``by_w`` are iterables of assignments or of alpha values.
    """
    edges = np.linspace(ALPHA_MIN, ALPHA_MAX, bins + 1)
    counts = {float(w): np.histogram(_alphas(items), bins=edges)[0] for w, items in sorted(by_w.items())}
    return AlphaHistogram(edges, counts)


# --- feeder characterisation ------------------------------------------------------

BUCKETS = ("none", "small", "medium", "large")


def proportion_bucket(proportion: float) -> str:
    """none (0), small (< 5%), medium (5-10%), large (> 10%)."""
    if not 0 <= proportion <= 1:
        raise DataError(f"proportion {proportion} outside [0, 1]")
    if proportion == 0:
        return "none"
    if proportion < 0.05:
        return "small"
    return "medium" if proportion <= 0.10 else "large"


@dataclass(frozen=True, eq=False)
class FeederSummary:
    feeder_id: str
    daily_totals: np.ndarray
    weekly_profile: np.ndarray  # 336 values, Monday 00:00 first
    proportion_nondomestic: float
    bucket: str
    mean_demand: float


def feeder_summary(feeder: Feeder) -> FeederSummary:
    s = feeder.substation_series
    if s is None:
        raise DataError(f"feeder {feeder.id}: substation series required for a summary")
    if s.n_days < 7:
        raise DataError(f"feeder {feeder.id}: a weekly profile needs at least 7 days")
    sow = s.slot_of_week()
    weekly = np.bincount(sow, weights=s.values, minlength=SLOTS_PER_WEEK) / \
        np.bincount(sow, minlength=SLOTS_PER_WEEK)
    p = feeder.proportion_nondomestic
    return FeederSummary(feeder.id, s.by_day().sum(axis=1), weekly, p, proportion_bucket(p), mean_demand(s))


# --- CSV tables ----------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v)


def write_rows_csv(path, columns: Sequence[str], rows: Iterable[Mapping]) -> Path:
    lines = [",".join(columns)]
    lines += [",".join(_cell(r.get(c)) for c in columns) for r in rows]
    return atomic_write(path, "\n".join(lines) + "\n")


def read_rows_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def power_law_curve_rows(fit: PowerLawFit, n: int = 100) -> list[dict]:
    """Fit curve and bounds sampled log-uniformly over the data range."""
    xs = np.geomspace(min(fit.x), max(fit.x), n)
    lo, hi = fit.bounds(xs)
    return [{"x": float(x), "fit": float(f), "lower": float(a), "upper": float(b)}
            for x, f, a, b in zip(xs, fit.predict(xs), lo, hi)]


def histogram_rows(hist: AlphaHistogram) -> list[dict]:
    return [{"w": w, "bin_lower": float(hist.edges[i]), "bin_upper": float(hist.edges[i + 1]),
             "count": int(c[i])}
            for w, c in hist.counts.items() for i in range(len(hist.edges) - 1)]
