"""Replacement of missing, negative and outlying half-hours by same-slot neighbours."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, UnusableSeriesError
from ..model import SLOTS_PER_DAY, SLOTS_PER_WEEK, HalfHourlySeries, _as_date


@dataclass(frozen=True)
class CleaningPolicy:
    donors: int = 4
    outlier_sigmas: float = 5.0
    max_missing_fraction: float = 0.5
    # floor on the slot-of-week std, relative to its mean
    min_relative_std: float = 1e-6
    max_passes: int = 10


@dataclass(frozen=True)
class Replacement:
    index: int
    kind: str  # "missing" | "negative" | "outlier"
    original: float
    value: float


@dataclass(frozen=True)
class CleaningReport:
    n_missing: int = 0
    n_negative: int = 0
    n_outlier: int = 0
    replacements: tuple[Replacement, ...] = ()
    policy: CleaningPolicy = field(default_factory=CleaningPolicy)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(r.index for r in self.replacements)

    @property
    def n_replaced(self) -> int:
        return len(self.replacements)

    def __bool__(self) -> bool:
        return bool(self.replacements)


def _slot_of_week(start: dt.date, n: int) -> np.ndarray:
    t = np.arange(n)
    return ((start.weekday() + t // SLOTS_PER_DAY) % 7) * SLOTS_PER_DAY + t % SLOTS_PER_DAY


def _flag_outliers(values, valid, sow, policy) -> np.ndarray:
    """Readings above their slot-of-week mean plus ``outlier_sigmas`` standard deviations.

    Statistics include the reading under test, so with ``k`` weeks a single
    reading can sit at most ``(k - 1) / sqrt(k)`` deviations above the mean;
    a 5-sigma test therefore needs at least 27 weeks. Flagged readings are
    dropped from the statistics and the test repeated.
    """
    flagged = np.zeros(values.size, dtype=bool)
    order = np.argsort(sow, kind="stable")
    groups = np.split(order, np.flatnonzero(np.diff(sow[order])) + 1)
    for _ in range(policy.max_passes):
        ref = valid & ~flagged
        new = np.zeros_like(flagged)
        for members in groups:
            idx = members[ref[members]]
            if idx.size < 2:
                continue
            x = values[idx]
            mean = x.mean()
            std = max(x.std(), policy.min_relative_std * abs(mean))
            new[idx[x > mean + policy.outlier_sigmas * std]] = True
        if not new.any():
            break
        flagged |= new
    return flagged


def _donor_mean(values, good, i, sow_step, policy) -> float | None:
    n = values.size
    offsets = []
    m = 1
    while len(offsets) < policy.donors and (i - m * sow_step >= 0 or i + m * sow_step < n):
        for j in (i - m * sow_step, i + m * sow_step):
            if 0 <= j < n and good[j] and len(offsets) < policy.donors:
                offsets.append(j)
        m += 1
    if not offsets:
        return None
    return float(values[offsets].mean())


def clean_series(series, start_date=None, *, allows_negative: bool | None = None,
                 policy: CleaningPolicy | None = None) -> tuple[HalfHourlySeries, CleaningReport]:
    """Replace anomalous slots by the mean of nearby same-weekday, same-half-hour readings.

    ``series`` is a :class:`HalfHourlySeries` or a raw array (NaN = missing),
    in which case ``start_date`` is required. Donors are the ``policy.donors``
    nearest valid readings at whole-week offsets; if none exist, the nearest
    valid readings of the same half-hour on other days are used.
    """
    policy = policy or CleaningPolicy()
    if isinstance(series, HalfHourlySeries):
        start_date = series.start_date
        if allows_negative is None:
            allows_negative = series.allows_negative
        values = np.array(series.values, dtype=float)
    else:
        if start_date is None:
            raise DataError("start_date is required for raw values")
        start_date = _as_date(start_date)
        values = np.array(series, dtype=float)
    allows_negative = bool(allows_negative)
    n = values.size
    if values.ndim != 1 or n % SLOTS_PER_DAY:
        raise DataError(f"series length {n} is not a multiple of {SLOTS_PER_DAY}")
    if n < SLOTS_PER_WEEK:
        raise DataError("cleaning needs at least one week of data")

    missing = ~np.isfinite(values)
    if missing.mean() > policy.max_missing_fraction:
        raise UnusableSeriesError(f"{missing.mean():.0%} of slots missing")
    negative = ~missing & (values < 0) if not allows_negative else np.zeros(n, dtype=bool)
    valid = ~missing & ~negative
    sow = _slot_of_week(start_date, n)
    outlier = _flag_outliers(values, valid, sow, policy)
    bad = missing | negative | outlier
    if not bad.any():
        return HalfHourlySeries(start_date, values, allows_negative), CleaningReport(policy=policy)

    cleaned = values.copy()
    kinds = np.where(missing, "missing", np.where(negative, "negative", "outlier"))
    replaced: dict[int, Replacement] = {}
    # repeat until nothing new is flagged, so cleaning a cleaned series is a no-op
    for _ in range(policy.max_passes):
        good = ~bad
        for i in np.flatnonzero(bad):
            value = _donor_mean(cleaned, good, i, SLOTS_PER_WEEK, policy)
            if value is None:
                value = _donor_mean(cleaned, good, i, SLOTS_PER_DAY, policy)
            if value is None:
                raise UnusableSeriesError(f"no valid reading to replace slot {i}")
            replaced[int(i)] = Replacement(int(i), str(kinds[i]), float(values[i]), value)
        for r in replaced.values():
            cleaned[r.index] = r.value
        bad = _flag_outliers(cleaned, np.ones(n, dtype=bool), sow, policy)
        if not bad.any():
            break
        outlier |= bad
    replacements = [replaced[i] for i in sorted(replaced)]
    report = CleaningReport(int(missing.sum()), int(negative.sum()), int(outlier.sum()),
                            tuple(replacements), policy)
    return HalfHourlySeries(start_date, cleaned, allows_negative), report
