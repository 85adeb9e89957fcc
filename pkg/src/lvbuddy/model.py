"""Domain types shared by every stage: series, customers, pools, feeders, assignments."""

from __future__ import annotations

import datetime as dt
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DataError, EmptyCandidateGroupError, WindowMismatchError

SLOTS_PER_DAY = 48
DAYS_PER_WEEK = 7
SLOTS_PER_WEEK = SLOTS_PER_DAY * DAYS_PER_WEEK

TAX_BANDS = "ABCDEFGH"
# Sparse high bands share one group, giving six groups per profile class.
BAND_GROUP = {"A": "A", "B": "B", "C": "C", "D": "D", "E": "E",
              "F": "FGH", "G": "FGH", "H": "FGH"}
BAND_GROUPS = ("A", "B", "C", "D", "E", "FGH")

ALPHA_MIN = 0.8
ALPHA_MAX = 1.2


def _as_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, str):
        return dt.date.fromisoformat(value)
    raise TypeError(f"cannot interpret {value!r} as a date")


def _readonly(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class HalfHourlySeries:
    """kWh per half-hour over whole days starting at ``start_date`` 00:00.

    Slot ``t`` covers ``start_date + t // 48`` at half-hour ``t % 48``.
    Time is naive local clock time; every day has exactly 48 slots.
    """

    start_date: dt.date
    values: np.ndarray
    allows_negative: bool = False

    def __post_init__(self):
        object.__setattr__(self, "start_date", _as_date(self.start_date))
        values = _readonly(self.values)
        if values.ndim != 1:
            raise DataError("series values must be one-dimensional")
        if values.size == 0 or values.size % SLOTS_PER_DAY:
            raise DataError(
                f"series length {values.size} is not a positive multiple of {SLOTS_PER_DAY}")
        if not np.all(np.isfinite(values)):
            raise DataError("series contains non-finite values")
        if not self.allows_negative and np.any(values < 0):
            raise DataError("series contains negative values but is not flagged allows_negative")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, HalfHourlySeries):
            return NotImplemented
        return (self.start_date == other.start_date
                and self.allows_negative == other.allows_negative
                and np.array_equal(self.values, other.values))

    __hash__ = None

    @property
    def n_days(self) -> int:
        return self.values.size // SLOTS_PER_DAY

    @property
    def end_date(self) -> dt.date:
        """First date after the series (exclusive bound)."""
        return self.start_date + dt.timedelta(days=self.n_days)

    def by_day(self) -> np.ndarray:
        """Read-only ``(n_days, 48)`` view."""
        return self.values.reshape(self.n_days, SLOTS_PER_DAY)

    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=i) for i in range(self.n_days)]

    def slot(self, t: int) -> tuple[dt.date, int]:
        if not 0 <= t < len(self):
            raise IndexError(t)
        return self.start_date + dt.timedelta(days=t // SLOTS_PER_DAY), t % SLOTS_PER_DAY

    def timestamps(self) -> list[dt.datetime]:
        origin = dt.datetime.combine(self.start_date, dt.time())
        step = dt.timedelta(minutes=30)
        return [origin + i * step for i in range(len(self))]

    def slot_of_week(self) -> np.ndarray:
        """Index 0..335 (Monday 00:00 = 0) for every slot."""
        t = np.arange(len(self))
        weekday = (self.start_date.weekday() + t // SLOTS_PER_DAY) % DAYS_PER_WEEK
        return weekday * SLOTS_PER_DAY + t % SLOTS_PER_DAY

    def same_window(self, other: "HalfHourlySeries") -> bool:
        return self.start_date == other.start_date and len(self) == len(other)

    def covers(self, start: dt.date, n_days: int) -> bool:
        start = _as_date(start)
        return self.start_date <= start and start + dt.timedelta(days=n_days) <= self.end_date

    def window(self, start, n_days: int) -> "HalfHourlySeries":
        start = _as_date(start)
        if n_days < 1 or not self.covers(start, n_days):
            raise WindowMismatchError(
                f"window {start} + {n_days}d outside series {self.start_date}..{self.end_date}")
        offset = (start - self.start_date).days * SLOTS_PER_DAY
        return HalfHourlySeries(start, self.values[offset:offset + n_days * SLOTS_PER_DAY],
                                self.allows_negative)

    def with_values(self, values) -> "HalfHourlySeries":
        return HalfHourlySeries(self.start_date, values, self.allows_negative)


def mean_daily_demand(series) -> float:
    """Mean kWh per day: total energy divided by the number of whole days."""
    values = series.values if isinstance(series, HalfHourlySeries) else np.asarray(series, float)
    if values.size == 0:
        raise DataError("mean daily demand of an empty series is undefined")
    if values.size % SLOTS_PER_DAY:
        raise DataError(f"series length {values.size} is not a multiple of {SLOTS_PER_DAY}")
    return float(values.sum() / (values.size // SLOTS_PER_DAY))


# --- customer classes -------------------------------------------------------

@dataclass(frozen=True)
class Domestic:
    profile_class: int
    tax_band: str
    has_solar: bool = False

    def __post_init__(self):
        if self.profile_class not in (1, 2):
            raise DataError(f"domestic profile class must be 1 or 2, got {self.profile_class!r}")
        if self.tax_band not in TAX_BANDS or len(self.tax_band) != 1:
            raise DataError(f"unknown council tax band {self.tax_band!r}")

    @property
    def label(self) -> str:
        return f"PC{self.profile_class}-{self.tax_band}" + ("-PV" if self.has_solar else "")


@dataclass(frozen=True)
class NonDomestic:
    type_tag: str

    def __post_init__(self):
        from .catalogue import registered_types

        if self.type_tag not in registered_types():
            raise DataError(f"unregistered non-domestic type {self.type_tag!r}; "
                            f"registered: {sorted(registered_types())}")

    @property
    def label(self) -> str:
        return f"ND-{self.type_tag}"


CustomerClass = Union[Domestic, NonDomestic]


def parse_customer_class(label: str) -> CustomerClass:
    """Inverse of ``.label``: ``PC1-D``, ``PC2-F-PV``, ``ND-school``."""
    if label.startswith("ND-"):
        return NonDomestic(label[3:])
    parts = label.split("-")
    if len(parts) in (2, 3) and parts[0] in ("PC1", "PC2"):
        if len(parts) == 3 and parts[2] != "PV":
            raise DataError(f"malformed customer class {label!r}")
        return Domestic(int(parts[0][2]), parts[1], len(parts) == 3)
    raise DataError(f"malformed customer class {label!r}")


@dataclass(frozen=True, order=True)
class GroupKey:
    """Candidate sub-pool a customer may be buddied from."""

    kind: str
    profile_class: int = 0
    band_group: str = ""
    solar: bool = False
    type_tag: str = ""

    @classmethod
    def of(cls, customer_class: CustomerClass) -> "GroupKey":
        if isinstance(customer_class, Domestic):
            return cls("dom", customer_class.profile_class,
                       BAND_GROUP[customer_class.tax_band], customer_class.has_solar)
        return cls("nd", type_tag=customer_class.type_tag)

    @classmethod
    def parse(cls, label: str) -> "GroupKey":
        if label.startswith("ND-") and len(label) > 3:
            return cls("nd", type_tag=label[3:])
        parts = label.split("-")
        if (len(parts) in (2, 3) and parts[0] in ("PC1", "PC2") and parts[1] in BAND_GROUPS
                and (len(parts) == 2 or parts[2] == "PV")):
            return cls("dom", int(parts[0][2]), parts[1], len(parts) == 3)
        raise DataError(f"unknown group label {label!r}; valid labels: "
                        f"{', '.join(valid_group_labels())}, or ND-<type_tag>")

    @property
    def is_domestic(self) -> bool:
        return self.kind == "dom"

    @property
    def label(self) -> str:
        if self.kind == "nd":
            return f"ND-{self.type_tag}"
        return f"PC{self.profile_class}-{self.band_group}" + ("-PV" if self.solar else "")

    def __str__(self) -> str:
        return self.label


def valid_group_labels() -> list[str]:
    return [f"PC{pc}-{band}{pv}" for pc in (1, 2) for band in BAND_GROUPS for pv in ("", "-PV")]


@dataclass(frozen=True)
class Customer:
    id: str
    cls: CustomerClass
    qmr_mean_daily: float | None = None

    def __post_init__(self):
        u = self.qmr_mean_daily
        if u is not None and not (np.isfinite(u) and u > 0):
            raise DataError(f"customer {self.id}: mean daily demand must be positive, got {u!r}")

    @property
    def group(self) -> GroupKey:
        return GroupKey.of(self.cls)

    @property
    def is_domestic(self) -> bool:
        return isinstance(self.cls, Domestic)


# --- profiles and pools -----------------------------------------------------

@dataclass(frozen=True)
class MonitoredProfile:
    id: str
    group: GroupKey
    series: HalfHourlySeries
    mean_daily: float = None  # type: ignore[assignment]

    def __post_init__(self):
        actual = mean_daily_demand(self.series)
        if self.mean_daily is None:
            object.__setattr__(self, "mean_daily", actual)
        elif not np.isclose(self.mean_daily, actual, rtol=1e-9, atol=0.0):
            raise DataError(f"profile {self.id}: cached mean daily {self.mean_daily} != {actual}")


@dataclass(frozen=True, eq=False)
class StandardProfile:
    """Typical week for a non-domestic type plus the shape used on non-operational days."""

    type_tag: str
    weekly_shape: np.ndarray
    non_operational_shape: np.ndarray
    holiday_rule: str = "bank"

    def __post_init__(self):
        weekly = _readonly(self.weekly_shape)
        non_op = _readonly(self.non_operational_shape)
        if weekly.shape != (SLOTS_PER_WEEK,):
            raise DataError(f"{self.type_tag}: weekly_shape needs {SLOTS_PER_WEEK} slots")
        if non_op.shape != (SLOTS_PER_DAY,):
            raise DataError(f"{self.type_tag}: non_operational_shape needs {SLOTS_PER_DAY} slots")
        for arr in (weekly, non_op):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise DataError(f"{self.type_tag}: shapes must be finite and non-negative")
        if weekly.sum() <= 0:
            raise DataError(f"{self.type_tag}: weekly_shape is identically zero")
        if self.holiday_rule not in HOLIDAY_RULES:
            raise DataError(f"{self.type_tag}: holiday_rule must be one of {sorted(HOLIDAY_RULES)}")
        object.__setattr__(self, "weekly_shape", weekly)
        object.__setattr__(self, "non_operational_shape", non_op)

    def __eq__(self, other) -> bool:
        if not isinstance(other, StandardProfile):
            return NotImplemented
        return (self.type_tag == other.type_tag and self.holiday_rule == other.holiday_rule
                and np.array_equal(self.weekly_shape, other.weekly_shape)
                and np.array_equal(self.non_operational_shape, other.non_operational_shape))

    __hash__ = None


# holiday tags that trigger non-operational substitution, per rule
HOLIDAY_RULES = {
    "school": frozenset({"bank-holiday", "school-holiday"}),
    "bank": frozenset({"bank-holiday"}),
    "never": frozenset(),
}


@dataclass(frozen=True, eq=False)
class MonitoredPool:
    """The monitored profiles plus normalised standard profiles, on one shared window."""

    profiles: tuple[MonitoredProfile, ...]
    _matrix: np.ndarray = field(init=False, repr=False)
    _mean_daily: np.ndarray = field(init=False, repr=False)
    _groups: dict = field(init=False, repr=False)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        profiles = tuple(self.profiles)
        if not profiles:
            raise DataError("monitored pool is empty")
        first = profiles[0].series
        index = {}
        groups = defaultdict(list)
        for i, p in enumerate(profiles):
            if p.id in index:
                raise DataError(f"duplicate profile id {p.id!r}")
            if not p.series.same_window(first):
                raise WindowMismatchError(f"profile {p.id} does not share the pool window")
            index[p.id] = i
            groups[p.group].append(i)
        object.__setattr__(self, "profiles", profiles)
        object.__setattr__(self, "_matrix", _readonly(np.stack([p.series.values for p in profiles])))
        object.__setattr__(self, "_mean_daily", _readonly([p.mean_daily for p in profiles]))
        object.__setattr__(self, "_groups", {g: _readonly(ix, np.int64) for g, ix in groups.items()})
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.profiles)

    def __getitem__(self, i: int) -> MonitoredProfile:
        return self.profiles[i]

    @property
    def start_date(self) -> dt.date:
        return self.profiles[0].series.start_date

    @property
    def n_days(self) -> int:
        return self.profiles[0].series.n_days

    @property
    def n_slots(self) -> int:
        return self._matrix.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        """``(N, 48 d)`` read-only stack of profile values."""
        return self._matrix

    @property
    def mean_daily(self) -> np.ndarray:
        return self._mean_daily

    @property
    def groups(self) -> list[GroupKey]:
        return sorted(self._groups)

    def index_of(self, profile_id: str) -> int:
        return self._index[profile_id]

    def candidates(self, group: GroupKey) -> np.ndarray:
        """Pool indices in ``group``, ascending."""
        try:
            return self._groups[group]
        except KeyError:
            raise EmptyCandidateGroupError(f"no monitored profile in group {group}") from None

    def profile_class_indices(self, profile_class: int, include_solar: bool = True) -> np.ndarray:
        ix = [i for g, members in self._groups.items() for i in members
              if g.is_domestic and g.profile_class == profile_class
              and (include_solar or not g.solar)]
        return np.array(sorted(ix), dtype=np.int64)

    def window(self, start, n_days: int) -> "MonitoredPool":
        """Restrict every profile to a sub-window, recomputing mean daily demands."""
        return MonitoredPool(tuple(
            MonitoredProfile(p.id, p.group, p.series.window(start, n_days)) for p in self.profiles))

    def audit(self) -> None:
        """Raise if any cached mean daily demand disagrees with its series."""
        for p in self.profiles:
            actual = mean_daily_demand(p.series)
            if not np.isclose(p.mean_daily, actual, rtol=1e-9, atol=0.0):
                raise DataError(f"profile {p.id}: cached mean daily {p.mean_daily} != {actual}")


@dataclass(frozen=True)
class Feeder:
    id: str
    customers: tuple[Customer, ...]
    substation_series: HalfHourlySeries | None = None

    def __post_init__(self):
        customers = tuple(self.customers)
        if not customers:
            raise DataError(f"feeder {self.id} has no customers")
        ids = [c.id for c in customers]
        if len(set(ids)) != len(ids):
            raise DataError(f"feeder {self.id} lists a customer twice")
        object.__setattr__(self, "customers", customers)

    @property
    def M(self) -> int:
        return len(self.customers)

    @property
    def M_dom(self) -> int:
        return sum(c.is_domestic for c in self.customers)

    @property
    def M_com(self) -> int:
        return self.M - self.M_dom

    @property
    def proportion_nondomestic(self) -> float:
        return self.M_com / self.M

    def replace_customers(self, customers: Sequence[Customer]) -> "Feeder":
        return Feeder(self.id, tuple(customers), self.substation_series)

    def replace_substation(self, series: HalfHourlySeries | None) -> "Feeder":
        return Feeder(self.id, self.customers, series)


@dataclass(frozen=True)
class BuddyAssignment:
    """Per customer: pool index of the buddy, and alpha for non-domestic customers."""

    profile_ids: tuple[int, ...]
    alphas: tuple[float | None, ...]

    def __post_init__(self):
        ids = tuple(int(k) for k in self.profile_ids)
        alphas = tuple(None if a is None else float(a) for a in self.alphas)
        if len(ids) != len(alphas):
            raise DataError("profile_ids and alphas differ in length")
        for a in alphas:
            if a is not None and not ALPHA_MIN <= a <= ALPHA_MAX:
                raise DataError(f"alpha {a} outside [{ALPHA_MIN}, {ALPHA_MAX}]")
        object.__setattr__(self, "profile_ids", ids)
        object.__setattr__(self, "alphas", alphas)

    def __len__(self) -> int:
        return len(self.profile_ids)

    def validate(self, feeder: Feeder, pool: MonitoredPool) -> None:
        if len(self) != feeder.M:
            raise DataError(f"assignment has {len(self)} entries for {feeder.M} customers")
        for c, k, a in zip(feeder.customers, self.profile_ids, self.alphas):
            if not 0 <= k < len(pool):
                raise DataError(f"customer {c.id}: profile index {k} outside pool")
            if pool[k].group != c.group:
                raise DataError(f"customer {c.id} ({c.group}) buddied to {pool[k].id} ({pool[k].group})")
            if (a is None) == (not c.is_domestic):
                raise DataError(f"customer {c.id}: alpha must be set iff non-domestic")


def aggregate_assignment(feeder: Feeder, assignment: BuddyAssignment,
                         pool: MonitoredPool) -> HalfHourlySeries:
    """Slot-wise feeder demand implied by an assignment, on the pool's window.

    Domestic buddies add their monitored series; non-domestic customers add
    ``alpha_j * U_j`` times their normalised standard profile.
    """
    assignment.validate(feeder, pool)
    s = feeder.substation_series
    if s is not None and not s.covers(pool.start_date, pool.n_days):
        raise WindowMismatchError(f"feeder {feeder.id}: substation series does not cover the pool window")
    total = np.zeros(pool.n_slots)
    negative = False
    for c, k, alpha in zip(feeder.customers, assignment.profile_ids, assignment.alphas):
        negative |= pool[k].series.allows_negative
        if c.is_domestic:
            total += pool.matrix[k]
        else:
            if c.qmr_mean_daily is None:
                raise DataError(f"customer {c.id}: mean daily demand unknown; impute first")
            total += alpha * c.qmr_mean_daily * pool.matrix[k]
    return HalfHourlySeries(pool.start_date, total, allows_negative=negative or bool(np.any(total < 0)))


def impute_mean_daily(feeders: Iterable[Feeder]) -> list[Feeder]:
    """Fill unknown U_j network-wide.

    Uses the mean of known values in the same group; failing that, of all
    customers of the same kind (domestic or non-domestic).
    """
    feeders = list(feeders)
    by_group = defaultdict(list)
    by_kind = defaultdict(list)
    for f in feeders:
        for c in f.customers:
            if c.qmr_mean_daily is not None:
                by_group[c.group].append(c.qmr_mean_daily)
                by_kind[c.is_domestic].append(c.qmr_mean_daily)
    out = []
    for f in feeders:
        customers = []
        for c in f.customers:
            if c.qmr_mean_daily is None:
                known = by_group.get(c.group) or by_kind.get(c.is_domestic)
                if not known:
                    raise DataError(f"customer {c.id}: no known mean daily demand to impute from")
                c = Customer(c.id, c.cls, float(np.mean(known)))
            customers.append(c)
        out.append(f.replace_customers(customers))
    return out
