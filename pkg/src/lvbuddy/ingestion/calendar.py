"""Holiday calendars and expansion of weekly standard shapes to normalised annual profiles."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from dateutil.easter import easter

from ..errors import DataError
from ..model import (HOLIDAY_RULES, SLOTS_PER_DAY, HalfHourlySeries, MonitoredProfile, GroupKey,
                     StandardProfile, _as_date)

BANK = "bank-holiday"
SCHOOL = "school-holiday"


@dataclass(frozen=True)
class HolidayCalendar:
    days: Mapping[dt.date, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for day, tags in dict(self.days).items():
            tags = frozenset(tags)
            unknown = tags - {BANK, SCHOOL}
            if unknown:
                raise DataError(f"unknown holiday tags {sorted(unknown)} on {day}")
            if tags:
                clean[_as_date(day)] = tags
        object.__setattr__(self, "days", dict(sorted(clean.items())))

    def tags(self, day: dt.date) -> frozenset[str]:
        return self.days.get(day, frozenset())

    def restricted(self, start, n_days: int) -> "HolidayCalendar":
        start = _as_date(start)
        end = start + dt.timedelta(days=n_days)
        return HolidayCalendar({d: t for d, t in self.days.items() if start <= d < end})

    def to_records(self) -> list[dict]:
        return [{"date": d.isoformat(), "tags": sorted(t)} for d, t in self.days.items()]

    @classmethod
    def from_records(cls, records) -> "HolidayCalendar":
        days: dict[dt.date, set] = {}
        for r in records:
            days.setdefault(_as_date(r["date"]), set()).update(r["tags"])
        return cls(days)

    @classmethod
    def england(cls, start, n_days: int) -> "HolidayCalendar":
        """Approximate English bank and school holidays covering a window."""
        start = _as_date(start)
        end = start + dt.timedelta(days=n_days)
        days: dict[dt.date, set] = {}

        def tag(day, name):
            if start <= day < end:
                days.setdefault(day, set()).add(name)

        def span(first, last, name):
            d = first
            while d <= last:
                tag(d, name)
                d += dt.timedelta(days=1)

        for year in range(start.year - 1, end.year + 1):
            for day in _bank_holidays(year):
                tag(day, BANK)
            e = easter(year)
            february = _first_weekday(year, 2, 0) + dt.timedelta(days=14)
            span(february, february + dt.timedelta(days=4), SCHOOL)
            span(e - dt.timedelta(days=9), e + dt.timedelta(days=8), SCHOOL)
            may = _last_weekday(year, 5, 0)
            span(may, may + dt.timedelta(days=4), SCHOOL)
            span(dt.date(year, 7, 21), dt.date(year, 9, 4), SCHOOL)
            october = _last_weekday(year, 10, 0)
            span(october, october + dt.timedelta(days=4), SCHOOL)
            span(dt.date(year, 12, 20), dt.date(year + 1, 1, 4), SCHOOL)
        return cls(days)


def _first_weekday(year, month, weekday) -> dt.date:
    d = dt.date(year, month, 1)
    return d + dt.timedelta(days=(weekday - d.weekday()) % 7)


def _last_weekday(year, month, weekday) -> dt.date:
    nxt = dt.date(year + month // 12, month % 12 + 1, 1)
    d = nxt - dt.timedelta(days=1)
    return d - dt.timedelta(days=(d.weekday() - weekday) % 7)


def _bank_holidays(year: int) -> list[dt.date]:
    e = easter(year)
    fixed = []
    new_year = dt.date(year, 1, 1)
    while new_year.weekday() >= 5:
        new_year += dt.timedelta(days=1)
    fixed.append(new_year)
    christmas, boxing = dt.date(year, 12, 25), dt.date(year, 12, 26)
    if christmas.weekday() == 5:
        christmas, boxing = dt.date(year, 12, 27), dt.date(year, 12, 28)
    elif christmas.weekday() == 6:
        christmas = dt.date(year, 12, 27)
    elif boxing.weekday() == 5:
        boxing = dt.date(year, 12, 28)
    return fixed + [e - dt.timedelta(days=2), e + dt.timedelta(days=1),
                    _first_weekday(year, 5, 0), _last_weekday(year, 5, 0),
                    _last_weekday(year, 8, 0), christmas, boxing]


def expand_weekly(sp: StandardProfile, start, n_days: int,
                  calendar: HolidayCalendar | None = None,
                  rules: Mapping[str, str] | None = None) -> np.ndarray:
    """Tile the weekly shape by weekday, substituting non-operational days; not normalised."""
    start = _as_date(start)
    if n_days < 7:
        raise DataError(f"annualisation window of {n_days} days is shorter than a week")
    rule = (rules or {}).get(sp.type_tag, sp.holiday_rule)
    if rule not in HOLIDAY_RULES:
        raise DataError(f"unknown holiday rule {rule!r} for {sp.type_tag}")
    triggers = HOLIDAY_RULES[rule]
    weekly = sp.weekly_shape.reshape(7, SLOTS_PER_DAY)
    out = np.empty((n_days, SLOTS_PER_DAY))
    for i in range(n_days):
        day = start + dt.timedelta(days=i)
        if calendar is not None and calendar.tags(day) & triggers:
            out[i] = sp.non_operational_shape
        else:
            out[i] = weekly[day.weekday()]
    return out.ravel()


def annualize_standard_profile(sp: StandardProfile, start, n_days: int,
                               calendar: HolidayCalendar | None = None,
                               rules: Mapping[str, str] | None = None) -> HalfHourlySeries:
    """Expand ``sp`` over the window and rescale to exactly 1 kWh/day on average."""
    values = expand_weekly(sp, start, n_days, calendar, rules)
    total = values.sum()
    if total <= 0:
        raise DataError(f"{sp.type_tag}: expanded profile has no demand in the window")
    return HalfHourlySeries(start, values * (n_days / total))


def standard_pool_profiles(catalogue, start, n_days: int,
                           calendar: HolidayCalendar | None = None) -> list[MonitoredProfile]:
    """Annualised standard profiles as pool members (id ``std:<type>``)."""
    return [MonitoredProfile(f"std:{sp.type_tag}", GroupKey("nd", type_tag=sp.type_tag),
                             annualize_standard_profile(sp, start, n_days, calendar))
            for sp in catalogue]
