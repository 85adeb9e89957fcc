"""Readers and writers for the on-disk dataset formats.

Layout of a dataset directory::

    profiles.csv        id,group,start_date,v0,v1,...
    qmr.csv             customer_id,class,mean_daily_kwh
    topology.json       [{feeder_id, customers: [...], substation_csv?}, ...]
    catalogue.json      [{type_tag, weekly_shape, non_operational_shape, holiday_rule}, ...]
    holidays.json       [{date, tags: [...]}, ...]
    windows.json        dataset / training / test windows
    substations/*.csv   timestamp,kwh

Floats are written with ``repr`` so every value round-trips exactly.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .. import catalogue as _catalogue
from ..errors import DataError
from ..model import (SLOTS_PER_DAY, Customer, Feeder, GroupKey, HalfHourlySeries,
                     MonitoredPool, MonitoredProfile, StandardProfile, _as_date,
                     impute_mean_daily, parse_customer_class)
from .calendar import HolidayCalendar, standard_pool_profiles
from .cleaning import CleaningPolicy, CleaningReport, clean_series

PROFILES_CSV = "profiles.csv"
QMR_CSV = "qmr.csv"
TOPOLOGY_JSON = "topology.json"
CATALOGUE_JSON = "catalogue.json"
HOLIDAYS_JSON = "holidays.json"
WINDOWS_JSON = "windows.json"


def atomic_write(path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False) + "\n"


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_float(text: str, line: int, column: str) -> float:
    if text == "" or text.lower() == "nan":
        return float("nan")
    try:
        return float(text)
    except ValueError:
        raise DataError(f"line {line}: column {column}: not a number: {text!r}") from None


def _timestamp(t: dt.datetime) -> str:
    return t.strftime("%Y-%m-%dT%H:%M")


@dataclass(frozen=True)
class Windows:
    """Dataset window plus the buddying training/test and quantile-regression training windows."""

    start_date: dt.date
    n_days: int
    train_start: dt.date
    train_days: int
    test_start: dt.date
    test_days: int
    qr_train_start: dt.date
    qr_train_days: int

    def __post_init__(self):
        for name in ("start_date", "train_start", "test_start", "qr_train_start"):
            object.__setattr__(self, name, _as_date(getattr(self, name)))
        end = self.start_date + dt.timedelta(days=self.n_days)
        for name, start, days in (("train", self.train_start, self.train_days),
                                  ("test", self.test_start, self.test_days),
                                  ("qr_train", self.qr_train_start, self.qr_train_days)):
            if days < 1 or start < self.start_date or start + dt.timedelta(days=days) > end:
                raise DataError(f"{name} window {start} + {days}d outside the dataset window")

    @classmethod
    def default(cls, start_date, n_days: int, train_days: int = 56) -> "Windows":
        """Train on the first ``train_days``, test on the rest, fit quantile models on everything."""
        start_date = _as_date(start_date)
        if n_days <= train_days:
            raise DataError("dataset window must be longer than the training window")
        return cls(start_date, n_days, start_date, train_days,
                   start_date + dt.timedelta(days=train_days), n_days - train_days,
                   start_date, n_days)

    def to_dict(self) -> dict:
        return {k: (v.isoformat() if isinstance(v, dt.date) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Windows":
        return cls(**d)


# --- profiles ---------------------------------------------------------------

def write_profiles_csv(path, profiles: Iterable[MonitoredProfile]) -> Path:
    profiles = list(profiles)
    n = len(profiles[0].series) if profiles else 0
    lines = [",".join(["id", "group", "start_date"] + [f"v{i}" for i in range(n)])]
    for p in profiles:
        lines.append(",".join([p.id, p.group.label, p.series.start_date.isoformat()]
                              + [_fmt(x) for x in p.series.values.tolist()]))
    return atomic_write(path, "\n".join(lines) + "\n")


def read_profiles(path, *, clean: bool = False, policy: CleaningPolicy | None = None
                  ) -> tuple[list[MonitoredProfile], dict[str, CleaningReport]]:
    """Parse a profiles CSV; with ``clean`` anomalous slots are repaired and reported."""
    path = Path(path)
    profiles, reports, seen = [], {}, set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["id", "group", "start_date"]:
            raise DataError(f"{path}: header must start with id,group,start_date")
        n_values = len(header) - 3
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line}: expected {len(header)} columns, got {len(row)}")
            pid, label, start = row[0], row[1], row[2]
            if pid in seen:
                raise DataError(f"{path}: line {line}: duplicate profile id {pid!r}")
            seen.add(pid)
            try:
                group = GroupKey.parse(label)
                start = _as_date(start)
            except (DataError, ValueError) as exc:
                raise DataError(f"{path}: line {line}: {exc}") from None
            values = np.array([_parse_float(x, line, header[3 + i]) for i, x in enumerate(row[3:])])
            if n_values % SLOTS_PER_DAY:
                raise DataError(f"{path}: {n_values} value columns is not whole days")
            allows_negative = group.solar
            if clean:
                series, report = clean_series(values, start, allows_negative=allows_negative,
                                              policy=policy)
                reports[pid] = report
            else:
                try:
                    series = HalfHourlySeries(start, values, allows_negative)
                except DataError as exc:
                    raise DataError(f"{path}: line {line}: {exc}") from None
            profiles.append(MonitoredProfile(pid, group, series))
    return profiles, reports


def load_profiles(path, extra: Sequence[MonitoredProfile] = (), *, clean: bool = False,
                  policy: CleaningPolicy | None = None) -> MonitoredPool:
    """Monitored pool from a profiles CSV, optionally followed by ``extra`` members."""
    profiles, _ = read_profiles(path, clean=clean, policy=policy)
    return MonitoredPool(tuple(profiles) + tuple(extra))


# --- single series ------------------------------------------------------------

def write_series_csv(path, series: HalfHourlySeries) -> Path:
    lines = ["timestamp,kwh"]
    lines += [f"{_timestamp(t)},{_fmt(v)}" for t, v in zip(series.timestamps(), series.values.tolist())]
    return atomic_write(path, "\n".join(lines) + "\n")


def read_series_raw(path) -> tuple[dt.date, np.ndarray]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["timestamp", "kwh"]:
            raise DataError(f"{path}: header must be timestamp,kwh")
        stamps, values = [], []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}: line {line}: expected 2 columns")
            stamps.append(row[0])
            values.append(_parse_float(row[1], line, "kwh"))
    if not stamps:
        raise DataError(f"{path}: no data rows")
    try:
        first = dt.datetime.fromisoformat(stamps[0])
    except ValueError:
        raise DataError(f"{path}: line 2: bad timestamp {stamps[0]!r}") from None
    if first.time() != dt.time():
        raise DataError(f"{path}: series must start at midnight")
    step = dt.timedelta(minutes=30)
    for i, s in enumerate(stamps):
        if s != _timestamp(first + i * step):
            raise DataError(f"{path}: line {i + 2}: expected timestamp {_timestamp(first + i * step)}")
    return first.date(), np.array(values)


def read_series_csv(path, allows_negative: bool = False) -> HalfHourlySeries:
    start, values = read_series_raw(path)
    return HalfHourlySeries(start, values, allows_negative)


# --- customers, topology, catalogue, holidays ---------------------------------

def write_qmr_csv(path, customers: Iterable[Customer]) -> Path:
    lines = ["customer_id,class,mean_daily_kwh"]
    for c in customers:
        u = "" if c.qmr_mean_daily is None else _fmt(c.qmr_mean_daily)
        lines.append(f"{c.id},{c.cls.label},{u}")
    return atomic_write(path, "\n".join(lines) + "\n")


def read_qmr_csv(path) -> dict[str, Customer]:
    path = Path(path)
    customers = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["customer_id", "class", "mean_daily_kwh"]:
            raise DataError(f"{path}: header must be customer_id,class,mean_daily_kwh")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}: line {line}: expected 3 columns")
            cid, label, u = row
            if cid in customers:
                raise DataError(f"{path}: line {line}: duplicate customer id {cid!r}")
            try:
                customers[cid] = Customer(cid, parse_customer_class(label),
                                          None if u == "" else _parse_float(u, line, "mean_daily_kwh"))
            except DataError as exc:
                raise DataError(f"{path}: line {line}: {exc}") from None
    return customers


def write_topology_json(path, feeders: Iterable[Feeder], substation_dir: str = "substations") -> Path:
    """Write topology and each feeder's substation CSV (paths stored relative to ``path``)."""
    path = Path(path)
    records = []
    for f in feeders:
        rec = {"feeder_id": f.id, "customers": [c.id for c in f.customers]}
        if f.substation_series is not None:
            rel = f"{substation_dir}/{f.id}.csv"
            write_series_csv(path.parent / rel, f.substation_series)
            rec["substation_csv"] = rel
        records.append(rec)
    return atomic_write(path, dump_json(records))


def read_topology_json(path, customers: dict[str, Customer], *, clean: bool = False,
                       policy: CleaningPolicy | None = None
                       ) -> tuple[list[Feeder], dict[str, CleaningReport]]:
    path = Path(path)
    with open(path) as fh:
        records = json.load(fh)
    if isinstance(records, dict):
        records = [records]
    feeders, reports = [], {}
    for rec in records:
        try:
            fid = rec["feeder_id"]
            members = [customers[cid] for cid in rec["customers"]]
        except KeyError as exc:
            raise DataError(f"{path}: unknown customer or missing field {exc}") from None
        series = None
        if rec.get("substation_csv"):
            # solar export can make the feeder total negative
            allows_negative = any(getattr(c.cls, "has_solar", False) for c in members)
            start, values = read_series_raw(path.parent / rec["substation_csv"])
            if clean:
                series, reports[f"substation:{fid}"] = clean_series(
                    values, start, allows_negative=allows_negative, policy=policy)
            else:
                series = HalfHourlySeries(start, values, allows_negative)
        feeders.append(Feeder(fid, tuple(members), series))
    return feeders, reports


def catalogue_to_records(profiles: Iterable[StandardProfile]) -> list[dict]:
    return [{"type_tag": sp.type_tag, "weekly_shape": sp.weekly_shape.tolist(),
             "non_operational_shape": sp.non_operational_shape.tolist(),
             "holiday_rule": sp.holiday_rule} for sp in profiles]


def write_catalogue_json(path, profiles: Iterable[StandardProfile]) -> Path:
    return atomic_write(path, json.dumps(catalogue_to_records(profiles)) + "\n")


def read_catalogue_json(path) -> list[StandardProfile]:
    """Parse a catalogue and register each type tag."""
    with open(path) as fh:
        records = json.load(fh)
    if isinstance(records, dict):
        records = [records]
    out = []
    for rec in records:
        try:
            sp = StandardProfile(rec["type_tag"], rec["weekly_shape"], rec["non_operational_shape"],
                                 rec.get("holiday_rule", "bank"))
        except KeyError as exc:
            raise DataError(f"{path}: catalogue entry missing {exc}") from None
        _catalogue.register(sp)
        out.append(sp)
    return out


def write_holidays_json(path, calendar: HolidayCalendar) -> Path:
    return atomic_write(path, dump_json(calendar.to_records()))


def read_holidays_json(path) -> HolidayCalendar:
    with open(path) as fh:
        return HolidayCalendar.from_records(json.load(fh))


# --- whole dataset -----------------------------------------------------------

@dataclass
class Dataset:
    pool: MonitoredPool
    feeders: list[Feeder]
    catalogue: list[StandardProfile]
    calendar: HolidayCalendar
    windows: Windows
    cleaning: dict[str, CleaningReport] = field(default_factory=dict)

    @property
    def n_replaced(self) -> int:
        return sum(r.n_replaced for r in self.cleaning.values())


def write_dataset(data_dir, domestic_profiles: Sequence[MonitoredProfile], feeders: Sequence[Feeder],
                  catalogue: Sequence[StandardProfile], calendar: HolidayCalendar,
                  windows: Windows) -> list[Path]:
    data_dir = Path(data_dir)
    customers = [c for f in feeders for c in f.customers]
    return [
        write_profiles_csv(data_dir / PROFILES_CSV, domestic_profiles),
        write_qmr_csv(data_dir / QMR_CSV, customers),
        write_topology_json(data_dir / TOPOLOGY_JSON, feeders),
        write_catalogue_json(data_dir / CATALOGUE_JSON, catalogue),
        write_holidays_json(data_dir / HOLIDAYS_JSON, calendar),
        atomic_write(data_dir / WINDOWS_JSON, dump_json(windows.to_dict())),
    ]


def load_dataset(data_dir, *, clean: bool = True, impute: bool = True,
                 policy: CleaningPolicy | None = None) -> Dataset:
    """Read a dataset directory into a pool (monitored + annualised standard profiles) and feeders."""
    data_dir = Path(data_dir)
    if not (data_dir / PROFILES_CSV).exists():
        raise DataError(f"{data_dir}: no {PROFILES_CSV}")
    with open(data_dir / WINDOWS_JSON) as fh:
        windows = Windows.from_dict(json.load(fh))
    catalogue = read_catalogue_json(data_dir / CATALOGUE_JSON)
    calendar = read_holidays_json(data_dir / HOLIDAYS_JSON)
    domestic, reports = read_profiles(data_dir / PROFILES_CSV, clean=clean, policy=policy)
    standard = standard_pool_profiles(catalogue, windows.start_date, windows.n_days, calendar)
    pool = MonitoredPool(tuple(domestic) + tuple(standard))
    if pool.start_date != windows.start_date or pool.n_days != windows.n_days:
        raise DataError("profiles do not span the dataset window in windows.json")
    customers = read_qmr_csv(data_dir / QMR_CSV)
    feeders, sub_reports = read_topology_json(data_dir / TOPOLOGY_JSON, customers,
                                              clean=clean, policy=policy)
    reports.update(sub_reports)
    if impute:
        feeders = impute_mean_daily(feeders)
    return Dataset(pool, feeders, catalogue, calendar, windows, reports)
