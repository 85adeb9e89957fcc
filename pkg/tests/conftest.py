import datetime as dt

import numpy as np
import pytest

from lvbuddy.model import (BuddyAssignment, Customer, Domestic, Feeder, GroupKey, HalfHourlySeries,
                           MonitoredPool, MonitoredProfile, NonDomestic)
from lvbuddy.synthgen import ScenarioConfig, generate_network

START = dt.date(2015, 1, 5)  # a Monday


def series(values, start=START, **kw):
    return HalfHourlySeries(start, np.asarray(values, dtype=float), **kw)


def flat(level, n_days=14, start=START):
    return series(np.full(48 * n_days, float(level)), start)


def random_pool(rng, groups, n_days=14, nd_types=()):
    """Pool with the given number of random profiles per group label, plus standard profiles."""
    profiles = []
    for label, n in groups.items():
        g = GroupKey.parse(label)
        for i in range(n):
            values = rng.gamma(2.0, 0.2 * (1 + i), 48 * n_days)
            profiles.append(MonitoredProfile(f"{label}-{i}", g, series(values)))
    for tag in nd_types:
        values = rng.uniform(0.5, 1.5, 48 * n_days)
        values *= n_days / values.sum()
        profiles.append(MonitoredProfile(f"std:{tag}", GroupKey("nd", type_tag=tag), series(values)))
    return MonitoredPool(tuple(profiles))


def feeder_from_truth(pool, ids, alphas, us, fid="F"):
    """Feeder whose substation series is exactly the aggregate of the given assignment."""
    customers, total = [], np.zeros(pool.n_slots)
    for j, (k, a, u) in enumerate(zip(ids, alphas, us)):
        g = pool[k].group
        if g.is_domestic:
            cls = Domestic(g.profile_class, g.band_group[0], g.solar)
            total += pool.matrix[k]
        else:
            cls = NonDomestic(g.type_tag)
            total += a * u * pool.matrix[k]
        customers.append(Customer(f"{fid}-c{j}", cls, u))
    return Feeder(fid, tuple(customers), series(total, pool.start_date)), BuddyAssignment(ids, alphas)


@pytest.fixture(scope="session")
def small_net():
    return generate_network(ScenarioConfig(seed=7, n_days=84, train_days=28, n_pc1=24, n_pc2=6,
                                           n_solar=2, n_feeders=6, customers_max=25,
                                           nondomestic_prob=0.15))


# one summary line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
