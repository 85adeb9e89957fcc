"""Built-in weekly standard profiles for non-domestic customer types, and the type registry.

Shapes are relative (arbitrary units); annualisation rescales them to a mean
of 1 kWh/day. Each day is given as ``(base, [(from_hour, to_hour, level), ...])``.
"""

from __future__ import annotations

import numpy as np

from .model import SLOTS_PER_DAY, StandardProfile


def _day(base: float, blocks=()) -> np.ndarray:
    day = np.full(SLOTS_PER_DAY, base, dtype=float)
    for start, stop, level in blocks:
        i, j = int(round(start * 2)), int(round(stop * 2))
        if i <= j:
            day[i:j] = level
        else:  # wraps midnight
            day[i:] = level
            day[:j] = level
    return day


def _week(days) -> np.ndarray:
    assert len(days) == 7
    return np.concatenate(days)


def _build_defaults() -> dict[str, StandardProfile]:
    school_day = _day(0.15, [(7.5, 8.5, 0.6), (8.5, 15.5, 1.0), (15.5, 21.0, 0.4)])
    school_off = _day(0.15)
    centre_day = _day(0.1, [(9, 17, 0.7), (17, 20, 1.0), (20, 22, 0.5)])
    centre_sat = _day(0.1, [(10, 16, 0.5)])
    centre_sun = _day(0.02)
    lighting = _day(0.02, [(18, 7, 1.0)])
    hlf = _day(0.7, [(6, 22, 1.0)])
    llf = _day(0.1, [(7, 19, 1.0)])
    office_day = _day(0.2, [(7.5, 8.5, 0.6), (8.5, 18, 1.0)])
    office_off = _day(0.2)
    shop_day = _day(0.25, [(8.5, 9, 0.7), (9, 17.5, 1.0)])
    shop_sun = _day(0.25, [(10, 16, 0.8)])
    restaurant = _day(0.3, [(11, 15, 0.8), (17, 23, 1.0)])

    specs = [
        StandardProfile("school", _week([school_day] * 5 + [school_off] * 2), school_off, "school"),
        StandardProfile("community-centre", _week([centre_day] * 5 + [centre_sat, centre_sun]),
                        centre_sun, "school"),
        StandardProfile("landlord-lighting", _week([lighting] * 7), lighting, "never"),
        StandardProfile("industrial-high-lf", _week([hlf] * 7), _day(0.7), "bank"),
        StandardProfile("industrial-low-lf", _week([llf] * 7), _day(0.1), "bank"),
        StandardProfile("office", _week([office_day] * 5 + [office_off] * 2), office_off, "bank"),
        StandardProfile("shop", _week([shop_day] * 6 + [shop_sun]), shop_sun, "bank"),
        StandardProfile("restaurant", _week([restaurant] * 7), restaurant, "never"),
    ]
    return {sp.type_tag: sp for sp in specs}


DEFAULT_CATALOGUE: dict[str, StandardProfile] = _build_defaults()
_registered: set[str] = set(DEFAULT_CATALOGUE)


def register(profile: StandardProfile) -> None:
    """Make ``profile.type_tag`` a valid non-domestic customer type."""
    _registered.add(profile.type_tag)


def registered_types() -> frozenset[str]:
    return frozenset(_registered)


def default_catalogue() -> list[StandardProfile]:
    return list(DEFAULT_CATALOGUE.values())
