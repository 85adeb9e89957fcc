"""Parsing, cleaning and standard-profile annualisation."""

from .calendar import (BANK, SCHOOL, HolidayCalendar, annualize_standard_profile, expand_weekly,
                       standard_pool_profiles)
from .cleaning import CleaningPolicy, CleaningReport, Replacement, clean_series
from .files import (Dataset, Windows, atomic_write, load_dataset, load_profiles, read_catalogue_json,
                    read_holidays_json, read_profiles, read_qmr_csv, read_series_csv,
                    read_topology_json, write_catalogue_json, write_dataset, write_holidays_json,
                    write_profiles_csv, write_qmr_csv, write_series_csv, write_topology_json)

__all__ = [
    "BANK", "SCHOOL", "HolidayCalendar", "annualize_standard_profile", "expand_weekly",
    "standard_pool_profiles", "CleaningPolicy", "CleaningReport", "Replacement", "clean_series",
    "Dataset", "Windows", "atomic_write", "load_dataset", "load_profiles", "read_catalogue_json",
    "read_holidays_json", "read_profiles", "read_qmr_csv", "read_series_csv", "read_topology_json",
    "write_catalogue_json", "write_dataset", "write_holidays_json", "write_profiles_csv",
    "write_qmr_csv", "write_series_csv", "write_topology_json",
]
