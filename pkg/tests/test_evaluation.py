import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lvbuddy.errors import DataError, DegenerateNormalizerError, WindowMismatchError
from lvbuddy.evaluation import (PowerLawFit, alpha_histogram, feeder_summary, normalized_crps,
                                power_law_curve_rows, power_law_fit, proportion_bucket, read_rows_csv,
                                rmae, write_rows_csv)
from lvbuddy.model import BuddyAssignment, Customer, Domestic, Feeder
from lvbuddy.synthgen import ScenarioConfig, generate_feeder, generate_pool
from lvbuddy.uncertainty import ConfidenceBands

from conftest import flat, series
from oracles import pinball_two_branch


def bands_of(lower, upper):
    return ConfidenceBands(series(lower, allows_negative=True), series(upper, allows_negative=True), "test")


def test_rmae_values():
    s = flat(1.0, 3)
    assert rmae(s, s) == 0.0
    assert rmae(s, flat(1.1, 3)) == pytest.approx(0.1, rel=1e-12)
    with pytest.raises(DegenerateNormalizerError):
        rmae(flat(0.0), flat(1.0))
    with pytest.raises(WindowMismatchError):
        rmae(flat(1.0, 3), flat(1.0, 2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(0.01, 100))
def test_rmae_loop_oracle_and_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    s, a = rng.uniform(0.1, 3, 96), rng.uniform(0, 3, 96)
    total = err = 0.0
    for st_, at in zip(s, a):
        total += st_
        err += abs(st_ - at)
    assert rmae(series(s), series(a)) == pytest.approx(err / total, rel=1e-12)
    assert rmae(c * s, c * a) == pytest.approx(rmae(s, a), rel=1e-9)


def test_normalized_crps_values():
    y = flat(1.0, 2)
    assert normalized_crps(y, bands_of(y.values, y.values)) == 0.0
    b = bands_of(np.full(96, 0.9), np.full(96, 1.1))
    assert normalized_crps(y, b) == pytest.approx(0.01, rel=1e-12)
    with pytest.raises(DegenerateNormalizerError):
        normalized_crps(flat(0.0, 2), b)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(0.01, 100))
def test_normalized_crps_oracle_and_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    y = rng.uniform(0.5, 2, 96)
    lo = y - rng.uniform(-0.5, 1, 96)
    hi = np.maximum(lo, y + rng.uniform(-0.5, 1, 96))
    total = sum(0.5 * (pinball_two_branch(yt - l, 0.1) + pinball_two_branch(yt - h, 0.9))
                for yt, l, h in zip(y, lo, hi))
    expect = total / 96 / y.mean()
    assert normalized_crps(series(y), bands_of(lo, hi)) == pytest.approx(expect, rel=1e-12)
    assert normalized_crps(series(c * y), bands_of(c * lo, c * hi)) == pytest.approx(expect, rel=1e-9)


def test_power_law_exact_fit():
    x = np.array([1.0, 3.0, 10.0, 40.0])
    fit = power_law_fit(list(zip(x, 2 * x ** -0.5)))
    assert (fit.a, fit.b) == (pytest.approx(2.0, rel=1e-12), pytest.approx(0.5, rel=1e-12))
    assert fit.log_residual_std == pytest.approx(0.0, abs=1e-12)
    assert all(fit.inside) and fit.r_squared == pytest.approx(1.0)


def test_power_law_errors_and_equivariance():
    with pytest.raises(DataError, match="at least 3"):
        power_law_fit([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(DataError):
        power_law_fit([1.0, 2.0, -3.0], [1.0, 2.0, 3.0])
    rng = np.random.default_rng(0)
    x = rng.uniform(1, 100, 30)
    y = 3 * x ** -0.4 * np.exp(0.2 * rng.standard_normal(30))
    f1, f2 = power_law_fit(x, y), power_law_fit(x, 7 * y)
    assert f2.a == pytest.approx(7 * f1.a, rel=1e-9) and f2.b == pytest.approx(f1.b, rel=1e-9)
    assert PowerLawFit.from_dict(f1.to_dict()) == f1
    assert power_law_fit(f1.x, f1.y) == f1
    rows = power_law_curve_rows(f1, 10)
    assert rows[0]["lower"] < rows[0]["fit"] < rows[0]["upper"]


def test_power_law_recovers_generator():
    rng = np.random.default_rng(1)
    a, b, sigma, n = 5.0, 0.6, 0.3, 60
    x = np.exp(rng.uniform(0, np.log(200), n))
    y = a * x ** -b * np.exp(sigma * rng.standard_normal(n))
    fit = power_law_fit(x, y)
    lx = np.log(x)
    se_b = fit.log_residual_std / np.sqrt(((lx - lx.mean()) ** 2).sum())
    se_loga = fit.log_residual_std * np.sqrt(1 / n + lx.mean() ** 2 / ((lx - lx.mean()) ** 2).sum())
    assert abs(fit.b - b) < 3 * se_b
    assert abs(np.log(fit.a) - np.log(a)) < 3 * se_loga


def test_power_law_band_coverage():
    rng = np.random.default_rng(2)
    inside = total = 0
    for _ in range(200):
        x = np.exp(rng.uniform(0, 5, 50))
        y = 2 * x ** -0.5 * np.exp(0.25 * rng.standard_normal(50))
        fit = power_law_fit(x, y)
        inside += sum(fit.inside)
        total += fit.n
    assert inside / total == pytest.approx(0.99, abs=0.005)


def test_alpha_histogram():
    h = alpha_histogram({0.0: [1.0] * 7, 0.5: [BuddyAssignment((0, 1), (None, 0.8))]})
    assert len(h.edges) == 21 and h.counts[0.0].sum() == 7 and np.count_nonzero(h.counts[0.0]) == 1
    assert h.counts[0.5][0] == 1
    rng = np.random.default_rng(3)
    flat_h = alpha_histogram({0.0: rng.uniform(0.8, 1.2, 20_000)}).counts[0.0]
    assert flat_h.min() > 0.8 * flat_h.mean()


def test_proportion_buckets():
    assert proportion_bucket(0.0) == "none"
    assert proportion_bucket(0.03) == "small"
    assert proportion_bucket(2 / 21) == "medium"
    assert proportion_bucket(0.05) == "medium"
    assert proportion_bucket(0.2) == "large"


def test_feeder_summary_constant_series():
    f = Feeder("F", (Customer("a", Domestic(1, "A"), 1.0),), flat(0.5, 14))
    s = feeder_summary(f)
    np.testing.assert_allclose(s.daily_totals, 24.0)
    np.testing.assert_allclose(s.weekly_profile, 0.5)
    assert s.bucket == "none" and s.weekly_profile.shape == (336,)
    with pytest.raises(DataError):
        feeder_summary(f.replace_substation(None))


def test_school_feeder_dips_in_summer():
    cfg = ScenarioConfig(seed=1, start_date="2015-06-01", n_days=112, n_pc1=10, n_pc2=2, n_solar=0,
                         customer_noise=0.0, alpha_true_spread=0.0)
    pool = generate_pool(cfg)
    feeder, _ = generate_feeder(cfg, pool, 0, n_customers=3, nondomestic=("school",))
    daily = feeder_summary(feeder).daily_totals
    # weekdays in term (1 June - 17 July) against the summer holiday (from 21 July)
    term = [daily[d] for d in range(0, 47) if d % 7 < 5]
    summer = [daily[d] for d in range(51, 95) if d % 7 < 5]
    assert np.mean(summer) < 0.8 * np.mean(term)


def test_rows_csv_round_trip(tmp_path):
    rows = [{"a": 1, "b": 0.1, "c": None, "d": True}]
    write_rows_csv(tmp_path / "t.csv", ("a", "b", "c", "d"), rows)
    assert read_rows_csv(tmp_path / "t.csv") == [{"a": "1", "b": "0.1", "c": "", "d": "true"}]
