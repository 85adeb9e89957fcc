import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from lvbuddy.errors import ConfigError, DataError, EmptyCandidateGroupError, RankDeficientError
from lvbuddy.model import Customer, Domestic, Feeder, NonDomestic
from lvbuddy.uncertainty import (BootstrapConfig, ConfidenceBands, QuantileModel, bootstrap_bands,
                                 design_matrix, fit_quantile_model, gaussian_sigma, pinball,
                                 predict_bands, read_bands_csv, write_bands_csv)

from conftest import START, random_pool, series
from oracles import pinball_two_branch


# --- pinball ----------------------------------------------------------------------

def test_pinball_values():
    assert pinball(2.0, 0.9) == pytest.approx(1.8, abs=1e-15)
    assert pinball(-2.0, 0.9) == pytest.approx(0.2, abs=1e-15)
    assert pinball(0.0, 0.3) == 0.0
    with pytest.raises(ConfigError):
        pinball(1.0, 1.0)


@settings(max_examples=300)
@given(z=st.floats(-1e6, 1e6), tau=st.floats(0.001, 0.999), a=st.floats(0.01, 100))
def test_pinball_oracle_and_homogeneity(z, tau, a):
    assert pinball(z, tau) == pytest.approx(pinball_two_branch(z, tau), rel=1e-12, abs=1e-12)
    assert pinball(a * z, tau) == pytest.approx(a * pinball(z, tau), rel=1e-9, abs=1e-9)


@settings(max_examples=100)
@given(z1=st.floats(-100, 100), z2=st.floats(-100, 100), lam=st.floats(0, 1), tau=st.floats(0.01, 0.99))
def test_pinball_convex(z1, z2, lam, tau):
    mid = pinball(lam * z1 + (1 - lam) * z2, tau)
    assert mid <= lam * pinball(z1, tau) + (1 - lam) * pinball(z2, tau) + 1e-9


# --- bootstrap ---------------------------------------------------------------------

def domestic_feeder(n1=4, n2=2):
    customers = [Customer(f"a{i}", Domestic(1, "A"), 5.0) for i in range(n1)]
    customers += [Customer(f"b{i}", Domestic(2, "C"), 9.0) for i in range(n2)]
    return Feeder("F", tuple(customers))


def test_gaussian_sigma():
    assert gaussian_sigma(10.0) == pytest.approx(200 / 196, abs=1e-12)


def test_bootstrap_config_validation():
    with pytest.raises(ConfigError):
        BootstrapConfig(n_resamples=0)
    with pytest.raises(ConfigError):
        BootstrapConfig(scaling="lognormal")
    with pytest.raises(ConfigError):
        BootstrapConfig(quantiles=(0.9, 0.1))


def test_bootstrap_domestic_only_identical_across_scalings():
    rng = np.random.default_rng(0)
    pool = random_pool(rng, {"PC1-A": 5, "PC1-B": 3, "PC2-C": 4})
    f = domestic_feeder()
    u = bootstrap_bands(f, pool, BootstrapConfig(200, "uniform", seed=3))
    g = bootstrap_bands(f, pool, BootstrapConfig(200, "gaussian", seed=3))
    assert u.lower.values.tobytes() == g.lower.values.tobytes()
    assert u.upper.values.tobytes() == g.upper.values.tobytes()
    again = bootstrap_bands(f, pool, BootstrapConfig(200, "uniform", seed=3))
    np.testing.assert_array_equal(u.upper.values, again.upper.values)
    assert np.all(u.lower.values <= u.upper.values)


def test_bootstrap_single_resample_is_one_pool_profile():
    rng = np.random.default_rng(1)
    pool = random_pool(rng, {"PC1-A": 4})
    b = bootstrap_bands(Feeder("F", (Customer("a", Domestic(1, "A"), 5.0),)), pool, BootstrapConfig(1))
    np.testing.assert_array_equal(b.lower.values, b.upper.values)
    assert any(np.array_equal(b.lower.values, row) for row in pool.matrix)


def test_bootstrap_single_profile_pool_has_zero_width():
    rng = np.random.default_rng(2)
    pool = random_pool(rng, {"PC1-A": 1})
    f = Feeder("F", (Customer("a", Domestic(1, "B"), 5.0),))  # class-level sampling ignores the band
    b = bootstrap_bands(f, pool, BootstrapConfig(500))
    np.testing.assert_array_equal(b.lower.values, pool.matrix[0])
    np.testing.assert_array_equal(b.upper.values, pool.matrix[0])


def test_bootstrap_nondomestic_widens_bands():
    rng = np.random.default_rng(3)
    pool = random_pool(rng, {"PC1-A": 5, "PC2-C": 3}, nd_types=("shop",))
    f = domestic_feeder()
    with_nd = f.replace_customers(f.customers + (Customer("n", NonDomestic("shop"), 80.0),))
    narrow = bootstrap_bands(f, pool, BootstrapConfig(300, seed=1))
    for scaling in ("uniform", "gaussian"):
        wide = bootstrap_bands(with_nd, pool, BootstrapConfig(300, scaling, seed=1))
        assert np.mean(wide.upper.values - wide.lower.values) > np.mean(narrow.upper.values - narrow.lower.values)


def test_bootstrap_missing_class():
    rng = np.random.default_rng(4)
    pool = random_pool(rng, {"PC1-A": 3})
    with pytest.raises(EmptyCandidateGroupError):
        bootstrap_bands(domestic_feeder(1, 1), pool, BootstrapConfig(10))


def test_bootstrap_solar_exclusion():
    rng = np.random.default_rng(5)
    pool = random_pool(rng, {"PC1-A": 1, "PC1-B-PV": 1})
    f = Feeder("F", (Customer("a", Domestic(1, "A"), 5.0),))
    b = bootstrap_bands(f, pool, BootstrapConfig(50, include_solar=False))
    np.testing.assert_array_equal(b.upper.values, pool.matrix[0])


# --- quantile regression ----------------------------------------------------------------

def eq6_surface(rng, start, n_days, P=3, origin=None):
    coef = rng.normal(0, 1, (48, 4 + 2 * P))
    coef[:, 0] += 30.0
    coef[:, 1] *= 0.01
    model = QuantileModel(0.5, P, origin or start, coef)
    return model, model.predict(start, n_days)


def test_constant_series_fit():
    s = series(np.full(48 * 28, 2.5))
    for tau in (0.1, 0.9):
        m = fit_quantile_model(s, tau, P=3)
        np.testing.assert_allclose(m.predict(START, 28), 2.5, atol=1e-9)


def test_noiseless_generator_recovered():
    rng = np.random.default_rng(0)
    truth, y = eq6_surface(rng, START, 140)
    fit = fit_quantile_model(series(y), 0.1, P=3)
    assert np.abs(fit.predict(START, 140) - y).max() < 1e-6
    assert np.abs(fit.predict(START + dt.timedelta(days=140), 60)
                  - truth.predict(START + dt.timedelta(days=140), 60)).max() < 1e-6


def test_day_index_continues_from_origin():
    rng = np.random.default_rng(1)
    origin = START - dt.timedelta(days=30)
    truth, _ = eq6_surface(rng, START, 70, origin=origin)
    y = truth.predict(START, 70)
    fit = fit_quantile_model(series(y), 0.5, P=3, origin=origin)
    assert fit.origin == origin
    assert np.abs(fit.coef - truth.coef).max() < 1e-6


def test_iid_noise_upper_quantile():
    rng = np.random.default_rng(2)
    n_days = 364
    y = 10.0 + rng.standard_normal(48 * n_days)
    fit = fit_quantile_model(series(y), 0.9, P=1)
    level = fit.predict(START, n_days).reshape(n_days, 48).mean(axis=0)
    emp = np.quantile(y.reshape(n_days, 48), 0.9, axis=0)
    # standard error of a sample 0.9-quantile of N(0, 1)
    se = np.sqrt(0.9 * 0.1 / n_days) / norm.pdf(norm.ppf(0.9))
    assert np.all(np.abs(level - emp) < 3 * se)


def test_fit_is_optimal_under_coefficient_perturbation():
    rng = np.random.default_rng(3)
    _, y = eq6_surface(rng, START, 84, P=2)
    y = y + rng.gumbel(0, 1, y.size)
    s = series(y)
    m = fit_quantile_model(s, 0.9, P=2)
    Y = s.by_day()
    days = np.arange(1, 85)
    X = design_matrix(days, [START + dt.timedelta(days=int(d - 1)) for d in days], 2)
    for h in (0, 17, 40):
        base = pinball(Y[:, h] - X @ m.coef[h], 0.9).sum()
        for i in range(m.coef.shape[1]):
            for sign in (1, -1):
                c = m.coef[h].copy()
                c[i] += sign * 1e-3 * max(abs(c[i]), 1e-3)
                assert pinball(Y[:, h] - X @ c, 0.9).sum() >= base * (1 - 1e-8)


def test_rank_deficient_design():
    with pytest.raises(RankDeficientError, match="lower P"):
        fit_quantile_model(series(np.ones(48 * 14)), 0.5, P=6)
    with pytest.raises(DataError):
        fit_quantile_model(series(np.ones(48 * 7)), 0.5, P=1)


def test_saturday_dummy_and_crossing_repair():
    P = 1
    coef = np.zeros((48, 4 + 2 * P))
    coef[:, 0] = 5.0
    coef[:, 2] = 1.5
    low = QuantileModel(0.1, P, START, coef)
    hi_coef = coef.copy()
    hi_coef[:, 0] = 4.0  # below the low model everywhere
    high = QuantileModel(0.9, P, START, hi_coef)
    v = low.predict(START, 7).reshape(7, 48)
    np.testing.assert_allclose(v[5] - v[0], 1.5)  # Saturday minus Monday
    bands = predict_bands(low, high, START, 7)
    assert bands.n_crossings == 7 * 48
    assert np.all(bands.lower.values <= bands.upper.values)
    with pytest.raises(DataError):
        ConfidenceBands(bands.upper, bands.lower, "x")


def test_model_and_bands_serialisation(tmp_path):
    rng = np.random.default_rng(4)
    _, y = eq6_surface(rng, START, 28, P=1)
    low = fit_quantile_model(series(y), 0.1, P=1)
    high = fit_quantile_model(series(y + 1), 0.9, P=1)
    low.save(tmp_path / "m.json")
    assert QuantileModel.load(tmp_path / "m.json") == low
    bands = predict_bands(low, high, START, 28)
    write_bands_csv(tmp_path / "b.csv", bands)
    back = read_bands_csv(tmp_path / "b.csv")
    assert back.lower == bands.lower and back.upper == bands.upper
