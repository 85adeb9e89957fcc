"""Acceptance criteria on synthetic data, one test (and one PASS/FAIL line) per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
repeated in the "acceptance criteria" section at the end of the report.
"""

import json
import time
from pathlib import Path

import numpy as np
from scipy.stats import laplace

from lvbuddy.buddying import (GAConfig, assignment_from_records, assignment_records, cost, ga_buddy,
                              scale_strategies, simple_buddy)
from lvbuddy.cli import main
from lvbuddy.evaluation import mean_demand, normalized_crps, power_law_fit, rmae
from lvbuddy.ingestion import load_dataset, write_dataset
from lvbuddy.model import Customer, MonitoredPool, aggregate_assignment
from lvbuddy.synthgen import ScenarioConfig, generate_feeder, generate_network, generate_pool
from lvbuddy.uncertainty import (BootstrapConfig, QuantileModel, bootstrap_bands, fit_quantile_model,
                                 gaussian_sigma, pinball, qr_bands, read_bands_csv, write_bands_csv)

from conftest import ACCEPTANCE_LINES, START, series
from oracles import exhaustive_min, pinball_two_branch, spearman

T0 = time.perf_counter()
WEIGHTS = [round(0.1 * i, 1) for i in range(11)]


def report(n: int, title: str, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] AC{n:<2d} {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def split(net):
    w = net.windows
    return net.pool.window(w.train_start, w.train_days), net.pool.window(w.test_start, w.test_days)


def test_ac01_ga_matches_exhaustive_enumeration():
    t = time.perf_counter()
    cfg = ScenarioConfig(seed=101, n_days=28, train_days=14, n_pc1=16, n_pc2=6, n_solar=0,
                         nondomestic_types=("school", "shop", "office"))
    full = generate_pool(cfg)
    # keep at most 6 profiles per group
    keep = sorted(int(i) for g in full.groups for i in full.candidates(g)[:6])
    pool = MonitoredPool(tuple(full[i] for i in keep))
    rng = np.random.default_rng(cfg.seed)
    worst, n_cases, n_feeders = 0.0, 0, 24
    for i in range(n_feeders):
        m = int(rng.integers(1, 6))
        nd = ("school",) if rng.uniform() < 0.3 else ()
        feeder, _ = generate_feeder(cfg, pool, i, n_customers=m, nondomestic=nd, rng=rng)
        assert max(pool.candidates(c.group).size for c in feeder.customers) <= 6
        for w in (0.0, 0.5, 1.0):
            got = ga_buddy(feeder, pool, GAConfig(w=w, optimize_alpha=False, seed=i)).cost.total
            best = exhaustive_min(feeder, pool, w)
            worst = max(worst, abs(got - best) / max(abs(best), 1e-300))
            n_cases += 1
    elapsed = time.perf_counter() - t
    report(1, "GA = exhaustive minimum", worst <= 1e-9 and elapsed < 120,
           f"{n_feeders} feeders x 3 weights, max relative gap {worst:.1e}, {elapsed:.0f}s")


def test_ac02_simple_algorithm_optimal_at_w_one():
    net = generate_network(ScenarioConfig(seed=102, n_feeders=12, nondomestic_prob=0.0))
    train, _ = split(net)
    worst_sa, worst_ga = 0.0, -np.inf
    for i, f in enumerate(net.feeders):
        D = sum(c.qmr_mean_daily for c in f.customers)
        brute = sum(min(abs(c.qmr_mean_daily - train.mean_daily[k]) for k in train.candidates(c.group))
                    for c in f.customers) / D
        sa = cost(f, simple_buddy(f, train), train, 1.0).total
        ga = ga_buddy(f, train, GAConfig(w=1.0, seed=i)).cost.total
        worst_sa = max(worst_sa, abs(sa - brute) / brute)
        worst_ga = max(worst_ga, ga - sa)
    report(2, "SA optimal at w=1", worst_sa <= 1e-12 and worst_ga <= 1e-12,
           f"max |SA - brute|/brute {worst_sa:.1e}, max GA - SA {worst_ga:.1e}")


def test_ac03_error_grows_with_weight():
    net = generate_network(ScenarioConfig(seed=103, n_feeders=30, nondomestic_prob=0.1))
    train, test = split(net)
    w = net.windows
    errors = np.zeros((len(net.feeders), len(WEIGHTS)))
    sa = np.zeros(len(net.feeders))
    for i, f in enumerate(net.feeders):
        actual = f.substation_series.window(w.test_start, w.test_days)
        for j, wt in enumerate(WEIGHTS):
            a = ga_buddy(f, train, GAConfig(w=wt, seed=1000 * i + j)).assignment
            errors[i, j] = rmae(actual, aggregate_assignment(f, a, test))
        sa[i] = rmae(actual, aggregate_assignment(f, simple_buddy(f, train), test))
    mean = errors.mean(axis=0)
    rho = spearman(WEIGHTS, mean)
    wins = float(np.mean(errors[:, 0] < sa))
    report(3, "RMAE increases with w", rho > 0 and wins >= 0.7,
           f"Spearman {rho:.3f}, mean RMAE {mean[0]:.4f} (w=0) -> {mean[-1]:.4f} (w=1), "
           f"GA(w=0) beats SA on {wins:.0%} of {len(net.feeders)} feeders")


def test_ac04_power_law_error_curve():
    net = generate_network(ScenarioConfig(seed=104, n_feeders=40, customers_min=2, customers_max=150,
                                          nondomestic_prob=0.0))
    train, test = split(net)
    w = net.windows
    x, y = [], []
    for i, f in enumerate(net.feeders):
        actual = f.substation_series.window(w.test_start, w.test_days)
        a = ga_buddy(f, train, GAConfig(w=0.0, seed=i)).assignment
        x.append(mean_demand(actual))
        y.append(rmae(actual, aggregate_assignment(f, a, test)))
    fit = power_law_fit(x, y)
    decades = np.log10(max(x) / min(x))
    report(4, "power-law error vs demand", fit.b > 0 and fit.r_squared >= 0.6 and decades >= 1.5,
           f"a={fit.a:.4f}, b={fit.b:.3f}, R2={fit.r_squared:.3f}, span {decades:.2f} decades, "
           f"{fit.n_outside} of {fit.n} outside 99% band")


def test_ac05_pinball_exactness():
    fixed = [pinball(2.0, 0.9) - 1.8, pinball(-2.0, 0.9) - 0.2, pinball(0.0, 0.37)]
    rng = np.random.default_rng(105)
    z = rng.normal(0, 10, 1000) * rng.choice([1e-3, 1, 1e3], 1000)
    tau = rng.uniform(0.001, 0.999, 1000)
    got = pinball(z, tau)
    ref = np.array([pinball_two_branch(a, b) for a, b in zip(z, tau)])
    err = np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref)))
    worst_fixed = max(abs(v) for v in fixed)
    report(5, "pinball exactness", worst_fixed <= 1e-12 and err <= 1e-12,
           f"fixed cases off by {worst_fixed:.1e}, 1000 random pairs max error {err:.1e}")


def test_ac06_quantile_regression_recovery():
    rng = np.random.default_rng(106)
    P, n_days = 3, 364
    coef = rng.normal(0, 1, (48, 4 + 2 * P))
    coef[:, 0] += 25
    coef[:, 1] *= 0.005
    truth = QuantileModel(0.5, P, START, coef)
    y = truth.predict(START, n_days)
    fit = fit_quantile_model(series(y, allows_negative=True), 0.5, P)
    exact_err = np.abs(fit.predict(START, n_days) - y).max()

    # symmetric noise around a per-half-hour level
    level = rng.uniform(5, 15, 48)
    noise = laplace.rvs(scale=1.0, size=(n_days, 48), random_state=rng)
    y = (level + noise).ravel()
    fit = fit_quantile_model(series(y, allows_negative=True), 0.5, P)
    fitted = fit.predict(START, n_days).reshape(n_days, 48).mean(axis=0)
    median = np.median(y.reshape(n_days, 48), axis=0)
    # Monte Carlo standard error of the sample median for this noise and sample size
    draws = laplace.rvs(scale=1.0, size=(2000, n_days), random_state=np.random.default_rng(7))
    se = np.median(draws, axis=1).std()
    z = np.abs(fitted - median) / se
    report(6, "quantile regression recovery", exact_err < 1e-6 and np.all(z < 2),
           f"noiseless max error {exact_err:.1e} kWh, noisy fit vs median max {z.max():.2f} SE over 48 half-hours")


def test_ac07_bootstrap_identities():
    net = generate_network(ScenarioConfig(seed=107, n_feeders=8, nondomestic_prob=0.0))
    _, test = split(net)
    identical = 0
    for i, f in enumerate(net.feeders):
        u = bootstrap_bands(f, test, BootstrapConfig(scaling="uniform", seed=i))
        g = bootstrap_bands(f, test, BootstrapConfig(scaling="gaussian", seed=i))
        identical += (u.lower.values.tobytes() == g.lower.values.tobytes()
                      and u.upper.values.tobytes() == g.upper.values.tobytes())
    sigma_err = abs(gaussian_sigma(10.0) - 200 / 196)
    report(7, "bootstrap identities", identical == len(net.feeders) and sigma_err <= 1e-12,
           f"{identical}/{len(net.feeders)} domestic-only feeders bit-identical, sigma(10) error {sigma_err:.1e}")


def test_ac08_quantile_regression_beats_bootstrap():
    net = generate_network(ScenarioConfig(seed=108, n_feeders=20, nondomestic_prob=0.15,
                                          qmr_gross_prob_nondomestic=0.5))
    _, test = split(net)
    w = net.windows
    scores = {"qr": [], "uniform": [], "gaussian": []}
    for i, f in enumerate(net.feeders):
        actual = f.substation_series.window(w.test_start, w.test_days)
        train = f.substation_series.window(w.qr_train_start, w.qr_train_days)
        bands, _, _ = qr_bands(train, w.test_start, w.test_days, origin=w.start_date)
        scores["qr"].append(normalized_crps(actual, bands))
        for scaling in ("uniform", "gaussian"):
            b = bootstrap_bands(f, test, BootstrapConfig(scaling=scaling, seed=i))
            scores[scaling].append(normalized_crps(actual, b))
    mean = {k: float(np.mean(v)) for k, v in scores.items()}
    n_nd = sum(f.M_com > 0 for f in net.feeders)
    report(8, "QR beats both bootstraps", mean["qr"] < mean["uniform"] and mean["qr"] < mean["gaussian"],
           f"mean nCRPS QR {mean['qr']:.4f}, uniform {mean['uniform']:.4f}, gaussian {mean['gaussian']:.4f} "
           f"({n_nd} of {len(net.feeders)} feeders with non-domestic customers)")


def test_ac09_scaling_strategies():
    cfg = ScenarioConfig(seed=109, alpha_true_spread=0.0, qmr_sigma=0.01, n_solar=0)
    pool = generate_pool(cfg)
    w = cfg.windows
    train = pool.window(w.train_start, w.train_days)
    accurate, gross = [], []
    for i, tag in enumerate(("school", "shop", "office", "community-centre")):
        feeder, truth = generate_feeder(cfg, pool, i, n_customers=20, nondomestic=(tag,))
        true_scale = truth.true_mean_daily[-1]
        s = scale_strategies(feeder, train, true_scale, GAConfig(seed=i))
        accurate.append(abs(s["estimated"].effective_scale - s["actual"].effective_scale) / true_scale)
        nd = feeder.customers[-1]
        bad = feeder.replace_customers(feeder.customers[:-1] + (Customer(nd.id, nd.cls, 0.01 * nd.qmr_mean_daily),))
        s = scale_strategies(bad, train, true_scale, GAConfig(seed=i))
        gross.append((abs(s["optimal"].effective_scale - true_scale), abs(s["estimated"].effective_scale - true_scale)))
    ok = max(accurate) < 0.05 and all(opt < est for opt, est in gross)
    report(9, "scaling strategies", ok,
           f"accurate QMR: max |estimated-actual| {max(accurate):.1%}; x0.01 QMR: optimal closer to truth "
           f"on {sum(o < e for o, e in gross)}/{len(gross)} feeders")


def _pipeline(root: Path, scenario: Path):
    data = root / "data"
    codes = [main(["generate", "--config", str(scenario), "--seed", "110", "--out", str(data)]),
             main(["buddy", "--data", str(data), "--w", "0", "0.5", "1", "--out", str(root / "buddy")]),
             main(["buddy", "--data", str(data), "--method", "sa", "--out", str(root / "sa")])]
    for m in ("qr", "bootstrap-uniform", "bootstrap-gaussian"):
        codes.append(main(["bounds", "--data", str(data), "--method", m, "--out", str(root / m)]))
    codes.append(main(["evaluate", "--results", str(root / "buddy"), str(root / "qr"), "--out", str(root / "eval")]))
    return codes


def _same_outputs(a: Path, b: Path) -> list[str]:
    diffs = []
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    for rel in files:
        x, y = (a / rel).read_bytes(), (b / rel).read_bytes() if (b / rel).exists() else None
        if rel.name == "manifest.json" and y is not None:
            x, y = json.loads(x), json.loads(y)
            x.pop("timings"), y.pop("timings")
        if x != y:
            diffs.append(str(rel))
    return diffs


def test_ac10_determinism_and_formats(tmp_path):
    scenario = tmp_path / "scenario.json"
    scenario.write_text(json.dumps({"n_feeders": 6, "customers_max": 30, "nondomestic_prob": 0.1}))
    codes = _pipeline(tmp_path / "run1", scenario) + _pipeline(tmp_path / "run2", scenario)
    diffs = _same_outputs(tmp_path / "run1", tmp_path / "run2")

    # every emitted format re-read and re-written gives the same bytes
    run = tmp_path / "run1"
    ds = load_dataset(run / "data")
    again = tmp_path / "rewrite"
    write_dataset(again, [p for p in ds.pool.profiles if p.group.is_domestic], ds.feeders, ds.catalogue,
                  ds.calendar, ds.windows)
    lossy = [str(p.relative_to(again)) for p in again.rglob("*") if p.is_file()
             and p.read_bytes() != (run / "data" / p.relative_to(again)).read_bytes()]
    for bands_csv in sorted((run / "qr" / "bands").glob("*.csv")):
        write_bands_csv(again / "b.csv", read_bands_csv(bands_csv))
        if (again / "b.csv").read_bytes() != bands_csv.read_bytes():
            lossy.append(str(bands_csv.relative_to(run)))
    for model_json in sorted((run / "qr" / "models").glob("*.json")):
        records = json.loads(model_json.read_text())
        if [QuantileModel.from_dict(r).to_dict() for r in records] != records:
            lossy.append(str(model_json.relative_to(run)))
    feeders = {f.id: f for f in ds.feeders}
    train = ds.pool.window(ds.windows.train_start, ds.windows.train_days)
    for doc_path in sorted((run / "buddy" / "assignments").glob("*.json")):
        doc = json.loads(doc_path.read_text())
        f = feeders[doc["feeder_id"]]
        if assignment_records(f, assignment_from_records(doc["assignment"], f), train) != doc["assignment"]:
            lossy.append(str(doc_path.relative_to(run)))

    elapsed = time.perf_counter() - T0
    ok = set(codes) == {0} and not diffs and not lossy and elapsed < 900
    report(10, "determinism and formats", ok,
           f"exit codes {sorted(set(codes))}, {len(diffs)} differing files between runs, "
           f"{len(lossy)} lossy round-trips, acceptance suite {elapsed:.0f}s so far")
