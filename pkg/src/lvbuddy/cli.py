"""Command-line pipelines: ``lvbuddy generate | buddy | bounds | evaluate``.

Every command writes ``manifest.json`` next to its outputs (config hash,
seeds, input digests, version, timings, output list). Exit codes: 0 ok,
2 configuration error, 3 data error, 4 numerical failure; failures print a
one-line JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, seeding
from .buddying import GAConfig, assignment_records, cost, ga_buddy, simple_buddy
from .errors import ConfigError, DataError, LVBuddyError
from .evaluation import (BUCKETS, CRPS_DEFINITION, alpha_histogram, histogram_rows, mean_demand,
                         normalized_crps, power_law_curve_rows, power_law_fit, proportion_bucket,
                         read_rows_csv, rmae, write_rows_csv)
from .ingestion.files import atomic_write, dump_json, load_dataset, write_dataset
from .model import aggregate_assignment
from .synthgen import ScenarioConfig, generate_network, truth_records
from .uncertainty import BootstrapConfig, bootstrap_bands, qr_bands, write_bands_csv

DEFAULT_WEIGHTS = tuple(round(0.1 * i, 1) for i in range(11))
BOUND_METHODS = ("bootstrap-uniform", "bootstrap-gaussian", "qr")
BOUNDS_DEFAULTS = {"n_resamples": 1500, "quantiles": [0.1, 0.9], "P": 3, "include_solar": True, "seed": 0}


# --- shared plumbing -----------------------------------------------------------

def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return d


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _digests(*dirs: Path) -> dict[str, str]:
    """sha256 per input file, keyed by path relative to its directory."""
    out = {}
    for n, d in enumerate(dirs):
        prefix = f"{n}:" if len(dirs) > 1 else ""
        for p in sorted(d.rglob("*")):
            if p.is_file() and p.name != "manifest.json":
                out[prefix + p.relative_to(d).as_posix()] = _sha256(p)
    return out


class _Run:
    """Collects timings and outputs, then writes the manifest."""

    def __init__(self, command: str, out: Path, config: dict):
        self.command, self.out, self.config = command, out, config
        self.timings: dict[str, float] = {}
        self.outputs: list[Path] = []
        self.seeds: dict = {}
        self.inputs: dict[str, str] = {}
        self._t = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)

    def lap(self, stage: str):
        now = time.perf_counter()
        self.timings[stage] = round(now - self._t, 6)
        self._t = now

    def add(self, *paths):
        self.outputs.extend(Path(p) for p in paths)

    def finish(self, **extra) -> Path:
        canonical = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        manifest = {
            "tool": "lvbuddy", "version": __version__, "command": self.command,
            "config": self.config, "config_hash": hashlib.sha256(canonical.encode()).hexdigest(),
            "seeds": self.seeds, "inputs": self.inputs,
            "outputs": sorted(str(p.relative_to(self.out)) for p in self.outputs),
            **extra, "timings": self.timings,
        }
        return atomic_write(self.out / "manifest.json", dump_json(manifest))


def _map(fn, items, jobs: int, initializer=None, initargs=()):
    """Ordered map, optionally across worker processes."""
    if jobs <= 1 or len(items) <= 1:
        if initializer:
            initializer(*initargs)
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs, initializer=initializer, initargs=initargs) as ex:
        return list(ex.map(fn, items))


def _load(data: str):
    path = Path(data)
    if not path.is_dir():
        raise DataError(f"data directory {data} does not exist")
    return path, load_dataset(path)


# --- generate ------------------------------------------------------------------

def cmd_generate(args) -> int:
    d = _read_config(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = ScenarioConfig.from_dict(d)
    run = _Run("generate", Path(args.out), cfg.to_dict())
    net = generate_network(cfg)
    run.lap("generate")
    run.add(*write_dataset(run.out, net.domestic_profiles, net.feeders, net.catalogue, net.calendar,
                           net.windows))
    run.add(*(run.out / "substations" / f"{f.id}.csv" for f in net.feeders if f.substation_series))
    run.add(atomic_write(run.out / "truth.json", dump_json(truth_records(net))))
    run.add(atomic_write(run.out / "scenario.json", dump_json(cfg.to_dict())))
    run.seeds = {"master": cfg.seed}
    run.lap("write")
    run.finish()
    return 0


# --- buddy -----------------------------------------------------------------------

_STATE: dict = {}


def _set_state(state):
    _STATE.clear()
    _STATE.update(state)


def _buddy_feeder(i: int):
    s = _STATE
    f, train, test = s["feeders"][i], s["train"], s["test"]
    rows, docs, seeds = [], [], {}
    sa = simple_buddy(f, train) if s["method"] == "sa" else None
    for w in s["weights"]:
        if sa is not None:
            assignment, breakdown = sa, cost(f, sa, train, w)
        else:
            seed = seeding.derive_seed(s["master"], seeding.BUDDY, i, round(w * 1000))
            seeds[f"{f.id}/w={w:g}"] = seed
            assignment, breakdown, _ = ga_buddy(f, train, s["ga"].replace(w=w, seed=seed))
        row = {"feeder_id": f.id, "method": s["method"], "w": w, "M": f.M, "M_dom": f.M_dom,
               "M_com": f.M_com, "proportion_nondomestic": f.proportion_nondomestic,
               "bucket": proportion_bucket(f.proportion_nondomestic), "mean_demand_kwh": None,
               "cost_total": breakdown.total, "substation_term": breakdown.substation_term,
               "domestic_term": breakdown.domestic_term, "nondomestic_term": breakdown.nondomestic_term,
               "train_rmae": None, "test_rmae": None}
        if f.substation_series is not None:
            for name, pool in (("train", train), ("test", test)):
                actual = f.substation_series.window(pool.start_date, pool.n_days)
                row[f"{name}_rmae"] = rmae(actual, aggregate_assignment(f, assignment, pool))
            row["mean_demand_kwh"] = mean_demand(f.substation_series.window(test.start_date, test.n_days))
        rows.append(row)
        docs.append({"feeder_id": f.id, "method": s["method"], "w": w,
                     "assignment": assignment_records(f, assignment, train),
                     "cost": breakdown.to_dict()})
    return rows, docs, seeds


RESULT_COLUMNS = ("feeder_id", "method", "w", "M", "M_dom", "M_com", "proportion_nondomestic", "bucket",
                  "mean_demand_kwh", "cost_total", "substation_term", "domestic_term",
                  "nondomestic_term", "train_rmae", "test_rmae")


def cmd_buddy(args) -> int:
    ga_dict = _read_config(args.config)
    try:
        ga = GAConfig.from_dict(ga_dict)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    master = args.seed if args.seed is not None else ga.seed
    weights = args.w if args.w else (list(DEFAULT_WEIGHTS) if args.method == "ga" else [1.0])
    for w in weights:
        if not 0 <= w <= 1:
            raise ConfigError(f"weight {w} outside [0, 1]")
    data_dir, ds = _load(args.data)
    config = {"method": args.method, "weights": weights, "ga": ga.to_dict(), "master_seed": master,
              "windows": ds.windows.to_dict()}
    run = _Run("buddy", Path(args.out), config)
    run.inputs = _digests(data_dir)
    win = ds.windows
    train = ds.pool.window(win.train_start, win.train_days)
    test = ds.pool.window(win.test_start, win.test_days)
    run.lap("load")
    state = {"feeders": ds.feeders, "train": train, "test": test, "method": args.method,
             "weights": weights, "ga": ga, "master": master}
    results = _map(_buddy_feeder, list(range(len(ds.feeders))), args.jobs, _set_state, (state,))
    run.lap("buddy")
    rows = []
    for f_rows, docs, seeds in results:
        rows.extend(f_rows)
        run.seeds.update(seeds)
        for doc in docs:
            name = f"{doc['feeder_id']}_{doc['method']}_w{doc['w']:.2f}.json"
            run.add(atomic_write(run.out / "assignments" / name, dump_json(doc)))
    run.add(write_rows_csv(run.out / "results.csv", RESULT_COLUMNS, rows))
    run.lap("write")
    run.finish(cleaning_replacements=ds.n_replaced)
    return 0


# --- bounds ----------------------------------------------------------------------

def _bounds_feeder(i: int):
    s = _STATE
    f, test, win, params = s["feeders"][i], s["test"], s["windows"], s["params"]
    method = s["method"]
    seed = None
    if method == "qr":
        if f.substation_series is None:
            raise DataError(f"feeder {f.id}: quantile regression needs a substation series")
        train = f.substation_series.window(win.qr_train_start, win.qr_train_days)
        bands, low, high = qr_bands(train, win.test_start, win.test_days, P=params["P"],
                                    quantiles=tuple(params["quantiles"]), origin=win.start_date)
        models = [low.to_dict(), high.to_dict()]
    else:
        seed = seeding.derive_seed(params["seed"], seeding.BOUNDS, i)
        cfg = BootstrapConfig(params["n_resamples"], method.split("-")[1], tuple(params["quantiles"]),
                              seed, params["include_solar"])
        bands = bootstrap_bands(f, test, cfg)
        models = None
    row = {"feeder_id": f.id, "method": method, "M": f.M, "M_com": f.M_com,
           "proportion_nondomestic": f.proportion_nondomestic,
           "bucket": proportion_bucket(f.proportion_nondomestic), "mean_demand_kwh": None,
           "ncrps": None, "coverage": None, "n_crossings": bands.n_crossings}
    if f.substation_series is not None:
        actual = f.substation_series.window(win.test_start, win.test_days)
        row.update(mean_demand_kwh=mean_demand(actual), coverage=bands.coverage(actual),
                   ncrps=normalized_crps(actual, bands, tuple(params["quantiles"])))
    return row, bands, models, seed


CRPS_COLUMNS = ("feeder_id", "method", "M", "M_com", "proportion_nondomestic", "bucket", "mean_demand_kwh",
                "ncrps", "coverage", "n_crossings")
SUMMARY_ROWS = ("all", "domestic-only", "small", "medium", "large")


def crps_summary(rows) -> list[dict]:
    """Mean nCRPS per feeder type: all, domestic-only, then by non-domestic proportion."""
    out = []
    scored = [r for r in rows if r["ncrps"] not in (None, "")]
    for name in SUMMARY_ROWS:
        bucket = "none" if name == "domestic-only" else name
        sel = [float(r["ncrps"]) for r in scored if name == "all" or r["bucket"] == bucket]
        out.append({"feeder_type": name, "n_feeders": len(sel),
                    "mean_ncrps": float(np.mean(sel)) if sel else None})
    return out


def cmd_bounds(args) -> int:
    params = {**BOUNDS_DEFAULTS, **_read_config(args.config)}
    unknown = set(params) - set(BOUNDS_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown bounds keys: {sorted(unknown)}")
    if args.seed is not None:
        params["seed"] = args.seed
    BootstrapConfig(params["n_resamples"], "uniform", tuple(params["quantiles"]), params["seed"])
    if not isinstance(params["P"], int) or params["P"] < 0:
        raise ConfigError("P must be a non-negative integer")
    data_dir, ds = _load(args.data)
    run = _Run("bounds", Path(args.out), {"method": args.method, "params": params,
                                         "windows": ds.windows.to_dict(), "crps": CRPS_DEFINITION})
    run.inputs = _digests(data_dir)
    test = ds.pool.window(ds.windows.test_start, ds.windows.test_days)
    run.lap("load")
    state = {"feeders": ds.feeders, "test": test, "windows": ds.windows, "params": params,
             "method": args.method}
    results = _map(_bounds_feeder, list(range(len(ds.feeders))), args.jobs, _set_state, (state,))
    run.lap("bounds")
    rows = []
    for row, bands, models, seed in results:
        rows.append(row)
        fid = row["feeder_id"]
        if seed is not None:
            run.seeds[fid] = seed
        run.add(write_bands_csv(run.out / "bands" / f"{fid}.csv", bands))
        if models:
            run.add(atomic_write(run.out / "models" / f"{fid}.json", dump_json(models)))
    run.add(write_rows_csv(run.out / "crps.csv", CRPS_COLUMNS, rows))
    run.add(write_rows_csv(run.out / "crps_summary.csv", ("feeder_type", "n_feeders", "mean_ncrps"),
                           crps_summary(rows)))
    run.lap("write")
    run.finish(cleaning_replacements=ds.n_replaced)
    return 0


# --- evaluate ----------------------------------------------------------------------

def _fit_groups(rows, key_cols, y_col, label):
    """Power-law fit of ``y_col`` against mean demand for each group of rows."""
    groups = defaultdict(list)
    for r in rows:
        if r.get(y_col) not in (None, "") and r.get("mean_demand_kwh") not in (None, ""):
            groups[tuple(r[c] for c in key_cols)].append(r)
    fits, curves, scatter, refused = [], [], [], []
    for key, members in sorted(groups.items()):
        x = [float(r["mean_demand_kwh"]) for r in members]
        y = [float(r[y_col]) for r in members]
        keyd = dict(zip(key_cols, key))
        if len(members) < 3:
            refused.append(f"{label} {keyd}: {len(members)} point(s), need at least 3")
            continue
        fit = power_law_fit(x, y)
        fits.append({**keyd, "metric": y_col, **fit.to_dict()})
        curves += [{**keyd, **c} for c in power_law_curve_rows(fit)]
        scatter += [{**keyd, "feeder_id": r["feeder_id"], "bucket": r["bucket"], "mean_demand_kwh": xi,
                     y_col: yi, "inside": ins}
                    for r, xi, yi, ins in zip(members, x, y, fit.inside)]
    return fits, curves, scatter, refused


def cmd_evaluate(args) -> int:
    dirs = [Path(d) for d in args.results]
    buddy_rows, crps_rows, alphas = [], [], defaultdict(list)
    for d in dirs:
        if (d / "results.csv").exists():
            buddy_rows += read_rows_csv(d / "results.csv")
        if (d / "crps.csv").exists():
            crps_rows += read_rows_csv(d / "crps.csv")
        for p in sorted((d / "assignments").glob("*.json")):
            with open(p) as fh:
                doc = json.load(fh)
            alphas[float(doc["w"])] += [r["alpha"] for r in doc["assignment"] if "alpha" in r]
    if not buddy_rows and not crps_rows:
        raise DataError(f"no results.csv or crps.csv under {', '.join(map(str, dirs))}")
    run = _Run("evaluate", Path(args.out), {"n_results_dirs": len(dirs), "crps": CRPS_DEFINITION})
    run.inputs = _digests(*dirs)
    fits, refused = [], []
    for rows, keys, metric, name in ((buddy_rows, ("method", "w"), "test_rmae", "rmae"),
                                     (crps_rows, ("method",), "ncrps", "ncrps")):
        if not rows:
            continue
        f, curves, scatter, ref = _fit_groups(rows, keys, metric, name)
        fits += f
        refused += ref
        if f:
            run.add(write_rows_csv(run.out / f"{name}_fit_curve.csv", (*keys, "x", "fit", "lower", "upper"),
                                   curves))
            run.add(write_rows_csv(run.out / f"{name}_scatter.csv",
                                   (*keys, "feeder_id", "bucket", "mean_demand_kwh", metric, "inside"),
                                   scatter))
    if not fits:
        raise DataError("power-law fit refused: " + "; ".join(refused))
    run.add(atomic_write(run.out / "power_law_fits.json", dump_json({"fits": fits, "refused": refused})))

    if buddy_rows:
        table = defaultdict(list)
        for r in buddy_rows:
            if r["test_rmae"] != "":
                table[(r["method"], float(r["w"]), "all")].append(float(r["test_rmae"]))
                if r["bucket"] == "none":
                    table[(r["method"], float(r["w"]), "domestic-only")].append(float(r["test_rmae"]))
        rows = [{"method": m, "w": w, "feeders": g, "n": len(v), "mean_test_rmae": float(np.mean(v))}
                for (m, w, g), v in sorted(table.items())]
        run.add(write_rows_csv(run.out / "rmae_vs_w.csv", ("method", "w", "feeders", "n", "mean_test_rmae"),
                               rows))
    if any(alphas.values()):
        hist = alpha_histogram(alphas)
        run.add(write_rows_csv(run.out / "alpha_histogram.csv", ("w", "bin_lower", "bin_upper", "count"),
                               histogram_rows(hist)))
    run.lap("evaluate")
    run.finish(buckets=list(BUCKETS))
    return 0


# --- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lvbuddy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_help):
        p.add_argument("--config", help=config_help)
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("generate", help="write a synthetic dataset with ground truth")
    common(p, "scenario JSON")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("buddy", help="buddy every feeder with the simple algorithm or the GA")
    common(p, "GA settings JSON")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--method", choices=("sa", "ga"), default="ga")
    p.add_argument("--w", type=float, nargs="+", help="weights (default 0, 0.1, ..., 1 for ga; 1 for sa)")
    p.set_defaults(func=cmd_buddy)

    p = sub.add_parser("bounds", help="confidence bands and normalised CRPS per feeder")
    common(p, "bounds settings JSON (n_resamples, quantiles, P, include_solar, seed)")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--method", choices=BOUND_METHODS, default="qr")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("evaluate", help="power-law fits, scatters and alpha histograms from results")
    common(p, "unused; accepted for symmetry")
    p.add_argument("--results", required=True, nargs="+", help="buddy and/or bounds output directories")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _fail(kind: str, code: int, message: str) -> int:
    print(json.dumps({"error": kind, "exit_code": code, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        return _fail("ConfigError", 2, "--jobs must be >= 1")
    try:
        return args.func(args)
    except LVBuddyError as exc:
        return _fail(type(exc).__name__, exc.exit_code, str(exc))
    except OSError as exc:
        return _fail(type(exc).__name__, DataError.exit_code, f"{exc.filename or ''}: {exc.strerror or exc}")
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail(type(exc).__name__, DataError.exit_code, str(exc))


if __name__ == "__main__":
    sys.exit(main())
