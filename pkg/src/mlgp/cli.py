"""Command-line interface: ``mlgp {simulate,loglik,posterior,fit,bench}``.

Every run is described by one JSON config file. Relative paths inside the
config are resolved against the config file's directory. Outputs go to
``--out`` (or the config's ``out`` entry, or the current directory).

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure
(including a benchmark whose back-ends disagree).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .errors import InvalidInput, NotPositiveDefinite, NumericalOverflow
from .inference import PriorSpec, RWMConfig, fit_and_predict, split_rhat
from .kernel import HyperParams
from .likelihood import loglik
from .model import PartialDataset, RegularDataset, simulate_partial, simulate_regular
from .posterior import function_bands, posterior, sample_f

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

BACKEND_CHOICES = ("naive", "efficient", "intermediary")


class ConfigError(Exception):
    pass


def fmt(v) -> str:
    """Shortest round-trip text for a float; keeps outputs byte-stable."""
    return repr(float(v))


# ---------------------------------------------------------------------------
# config helpers


class RunConfig:
    def __init__(self, path):
        self.path = Path(path)
        try:
            with open(self.path) as fh:
                self.raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {self.path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {self.path} is not valid JSON: {exc}") from None
        if not isinstance(self.raw, dict):
            raise ConfigError("config must be a JSON object")

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def require(self, key):
        if key not in self.raw:
            raise ConfigError(f"config is missing required key {key!r}")
        return self.raw[key]

    def resolve(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.path.parent / p

    def design(self) -> str:
        design = self.require("design")
        if design not in ("regular", "partial"):
            raise ConfigError(f"design must be 'regular' or 'partial', got {design!r}")
        return design

    def theta(self) -> HyperParams:
        try:
            return HyperParams.from_dict(self.require("theta"))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed theta: {exc}") from None


def parse_grid(spec, name="grid") -> np.ndarray:
    """A grid is an explicit list or ``{"min", "max", "count"}`` (equidistant)."""
    if isinstance(spec, dict):
        try:
            count = int(spec["count"])
            lo, hi = float(spec.get("min", 0.0)), float(spec.get("max", 1.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: bad grid spec {spec!r} ({exc})") from None
        if count < 1:
            raise ConfigError(f"{name}: count must be >= 1")
        return np.linspace(lo, hi, count)
    if isinstance(spec, list) and spec:
        return np.asarray(spec, dtype=float)
    raise ConfigError(f"{name} must be a nonempty list or a {{min, max, count}} object")


# ---------------------------------------------------------------------------
# data files


class LoadedData:
    """A dataset plus the original function ids in internal order."""

    def __init__(self, data, ids):
        self.data = data
        self.ids = list(ids)


def read_long_csv(path):
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise ConfigError(f"data file not found: {path}") from None
    series = {}
    with fh:
        reader = csv.DictReader(fh)
        missing = {"function_id", "t", "y"} - set(reader.fieldnames or [])
        if missing:
            raise ConfigError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            try:
                fid = int(row["function_id"])
                series.setdefault(fid, []).append((float(row["t"]), float(row["y"])))
            except ValueError as exc:
                raise ConfigError(f"{path}: bad row {row} ({exc})") from None
    if not series:
        raise ConfigError(f"{path}: no observations")
    return {fid: sorted(obs) for fid, obs in sorted(series.items())}


def load_data(cfg: RunConfig) -> LoadedData:
    series = read_long_csv(cfg.resolve(cfg.require("data")))
    if len(series) < 2:
        raise ConfigError(f"the model needs n >= 2 functions; the data file has {len(series)}")
    design = cfg.design()
    if design == "regular":
        ids = list(series)
        t = np.array([tt for tt, _ in series[ids[0]]])
        cols = []
        for fid in ids:
            ti = np.array([tt for tt, _ in series[fid]])
            if ti.shape != t.shape or not np.array_equal(ti, t):
                raise ConfigError(f"design 'regular' but function {fid} is not on the shared grid")
            cols.append([y for _, y in series[fid]])
        return LoadedData(RegularDataset(t, np.array(cols).T), ids)
    reg_ids = cfg.require("regular_function_ids")
    if not isinstance(reg_ids, list) or not reg_ids:
        raise ConfigError("regular_function_ids must be a nonempty list")
    unknown = [i for i in reg_ids if i not in series]
    if unknown:
        raise ConfigError(f"regular_function_ids not in data: {unknown}")
    t_a = np.array([tt for tt, _ in series[reg_ids[0]]])
    cols = []
    for fid in reg_ids:
        ti = np.array([tt for tt, _ in series[fid]])
        if ti.shape != t_a.shape or not np.array_equal(ti, t_a):
            raise ConfigError(f"function {fid} is listed as regular but not on the shared grid")
        cols.append([y for _, y in series[fid]])
    irr_ids = [fid for fid in series if fid not in reg_ids]
    irregular = [
        (np.array([tt for tt, _ in series[fid]]), np.array([y for _, y in series[fid]])) for fid in irr_ids
    ]
    return LoadedData(PartialDataset(t_a, np.array(cols).T, tuple(irregular)), list(reg_ids) + irr_ids)


def write_long_csv(path, data, ids):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["function_id", "t", "y"])
        if isinstance(data, RegularDataset):
            for j, fid in enumerate(ids):
                for t, y in zip(data.t, data.Y[:, j]):
                    w.writerow([fid, fmt(t), fmt(y)])
            return
        for j in range(data.n_a):
            for t, y in zip(data.t_a, data.Y_a[:, j]):
                w.writerow([ids[j], fmt(t), fmt(y)])
        for k, (tb, yb) in enumerate(data.irregular):
            for t, y in zip(tb, yb):
                w.writerow([ids[data.n_a + k], fmt(t), fmt(y)])


def write_truth_csv(path, truth, ids):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mu"] + [f"eta{fid}" for fid in ids])
        for k, t in enumerate(truth.t):
            w.writerow([fmt(t), fmt(truth.mu[k])] + [fmt(v) for v in truth.eta[k]])


def write_draws_csv(path, draws, ids):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["draw_id", "target", "t", "value"])
        f = draws.f
        for d in range(draws.n_draws):
            for k, t in enumerate(draws.t):
                w.writerow([d, "mu", fmt(t), fmt(draws.mu[d, k])])
            for i, fid in enumerate(ids):
                for k, t in enumerate(draws.t):
                    w.writerow([d, f"f{fid}", fmt(t), fmt(f[d, i, k])])
            for i, fid in enumerate(ids):
                for k, t in enumerate(draws.t):
                    w.writerow([d, f"eta{fid}", fmt(t), fmt(draws.eta[d, i, k])])


def write_bands_csv(path, t, bands, ids):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["target", "t", "mean", "lower", "upper"])
        names = [("mu", "mu")] + [(f"f{i + 1}", f"f{fid}") for i, fid in enumerate(ids)]
        for key, label in names:
            mean, lo, hi = bands[key]
            for k, tt in enumerate(t):
                w.writerow([label, fmt(tt), fmt(mean[k]), fmt(lo[k]), fmt(hi[k])])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_chain_median(path, prior: PriorSpec) -> HyperParams:
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise ConfigError(f"chain file not found: {path}") from None
    with fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"chain file {path} is empty")
    try:
        x = np.array([[float(r[k]) for k in HyperParams.PARAM_NAMES] for r in rows])
    except KeyError as exc:
        raise ConfigError(f"chain file {path} lacks column {exc}") from None
    return HyperParams.from_vector(np.median(x, axis=0), prior.mu_family, prior.eta_family)


# ---------------------------------------------------------------------------
# subcommands


def _seed(args, cfg):
    return args.seed if args.seed is not None else int(cfg.get("seed", 0))


def _backend(args, cfg):
    backend = args.backend or cfg.get("backend", "efficient")
    if backend not in BACKEND_CHOICES:
        raise ConfigError(f"backend must be one of {BACKEND_CHOICES}, got {backend!r}")
    return backend


def _out_dir(args, cfg) -> Path:
    if args.out:
        out = Path(args.out)
    elif cfg.get("out"):
        out = cfg.resolve(cfg.get("out"))
    else:
        out = Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args, cfg: RunConfig):
    sim = cfg.require("simulate")
    theta = cfg.theta()
    seed = _seed(args, cfg)
    design = cfg.design()
    t = parse_grid(sim.get("t", {"min": 0.0, "max": 1.0, "count": 50}), "simulate.t")
    if design == "regular":
        n = int(sim.get("n", 0))
        if n < 2:
            raise ConfigError(f"simulate.n must satisfy n >= 2 (zero-sum constraint), got n={n}")
        data, truth = simulate_regular(theta, t, n, seed=seed)
    else:
        n_a = int(sim.get("n_a", 0))
        grids = [parse_grid(g, f"simulate.irregular[{i}]") for i, g in enumerate(sim.get("irregular", []))]
        if n_a < 1 or n_a + len(grids) < 2:
            raise ConfigError(f"partial simulation needs n_a >= 1 and n >= 2, got n_a={n_a}, n_b={len(grids)}")
        data, truth = simulate_partial(theta, t, n_a, grids, seed=seed)
    ids = list(range(1, len(data.grids()) + 1))
    out = _out_dir(args, cfg)
    write_long_csv(out / "data.csv", data, ids)
    write_truth_csv(out / "truth.csv", truth, ids)
    print(f"wrote {out / 'data.csv'} and {out / 'truth.csv'}")


def cmd_loglik(args, cfg: RunConfig):
    theta = cfg.theta()
    loaded = load_data(cfg)
    backend = _backend(args, cfg)
    t0 = time.perf_counter()
    res = loglik(theta, loaded.data, "naive" if backend == "naive" else "efficient")
    seconds = time.perf_counter() - t0
    result = {
        "value": res.value,
        "logdet": res.logdet,
        "quad_form": res.quad_form,
        "jitter_used": res.jitter_used,
        "backend": backend,
        "seconds": seconds,
    }
    write_json(_out_dir(args, cfg) / "loglik.json", result)
    print(json.dumps(result, sort_keys=True))


def _prior(cfg):
    try:
        return PriorSpec.from_dict(cfg.get("prior", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed prior: {exc}") from None


def cmd_posterior(args, cfg: RunConfig):
    loaded = load_data(cfg)
    if cfg.get("theta_from_chain"):
        theta = read_chain_median(cfg.resolve(cfg.get("theta_from_chain")), _prior(cfg))
    else:
        theta = cfg.theta()
    t_pred = parse_grid(cfg.require("t_pred"), "t_pred")
    backend = _backend(args, cfg)
    n_draws = int(cfg.get("n_draws", 100))
    level = float(cfg.get("level", 0.9))
    posts = posterior(theta, loaded.data, t_pred, backend)
    draws = sample_f(posts, n_draws, seed=_seed(args, cfg))
    bands = function_bands(posts, level)
    out = _out_dir(args, cfg)
    write_draws_csv(out / "draws.csv", draws, loaded.ids)
    write_bands_csv(out / "bands.csv", t_pred, bands, loaded.ids)
    print(f"wrote {out / 'draws.csv'} and {out / 'bands.csv'}")


def cmd_fit(args, cfg: RunConfig):
    loaded = load_data(cfg)
    prior = _prior(cfg)
    try:
        sampler = RWMConfig.from_dict(dict(cfg.get("sampler", {})))
    except TypeError as exc:
        raise ConfigError(f"malformed sampler settings: {exc}") from None
    sampler.seed = _seed(args, cfg)
    backend = _backend(args, cfg)
    sampler.backend = "naive" if backend == "naive" else "efficient"
    t_pred = parse_grid(cfg.require("t_pred"), "t_pred")
    fit = fit_and_predict(loaded.data, prior, t_pred, sampler, backend=backend)
    out = _out_dir(args, cfg)
    with open(out / "chain.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "log_posterior", *HyperParams.PARAM_NAMES])
        for it, (theta, lp) in enumerate(zip(fit.chain.samples, fit.chain.log_posts)):
            w.writerow([it, fmt(lp), *[fmt(v) for v in theta.to_vector()]])
    write_draws_csv(out / "draws.csv", fit.draws, loaded.ids)
    samples = fit.chain.as_array()
    summary = {
        "acceptance_rate": fit.chain.acceptance_rate,
        "n_keep": fit.chain.n_keep,
        "n_warmup": fit.chain.n_warmup,
        "n_skipped": fit.n_skipped,
        "seed": fit.chain.seed,
        "final_step_sizes": dict(zip(HyperParams.PARAM_NAMES, fit.chain.step_sizes)),
        "posterior_median": dict(zip(HyperParams.PARAM_NAMES, np.median(samples, axis=0).tolist())),
        "split_rhat": dict(zip(HyperParams.PARAM_NAMES, [split_rhat(np.log(c)) for c in samples.T])),
    }
    write_json(out / "fit_summary.json", summary)
    print(f"acceptance rate {fit.chain.acceptance_rate:.3f}, skipped samples {fit.n_skipped}")


def cmd_bench(args, cfg: RunConfig):
    raw = dict(cfg.raw)
    raw.pop("out", None)
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        plan = bench_mod.BenchPlan.from_dict(raw)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"malformed bench plan: {exc}") from None
    records = bench_mod.run_bench(plan, progress=lambda msg: print(msg, file=sys.stderr))
    out = _out_dir(args, cfg)
    bench_mod.write_records(records, out / "bench.csv")
    bench_mod.write_summary(bench_mod.summarize(records), out / "bench_summary.csv")
    problems = bench_mod.check_equivalence(records)
    for r in records:
        if r.error:
            print(f"error in {r.cell} {r.backend}: {r.error}", file=sys.stderr)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {out / 'bench.csv'}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "loglik": cmd_loglik,
    "posterior": cmd_posterior,
    "fit": cmd_fit,
    "bench": cmd_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="mlgp", description="Multi-level Gaussian process regression.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--backend", choices=BACKEND_CHOICES, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(args.config)
        code = COMMANDS[args.command](args, cfg)
    except (ConfigError, InvalidInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NotPositiveDefinite, NumericalOverflow) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
