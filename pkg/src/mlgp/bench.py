"""Timing harness comparing the dense baseline with the structured back-ends.

Each grid cell simulates one dataset, feeds it to every back-end, and records
one row per replicate. A discarded warm-up run precedes the timed replicates;
if the baseline's warm-up exceeds the time budget, its replicates are
reported as timed out instead of run.
"""

from __future__ import annotations

import csv
import math
import multiprocessing
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .inference import PriorSpec, RWMConfig, log_posterior, run_rwm
from .kernel import MATERN32, HyperParams, KernelSpec
from .likelihood import loglik
from .model import simulate_partial, simulate_regular
from .posterior import posterior, sample_f

SCENARIOS = ("loglik", "posterior_draw", "full_fit")
DESIGNS = ("regular", "partial")
BACKENDS = ("baseline", "efficient", "intermediary_efficient")
CSV_HEADER = (
    "scenario", "design", "backend", "n", "n_a", "n_b", "J", "J_p",
    "replicate", "wall_seconds", "check_value", "timeout",
)

# Matern 3/2 keeps the large posterior covariances well conditioned
DEFAULT_THETA = HyperParams(KernelSpec(MATERN32, 1.0, 0.3), KernelSpec(MATERN32, 0.5, 0.3), 0.3)


@dataclass(frozen=True)
class BenchCell:
    """One grid point. Regular cells use ``n``; partial cells ``n_a`` and ``n_b``.

    ``J`` is the shared-grid size and ``J_b`` the size of each irregular grid
    (defaults to ``J``).
    """

    J: int
    J_p: int
    n: int | None = None
    n_a: int | None = None
    n_b: int = 0
    J_b: int | None = None

    @classmethod
    def from_dict(cls, d) -> BenchCell:
        unknown = set(d) - {"n", "n_a", "n_b", "J", "J_p", "J_b"}
        if unknown:
            raise InvalidInput(f"unknown grid keys {sorted(unknown)}")
        return cls(
            J=int(d["J"]), J_p=int(d.get("J_p", d["J"])), n=d.get("n"), n_a=d.get("n_a"),
            n_b=int(d.get("n_b", 0)), J_b=d.get("J_b"),
        )

    def sizes(self, design):
        """``(n, n_a, n_b)`` for this cell under ``design``."""
        if design == "regular":
            if self.n is None:
                raise InvalidInput("regular cells need n")
            return self.n, self.n, 0
        n_a = self.n_a if self.n_a is not None else (self.n - self.n_b if self.n is not None else None)
        if n_a is None:
            raise InvalidInput("partial cells need n_a (or n and n_b)")
        return n_a + self.n_b, n_a, self.n_b


@dataclass
class BenchPlan:
    scenario: str
    design: str
    grid: list
    backends: tuple = ("baseline", "efficient")
    replicates: int = 5
    seed: int = 0
    budget_seconds: float | None = 120.0
    theta: HyperParams = DEFAULT_THETA
    fit_warmup: int = 100
    fit_keep: int = 100

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InvalidInput(f"scenario must be one of {SCENARIOS}")
        if self.design not in DESIGNS:
            raise InvalidInput(f"design must be one of {DESIGNS}")
        self.grid = [c if isinstance(c, BenchCell) else BenchCell.from_dict(c) for c in self.grid]
        if not self.grid:
            raise InvalidInput("bench grid must be nonempty")
        if self.replicates < 1:
            raise InvalidInput("replicates must be >= 1")
        bad = [b for b in self.backends if b not in BACKENDS]
        if bad or not self.backends:
            raise InvalidInput(f"backends must be a nonempty subset of {BACKENDS}")

    @classmethod
    def from_dict(cls, d) -> BenchPlan:
        d = dict(d)
        if "theta" in d:
            d["theta"] = HyperParams.from_dict(d["theta"])
        if "backends" in d:
            d["backends"] = tuple(d["backends"])
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise InvalidInput(f"unknown bench plan keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class BenchRecord:
    scenario: str
    design: str
    backend: str
    n: int
    n_a: int
    n_b: int
    J: int
    J_p: int
    replicate: int
    wall_seconds: float | None
    check_value: float | None
    timeout: bool = False
    error: str | None = field(default=None, compare=False)

    @property
    def cell(self):
        return (self.scenario, self.design, self.n, self.n_a, self.n_b, self.J, self.J_p)


def make_dataset(plan: BenchPlan, cell: BenchCell, cell_index: int):
    """Seeded dataset and prediction grid for one cell."""
    n, n_a, n_b = cell.sizes(plan.design)
    rng = np.random.default_rng([plan.seed, cell_index])
    t = np.linspace(0.0, 1.0, cell.J)
    t_pred = np.linspace(0.0, 1.0, cell.J_p)
    sim_seed = int(rng.integers(2 ** 32))
    if plan.design == "regular":
        data, _ = simulate_regular(plan.theta, t, n, seed=sim_seed)
    else:
        J_b = cell.J_b or cell.J
        t_b = [np.sort(rng.uniform(0.0, 1.0, J_b)) for _ in range(n_b)]
        data, _ = simulate_partial(plan.theta, t, n_a, t_b, seed=sim_seed)
    return data, t_pred


def _posterior_backend(backend):
    return {"baseline": "naive", "efficient": "efficient", "intermediary_efficient": "intermediary"}[backend]


def make_task(plan: BenchPlan, backend, data, t_pred):
    """A zero-argument callable running one timed unit of work; returns its check value.

    Check values are comparable across back-ends: the log-likelihood, the
    sum of squared posterior means, or the log posterior at the chain's
    starting point.
    """
    theta = plan.theta
    if plan.scenario == "loglik":
        # there is no separate intermediary likelihood; it shares the efficient path
        lik_backend = "naive" if backend == "baseline" else "efficient"
        return lambda: loglik(theta, data, lik_backend).value
    if plan.scenario == "posterior_draw":
        post_backend = _posterior_backend(backend)

        def task():
            posts = posterior(theta, data, t_pred, post_backend)
            sample_f(posts, 1, seed=0)
            return float(sum(np.sum(p.mean ** 2) for p in posts))

        return task
    lik_backend = "naive" if backend == "baseline" else "efficient"
    prior = PriorSpec(mu_family=theta.mu_kernel.family, eta_family=theta.eta_kernel.family)
    config = RWMConfig(n_warmup=plan.fit_warmup, n_keep=plan.fit_keep, seed=plan.seed, backend=lik_backend)

    def task():
        run_rwm(data, prior, config)
        return log_posterior(prior.center(), data, prior, lik_backend)

    return task


def _child(task):
    task()


def _finishes_within(task, budget):
    """Run ``task`` in a forked process; False if it is still running after ``budget`` seconds.

    A task that fails quickly counts as finished, so the caller reruns it
    in-process and records the error.
    """
    ctx = multiprocessing.get_context("fork")
    proc = ctx.Process(target=_child, args=(task,))
    proc.start()
    proc.join(budget)
    if proc.is_alive():
        proc.kill()
        proc.join()
        return False
    return True


def run_bench(plan: BenchPlan, progress=None) -> list:
    """Run every (cell, backend) pair; returns a list of :class:`BenchRecord`.

    Numerical failures are recorded on the affected rows and never stop the
    sweep.
    """
    records = []
    for ci, cell in enumerate(plan.grid):
        n, n_a, n_b = cell.sizes(plan.design)
        data, t_pred = make_dataset(plan, cell, ci)
        for backend in plan.backends:
            def record(rep, seconds, check, timeout=False, error=None):
                records.append(BenchRecord(
                    plan.scenario, plan.design, backend, n, n_a, n_b, cell.J, cell.J_p,
                    rep, seconds, check, timeout, error,
                ))

            task = make_task(plan, backend, data, t_pred)
            if backend == "baseline" and plan.budget_seconds is not None:
                if not _finishes_within(task, plan.budget_seconds):
                    for rep in range(plan.replicates):
                        record(rep, None, None, timeout=True)
                    if progress:
                        progress(f"{plan.scenario} {cell} {backend}: timeout")
                    continue
            done = 0
            try:
                task()  # warm-up, discarded
                for rep in range(plan.replicates):
                    t0 = time.perf_counter()
                    check = task()
                    record(rep, time.perf_counter() - t0, check)
                    done += 1
            except (ArithmeticError, ValueError) as exc:
                for rep in range(done, plan.replicates):
                    record(rep, None, None, error=f"{type(exc).__name__}: {exc}")
            if progress:
                progress(f"{plan.scenario} {cell} {backend}: done")
    return records


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])


def read_records(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(BenchRecord(
                row["scenario"], row["design"], row["backend"], int(row["n"]), int(row["n_a"]),
                int(row["n_b"]), int(row["J"]), int(row["J_p"]), int(row["replicate"]),
                float(row["wall_seconds"]) if row["wall_seconds"] else None,
                float(row["check_value"]) if row["check_value"] else None,
                row["timeout"] == "1",
            ))
    return out


def summarize(records) -> list:
    """Median wall time per (cell, backend), with speed ratios against ``efficient``.

    Each output row is a dict with the cell fields, ``backend``,
    ``median_seconds`` and ``ratio_to_efficient`` (``None`` when either side
    has no timed runs).
    """
    if not records:
        raise InvalidInput("nothing to summarize")
    groups = {}
    for r in records:
        groups.setdefault((r.cell, r.backend), []).append(r)
    medians = {}
    for key, rs in groups.items():
        times = [r.wall_seconds for r in rs if r.wall_seconds is not None]
        medians[key] = statistics.median(times) if times else None
    rows = []
    for (cell, backend), med in medians.items():
        ref = medians.get((cell, "efficient"))
        ratio = med / ref if med is not None and ref else None
        scenario, design, n, n_a, n_b, J, J_p = cell
        rows.append({
            "scenario": scenario, "design": design, "n": n, "n_a": n_a, "n_b": n_b, "J": J, "J_p": J_p,
            "backend": backend, "median_seconds": med, "ratio_to_efficient": ratio,
        })
    return rows


def write_summary(rows, path):
    keys = ("scenario", "design", "n", "n_a", "n_b", "J", "J_p", "backend", "median_seconds", "ratio_to_efficient")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in keys])


def check_equivalence(records, rtol=1e-6) -> list:
    """Cells whose back-ends disagree on the check value by more than ``rtol`` (relative).

    Returns a list of human-readable violation messages (empty when all agree).
    """
    by_cell = {}
    for r in records:
        if r.check_value is not None:
            by_cell.setdefault(r.cell, []).append(r)
    problems = []
    for cell, rs in by_cell.items():
        values = [r.check_value for r in rs]
        ref = max(values, key=abs)
        scale = max(1.0, abs(ref))
        spread = max(values) - min(values)
        if not math.isfinite(spread) or spread > rtol * scale:
            problems.append(f"cell {cell}: check values spread {spread:.3e} exceeds {rtol:g} relative")
    return problems
