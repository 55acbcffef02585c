"""Hyperparameter inference by random-walk Metropolis, plus conjugate function draws.

Given the hyperparameters, the latent functions have a Gaussian posterior, so
only the five positive hyperparameters are sampled. Each retained sample is
then plugged into the analytic conditional posterior to produce one draw of
the functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, NotPositiveDefinite, NumericalOverflow
from .kernel import SQUARED_EXPONENTIAL, HyperParams
from .likelihood import loglik
from .posterior import FunctionDraws, posterior, sample_f

N_PARAMS = len(HyperParams.PARAM_NAMES)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorSpec:
    """Independent log-normal priors, in :attr:`HyperParams.PARAM_NAMES` order.

    ``log_mean[k]`` and ``log_sd[k]`` are the mean and standard deviation of
    ``log theta_k``. The kernel families are fixed, not sampled.
    """

    log_mean: tuple = (0.0, math.log(0.3), math.log(0.5), math.log(0.3), math.log(0.2))
    log_sd: tuple = (1.0, 1.0, 1.0, 1.0, 1.0)
    mu_family: str = SQUARED_EXPONENTIAL
    eta_family: str = SQUARED_EXPONENTIAL

    def __post_init__(self):
        object.__setattr__(self, "log_mean", tuple(float(v) for v in self.log_mean))
        object.__setattr__(self, "log_sd", tuple(float(v) for v in self.log_sd))
        if len(self.log_mean) != N_PARAMS or len(self.log_sd) != N_PARAMS:
            raise InvalidInput(f"prior needs {N_PARAMS} log-means and log-sds")
        if not all(s > 0.0 and math.isfinite(s) for s in self.log_sd):
            raise InvalidInput("prior log-sds must be positive")
        if not all(math.isfinite(m) for m in self.log_mean):
            raise InvalidInput("prior log-means must be finite")

    def center(self) -> HyperParams:
        """Hyperparameters at the prior log-means (the chain's starting point)."""
        return self.to_theta(np.array(self.log_mean))

    def to_theta(self, log_x) -> HyperParams:
        return HyperParams.from_vector(np.exp(log_x), self.mu_family, self.eta_family)

    def to_dict(self) -> dict:
        return {
            "log_mean": dict(zip(HyperParams.PARAM_NAMES, self.log_mean)),
            "log_sd": dict(zip(HyperParams.PARAM_NAMES, self.log_sd)),
            "mu_family": self.mu_family,
            "eta_family": self.eta_family,
        }

    @classmethod
    def from_dict(cls, d) -> PriorSpec:
        default = cls()

        def read(key, fallback):
            block = d.get(key)
            if block is None:
                return fallback
            if isinstance(block, dict):
                unknown = set(block) - set(HyperParams.PARAM_NAMES)
                if unknown:
                    raise InvalidInput(f"unknown prior parameters {sorted(unknown)}")
                return tuple(block.get(name, v) for name, v in zip(HyperParams.PARAM_NAMES, fallback))
            return tuple(block)

        return cls(
            read("log_mean", default.log_mean),
            read("log_sd", default.log_sd),
            d.get("mu_family", default.mu_family),
            d.get("eta_family", default.eta_family),
        )


def log_prior(theta: HyperParams, prior: PriorSpec) -> float:
    """Sum of log-normal log-densities of the five hyperparameters."""
    x = theta.to_vector()
    if np.any(x <= 0.0):
        return -math.inf
    total = 0.0
    for v, m, s in zip(x, prior.log_mean, prior.log_sd):
        z = (math.log(v) - m) / s
        total += -math.log(v * s) - _LOG_SQRT_2PI - 0.5 * z * z
    return total


def log_posterior(theta: HyperParams, data, prior: PriorSpec, backend="efficient") -> float:
    """Unnormalized log posterior density of ``theta``.

    ``data=None`` gives the prior alone. A failed factorization yields
    ``-inf`` so that a sampler simply rejects the state.
    """
    lp = log_prior(theta, prior)
    if data is None or not math.isfinite(lp):
        return lp
    try:
        value = loglik(theta, data, backend).value
    except (NotPositiveDefinite, NumericalOverflow):
        return -math.inf
    return lp + value if math.isfinite(value) else -math.inf


@dataclass
class RWMConfig:
    n_warmup: int = 1000
    n_keep: int = 1000
    step_sizes: tuple | None = None
    seed: int = 0
    adapt_every: int = 50
    backend: str = "efficient"

    def __post_init__(self):
        if self.n_keep < 1:
            raise InvalidInput("n_keep must be >= 1")
        if self.n_warmup < 0:
            raise InvalidInput("n_warmup must be >= 0")
        if self.adapt_every < 1:
            raise InvalidInput("adapt_every must be >= 1")
        if self.step_sizes is None:
            self.step_sizes = (0.2,) * N_PARAMS
        self.step_sizes = tuple(float(s) for s in np.broadcast_to(self.step_sizes, (N_PARAMS,)))
        if any(s < 0.0 or not math.isfinite(s) for s in self.step_sizes):
            raise InvalidInput("step sizes must be finite and >= 0")

    @classmethod
    def from_dict(cls, d) -> RWMConfig:
        allowed = {"n_warmup", "n_keep", "step_sizes", "seed", "adapt_every", "backend"}
        unknown = set(d) - allowed
        if unknown:
            raise InvalidInput(f"unknown sampler options {sorted(unknown)}")
        return cls(**d)


@dataclass
class Chain:
    samples: list
    log_posts: list
    acceptance_rate: float
    seed: int
    n_warmup: int
    n_keep: int
    step_sizes: tuple = field(default=())

    def as_array(self) -> np.ndarray:
        return np.array([s.to_vector() for s in self.samples])

    def median(self, prior: PriorSpec) -> HyperParams:
        return HyperParams.from_vector(np.median(self.as_array(), axis=0), prior.mu_family, prior.eta_family)


def metropolis(log_density, x0, step_sizes, n_warmup, n_keep, rng, adapt_every=50):
    """Gaussian random-walk Metropolis on ``R^d`` with per-coordinate step sizes.

    Warm-up adapts the steps in two ways. After every ``adapt_every``
    iterations the steps are multiplied by 1.25 or 0.8 when the window's
    acceptance fell above 0.4 or below 0.2. Halfway through warm-up, each
    step is reset to ``2.38 / sqrt(d)`` times the spread of that coordinate
    over the first half, so that poorly scaled coordinates stop limiting the
    others. The steps are frozen once warm-up ends.

    Returns ``(xs, log_ps, acceptance_rate, final_steps)``, where the
    acceptance rate covers the kept iterations only.
    """
    x = np.asarray(x0, dtype=float).copy()
    steps = np.asarray(step_sizes, dtype=float).copy()
    lp = log_density(x)
    xs = np.empty((n_keep, x.size))
    lps = np.empty(n_keep)
    rescale_at = n_warmup // 2
    history = np.empty((rescale_at, x.size))
    accepted_window = 0
    accepted_kept = 0
    for it in range(n_warmup + n_keep):
        proposal = x + steps * rng.standard_normal(x.size)
        lp_new = log_density(proposal)
        log_u = math.log(rng.uniform())
        # a -inf proposal is never accepted; identical proposals always are
        if lp_new > -math.inf and (lp_new >= lp or log_u < lp_new - lp):
            x, lp = proposal, lp_new
            accepted = True
        else:
            accepted = False
        if it < n_warmup:
            if it < rescale_at:
                history[it] = x
            elif it == rescale_at and rescale_at >= 4 * adapt_every:
                spread = history[rescale_at // 2:].std(axis=0)
                steps = np.where(spread > 0.0, 2.38 / math.sqrt(x.size) * spread, steps)
            accepted_window += accepted
            if (it + 1) % adapt_every == 0:
                rate = accepted_window / adapt_every
                if rate > 0.4:
                    steps *= 1.25
                elif rate < 0.2:
                    steps *= 0.8
                accepted_window = 0
        else:
            k = it - n_warmup
            xs[k] = x
            lps[k] = lp
            accepted_kept += accepted
    return xs, lps, accepted_kept / n_keep, steps


def run_rwm(data, prior: PriorSpec, config: RWMConfig | None = None) -> Chain:
    """Sample the hyperparameters on the log scale, starting at the prior log-means.

    The log-scale target includes the Jacobian ``sum(log theta)``, so the
    chain targets the posterior of ``theta`` itself.
    """
    config = config or RWMConfig()
    rng = np.random.default_rng(config.seed)

    def log_density(log_x):
        try:
            theta = prior.to_theta(log_x)
        except InvalidInput:
            return -math.inf
        return log_posterior(theta, data, prior, config.backend) + float(np.sum(log_x))

    xs, lps, rate, steps = metropolis(
        log_density, np.array(prior.log_mean), config.step_sizes, config.n_warmup, config.n_keep, rng,
        config.adapt_every,
    )
    samples = [prior.to_theta(x) for x in xs]
    # report the density of theta, without the Jacobian
    log_posts = [float(lp - np.sum(x)) for lp, x in zip(lps, xs)]
    return Chain(samples, log_posts, rate, config.seed, config.n_warmup, config.n_keep, tuple(steps))


@dataclass
class FitResult:
    chain: Chain
    draws: FunctionDraws
    n_skipped: int


def predict_from_chain(chain: Chain, data, t_pred, seed=None, backend="efficient", rng=None):
    """One function draw per retained hyperparameter sample.

    Samples whose conditional posterior cannot be factored are skipped and
    counted. Returns ``(draws, n_skipped)``.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    t_pred = np.asarray(t_pred, dtype=float).reshape(-1)
    mus, etas = [], []
    skipped = 0
    cached_theta, cached = None, None
    for theta in chain.samples:
        # a rejected proposal repeats the previous state; reuse its posterior
        if theta != cached_theta:
            try:
                cached = posterior(theta, data, t_pred, backend)
            except (NotPositiveDefinite, NumericalOverflow):
                cached = None
            cached_theta = theta
        if cached is None:
            skipped += 1
            continue
        d = sample_f(cached, 1, rng=rng)
        mus.append(d.mu[0])
        etas.append(d.eta[0])
    n = len(data.grids())
    if mus:
        draws = FunctionDraws(t_pred, np.array(mus), np.array(etas))
    else:
        draws = FunctionDraws(t_pred, np.zeros((0, t_pred.size)), np.zeros((0, n, t_pred.size)))
    return draws, skipped


def fit_and_predict(data, prior: PriorSpec, t_pred, config: RWMConfig | None = None, backend="efficient") -> FitResult:
    """Run the sampler, then draw the functions once per retained sample."""
    config = config or RWMConfig()
    chain = run_rwm(data, prior, config)
    # separate stream so the chain is unaffected by prediction settings
    rng = np.random.default_rng([config.seed, 1])
    draws, skipped = predict_from_chain(chain, data, t_pred, backend=backend, rng=rng)
    return FitResult(chain, draws, skipped)


def split_rhat(x) -> float:
    """Split potential scale reduction for one scalar chain."""
    x = np.asarray(x, dtype=float)
    half = x.size // 2
    if half < 2:
        return math.nan
    parts = np.stack([x[:half], x[half:2 * half]])
    means = parts.mean(axis=1)
    within = parts.var(axis=1, ddof=1).mean()
    between = half * means.var(ddof=1)
    if within == 0.0:
        return 1.0 if between == 0.0 else math.inf
    var_plus = (half - 1) / half * within + between / half
    return math.sqrt(var_plus / within)
