"""Stationary covariance functions on the real line.

Two families are provided: the squared exponential and the Matern 3/2. Both
are parameterized by an output variance and a lengthscale. A variance of zero
is accepted and yields the identically-zero kernel, which is handy for
building degenerate test cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

SQUARED_EXPONENTIAL = "se"
MATERN32 = "matern32"
FAMILIES = (SQUARED_EXPONENTIAL, MATERN32)

_ALIASES = {
    "se": SQUARED_EXPONENTIAL,
    "squaredexponential": SQUARED_EXPONENTIAL,
    "squared_exponential": SQUARED_EXPONENTIAL,
    "rbf": SQUARED_EXPONENTIAL,
    "matern32": MATERN32,
    "matern_32": MATERN32,
}


@dataclass(frozen=True)
class KernelSpec:
    """A stationary kernel: family, output variance and lengthscale."""

    family: str = SQUARED_EXPONENTIAL
    variance: float = 1.0
    lengthscale: float = 1.0

    def __post_init__(self):
        family = _ALIASES.get(str(self.family).lower())
        if family is None:
            raise InvalidInput(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "variance", float(self.variance))
        object.__setattr__(self, "lengthscale", float(self.lengthscale))
        if not (self.variance >= 0.0 and math.isfinite(self.variance)):
            raise InvalidInput(f"kernel variance must be finite and >= 0, got {self.variance}")
        if not (self.lengthscale > 0.0 and math.isfinite(self.lengthscale)):
            raise InvalidInput(f"kernel lengthscale must be finite and > 0, got {self.lengthscale}")

    def replace(self, **changes) -> KernelSpec:
        fields = {"family": self.family, "variance": self.variance, "lengthscale": self.lengthscale}
        fields.update(changes)
        return KernelSpec(**fields)

    def to_dict(self) -> dict:
        return {"family": self.family, "variance": self.variance, "lengthscale": self.lengthscale}

    @classmethod
    def from_dict(cls, d) -> KernelSpec:
        return cls(
            family=d.get("family", SQUARED_EXPONENTIAL),
            variance=d["variance"],
            lengthscale=d["lengthscale"],
        )


@dataclass(frozen=True)
class HyperParams:
    """Parameters of the multi-level model.

    Attributes
    ----------
    mu_kernel : KernelSpec
        Kernel of the common mean process.
    eta_kernel : KernelSpec
        Kernel of the subject-specific deviation processes.
    noise_sd : float
        Standard deviation of the additive Gaussian measurement noise.
    """

    mu_kernel: KernelSpec
    eta_kernel: KernelSpec
    noise_sd: float

    def __post_init__(self):
        object.__setattr__(self, "noise_sd", float(self.noise_sd))
        # zero noise is only meaningful for degenerate simulations
        if not (self.noise_sd >= 0.0 and math.isfinite(self.noise_sd)):
            raise InvalidInput(f"noise_sd must be finite and >= 0, got {self.noise_sd}")

    # order used by the sampler and the chain CSV
    PARAM_NAMES = ("mu_variance", "mu_lengthscale", "eta_variance", "eta_lengthscale", "noise_sd")

    def to_vector(self) -> np.ndarray:
        return np.array([
            self.mu_kernel.variance,
            self.mu_kernel.lengthscale,
            self.eta_kernel.variance,
            self.eta_kernel.lengthscale,
            self.noise_sd,
        ])

    @classmethod
    def from_vector(cls, x, mu_family=SQUARED_EXPONENTIAL, eta_family=SQUARED_EXPONENTIAL) -> HyperParams:
        x = np.asarray(x, dtype=float)
        return cls(
            KernelSpec(mu_family, x[0], x[1]),
            KernelSpec(eta_family, x[2], x[3]),
            x[4],
        )

    def to_dict(self) -> dict:
        return {
            "mu": self.mu_kernel.to_dict(),
            "eta": self.eta_kernel.to_dict(),
            "noise_sd": self.noise_sd,
        }

    @classmethod
    def from_dict(cls, d) -> HyperParams:
        return cls(KernelSpec.from_dict(d["mu"]), KernelSpec.from_dict(d["eta"]), d["noise_sd"])


def eval_kernel(spec: KernelSpec, s: float, t: float) -> float:
    """Evaluate ``spec`` at the pair of time points ``(s, t)``."""
    r = abs(float(s) - float(t))
    if spec.family == SQUARED_EXPONENTIAL:
        return spec.variance * math.exp(-0.5 * (r / spec.lengthscale) ** 2)
    a = math.sqrt(3.0) * r / spec.lengthscale
    return spec.variance * (1.0 + a) * math.exp(-a)


def gram(spec: KernelSpec, s, t) -> np.ndarray:
    """Cross-covariance matrix ``K(s, t)`` with entry ``(i, j) = k(s_i, t_j)``."""
    s = np.asarray(s, dtype=float).reshape(-1)
    t = np.asarray(t, dtype=float).reshape(-1)
    if s.size == 0 or t.size == 0:
        raise InvalidInput("gram requires nonempty inputs")
    # |s_i - t_j| is bitwise symmetric in (s, t), so gram(s, t) == gram(t, s).T exactly
    r = np.abs(s[:, None] - t[None, :])
    if spec.family == SQUARED_EXPONENTIAL:
        r /= spec.lengthscale
        np.square(r, out=r)
        r *= -0.5
        np.exp(r, out=r)
        r *= spec.variance
        return r
    r *= math.sqrt(3.0) / spec.lengthscale
    out = np.exp(-r)
    r += 1.0
    out *= r
    out *= spec.variance
    return out
