"""Moment-parameterized marginal distributions and Latin Hypercube sampling.

Marginals are specified by their physical mean and standard deviation
(the convention used throughout the bridge example) and converted to the
native parameters of each family:

* normal:     location = mean, scale = sd
* lognormal:  sigma^2 = ln(1 + sd^2/mean^2), mu = ln(mean) - sigma^2/2
* gumbel:     max-type; scale = sd*sqrt(6)/pi, location = mean - gamma*scale

scipy.stats provides pdf/cdf/ppf behind these conversions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .streams import stream

EULER_GAMMA = float(np.euler_gamma)

_KINDS = ("normal", "lognormal", "gumbel")


@dataclass(frozen=True)
class DistributionSpec:
    """One marginal: family kind plus physical moments and native parameters."""

    kind: str
    mean: float
    sd: float
    loc: float  # normal mean / lognormal mu / gumbel location
    scale: float  # normal sd / lognormal sigma / gumbel scale

    def _frozen(self):
        if self.kind == "normal":
            return stats.norm(loc=self.loc, scale=self.scale)
        if self.kind == "lognormal":
            return stats.lognorm(s=self.scale, scale=math.exp(self.loc))
        return stats.gumbel_r(loc=self.loc, scale=self.scale)

    def quantile(self, u):
        return quantile(self, u)

    def cdf(self, x):
        return self._frozen().cdf(x)

    def pdf(self, x):
        return self._frozen().pdf(x)

    def support_lower(self) -> float:
        return 0.0 if self.kind == "lognormal" else -math.inf


def make_distribution(kind: str, mean: float, sd: float) -> DistributionSpec:
    """Build a DistributionSpec from physical moments.

    Raises ValueError for nonpositive sd, or nonpositive mean with the
    lognormal family.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown distribution kind: {kind!r}")
    mean = float(mean)
    sd = float(sd)
    if not (sd > 0.0) or not math.isfinite(sd):
        raise ValueError(f"sd must be positive and finite, got {sd}")
    if not math.isfinite(mean):
        raise ValueError(f"mean must be finite, got {mean}")
    if kind == "normal":
        loc, scale = mean, sd
    elif kind == "lognormal":
        if mean <= 0.0:
            raise ValueError(f"lognormal mean must be positive, got {mean}")
        sigma2 = math.log1p((sd / mean) ** 2)
        scale = math.sqrt(sigma2)
        loc = math.log(mean) - sigma2 / 2.0
    else:  # gumbel, max-type
        scale = sd * math.sqrt(6.0) / math.pi
        loc = mean - EULER_GAMMA * scale
    return DistributionSpec(kind=kind, mean=mean, sd=sd, loc=loc, scale=scale)


def analytic_moments(dist: DistributionSpec) -> tuple[float, float]:
    """Recompute (mean, sd) from the native parameters; round-trip check."""
    if dist.kind == "normal":
        return dist.loc, dist.scale
    if dist.kind == "lognormal":
        m = math.exp(dist.loc + dist.scale**2 / 2.0)
        v = (math.exp(dist.scale**2) - 1.0) * math.exp(2.0 * dist.loc + dist.scale**2)
        return m, math.sqrt(v)
    m = dist.loc + EULER_GAMMA * dist.scale
    s = dist.scale * math.pi / math.sqrt(6.0)
    return m, s


def quantile(dist: DistributionSpec, u):
    """Inverse CDF at probability u in (0, 1). Vectorized over u."""
    arr = np.asarray(u, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("quantile argument must lie strictly inside (0, 1)")
    out = dist._frozen().ppf(arr)
    return float(out) if np.isscalar(u) or arr.ndim == 0 else out


@dataclass(frozen=True)
class SampleMatrix:
    """Dense (n_rows x n_cols) sample block in physical units, seed-tagged."""

    values: np.ndarray
    seed: int
    dists: tuple[DistributionSpec, ...] = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


def lhs_sample(
    dists,
    n: int,
    seed: int,
    purpose: str = "pool",
    index: int = 0,
) -> SampleMatrix:
    """Latin Hypercube sample: per column, one point uniform in each of n
    equiprobable strata, with independent stratum permutations per column.

    Deterministic given (seed, purpose, index).
    """
    dists = tuple(dists)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not dists:
        raise ValueError("at least one distribution is required")
    rng = stream(seed, purpose, index)
    cols = []
    for dist in dists:
        perm = rng.permutation(n)
        u = (perm + rng.uniform(size=n)) / n
        cols.append(quantile(dist, u))
    values = np.column_stack(cols)
    return SampleMatrix(values=values, seed=seed, dists=dists)
