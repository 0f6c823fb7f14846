"""Poisson binomial distribution: sum of independent non-identical Bernoulli trials.

Two evaluation schemes:

* exact O(n^2) dynamic-programming convolution of the per-trial pmfs, used
  up to ``EXACT_LIMIT`` trials;
* refined normal approximation with continuity correction and a skewness
  term beyond that, where the candidate pools (1e5+) make the exact scheme
  infeasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

EXACT_LIMIT = 1000


@dataclass(frozen=True)
class PoissonBinomial:
    """Distribution of the number of successes over fixed success probs."""

    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        if p.size and (np.any(p < 0.0) or np.any(p > 1.0) or np.any(~np.isfinite(p))):
            raise ValueError("trial probabilities must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n(self) -> int:
        return self.probs.size

    @property
    def mean(self) -> float:
        return float(np.sum(self.probs))

    @property
    def variance(self) -> float:
        return float(np.sum(self.probs * (1.0 - self.probs)))

    def pmf(self) -> np.ndarray:
        """Exact pmf over support 0..n via iterative convolution."""
        out = np.array([1.0])
        for p in self.probs:
            nxt = np.zeros(out.size + 1)
            nxt[:-1] = out * (1.0 - p)
            nxt[1:] += out * p
            out = nxt
        return out

    def cdf(self) -> np.ndarray:
        """Exact CDF over support 0..n; clipped nondecreasing, CDF(n) = 1."""
        c = np.minimum.accumulate(np.clip(np.cumsum(self.pmf()), 0.0, 1.0)[::-1])[::-1]
        c = np.maximum.accumulate(c)
        c[-1] = 1.0
        return c

    def cdf_approx(self, k) -> np.ndarray:
        """Refined normal approximation of CDF(k) with continuity correction.

        G(x) = Phi(x) + skew * (1 - x^2) * phi(x) / 6 evaluated at
        x = (k + 1/2 - mean) / sigma, clipped to [0, 1].
        """
        k = np.asarray(k, dtype=float)
        mu = self.mean
        var = self.variance
        if var <= 1e-12:
            # p_i effectively in {0,1}: all mass at k = mean
            return np.where(k >= mu - 0.5, 1.0, 0.0)
        sigma = np.sqrt(var)
        skew = float(np.sum(self.probs * (1.0 - self.probs) * (1.0 - 2.0 * self.probs)))
        skew /= sigma**3
        x = (k + 0.5 - mu) / sigma
        g = norm.cdf(x) + skew * (1.0 - x * x) * norm.pdf(x) / 6.0
        return np.clip(g, 0.0, 1.0)

    def inverse_cdf(self, q: float, method: str = "auto") -> int:
        return pb_inverse_cdf(self, q, method=method)


def pb_inverse_cdf(pb: PoissonBinomial, q: float, method: str = "auto") -> int:
    """Smallest integer k with CDF(k) >= q, for q in (0, 1).

    ``method`` is "exact", "approx", or "auto" (exact up to EXACT_LIMIT
    trials, approximate beyond).
    """
    if not (0.0 < q < 1.0):
        raise ValueError("q must lie strictly inside (0, 1)")
    if method not in ("auto", "exact", "approx"):
        raise ValueError(f"unknown method: {method!r}")
    n = pb.n
    if n == 0:
        return 0
    if method == "exact" or (method == "auto" and n <= EXACT_LIMIT):
        c = pb.cdf()
        return int(np.searchsorted(c, q - 1e-15 * max(1.0, abs(q)), side="left"))
    return _inverse_cdf_approx(pb, q)


def _inverse_cdf_approx(pb: PoissonBinomial, q: float) -> int:
    n = pb.n
    var = pb.variance
    if var <= 1e-12:
        return min(n, max(0, int(round(pb.mean))))
    # Start from the plain normal quantile, then scan locally; the refined
    # CDF is monotone away from the clipped tails, so the scan terminates
    # after a handful of steps.
    k = int(np.floor(pb.mean + np.sqrt(var) * norm.ppf(q)))
    k = min(max(k, 0), n)
    while k > 0 and pb.cdf_approx(k - 1) >= q:
        k -= 1
    while k < n and pb.cdf_approx(k) < q:
        k += 1
    return k
