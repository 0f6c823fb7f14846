"""Error-rate stopping machinery for surrogate failure-probability estimates.

Candidates whose predicted response sits close to the decision threshold
relative to the predictive sd may have their failure/safe sign estimated
wrongly. The number of wrong signs inside each predicted domain is a
Poisson-binomial variable; its upper quantiles bound the relative error of
the failure-probability estimate, and training stops once that bound
drops below a threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .poisson_binomial import PoissonBinomial, pb_inverse_cdf


@dataclass(frozen=True)
class LimitState:
    """Critical response threshold plus the input view it is checked on.

    ``input_transform`` is "identity" (evaluate on the sampled inputs) or
    "imperfect_upgrade" (evaluate on inputs with the reinforcement plate
    area added to both cross-section variables; same input dimension).
    """

    name: str
    res_critical: float
    input_transform: str = "identity"

    def __post_init__(self):
        if not math.isfinite(self.res_critical):
            raise ValueError("res_critical must be finite")
        if self.input_transform not in ("identity", "imperfect_upgrade"):
            raise ValueError(f"unknown input transform: {self.input_transform!r}")


@dataclass(frozen=True)
class StoppingReport:
    """Error-bound snapshot for one limit state over one candidate pool."""

    limit_state: str
    n_hat_f: int
    s_f_upper: int
    s_s_upper: int
    eps_max: float
    p_hat_f: float
    cov_pf: float
    alpha: float
    pool_size: int


def threshold_margin(pred, res_critical: float) -> float:
    """|threshold - predicted mean| / predicted sd for a single prediction.

    Small values mark candidates whose failure/safe sign is uncertain.
    Returns +inf when sd = 0 and the mean is off the threshold; 0 when
    both differences vanish.
    """
    diff = abs(res_critical - pred.mean)
    if pred.sd == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / pred.sd


def threshold_margins(preds, res_critical: float) -> np.ndarray:
    """Vectorized threshold_margin over a prediction batch."""
    mean = np.asarray(preds.mean, dtype=float)
    sd = np.asarray(preds.sd, dtype=float)
    diff = np.abs(res_critical - mean)
    out = np.full(mean.shape, math.inf)
    np.divide(diff, sd, out=out, where=sd > 0.0)
    out[(sd == 0.0) & (diff == 0.0)] = 0.0
    return out


def wrong_sign_probs(preds, res_critical: float) -> np.ndarray:
    """Per-candidate probability of a wrongly estimated sign, Phi(-margin)."""
    margins = threshold_margins(preds, res_critical)
    if margins.size == 0:
        raise ValueError("prediction sequence must be nonempty")
    finite = np.isfinite(margins)
    out = np.zeros(margins.shape)
    out[finite] = norm.sf(margins[finite])
    return out


def max_error_rate(preds, res_critical: float, alpha: float = 0.05) -> StoppingReport:
    """Bound the relative error of the pool failure count at confidence alpha.

    The pool splits into predicted-failure (mean >= threshold, ties count
    as failure) and predicted-safe candidates. Wrong-sign counts in each
    part follow Poisson-binomial laws built from the per-candidate
    wrong-sign probabilities; the (1 - alpha/2) quantiles of those laws
    give the worst-case failure-count window and hence the error bound.
    Returns +inf bounds when no failures are predicted or when the window
    reaches zero (the bound is uninformative, so training continues).
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie strictly inside (0, 1)")
    mean = np.asarray(preds.mean, dtype=float)
    n = mean.size
    if n == 0:
        raise ValueError("prediction sequence must be nonempty")
    pwse = wrong_sign_probs(preds, res_critical)
    fail = mean >= res_critical
    n_hat_f = int(np.count_nonzero(fail))
    q = 1.0 - alpha / 2.0
    s_f_upper = pb_inverse_cdf(PoissonBinomial(pwse[fail]), q)
    s_s_upper = pb_inverse_cdf(PoissonBinomial(pwse[~fail]), q)
    if n_hat_f == 0 or n_hat_f - s_f_upper <= 0:
        eps_max = math.inf
    else:
        eps_max = max(
            abs(n_hat_f / (n_hat_f - s_f_upper) - 1.0),
            abs(n_hat_f / (n_hat_f + s_s_upper) - 1.0),
        )
    p_hat_f = n_hat_f / n
    return StoppingReport(
        limit_state="",
        n_hat_f=n_hat_f,
        s_f_upper=s_f_upper,
        s_s_upper=s_s_upper,
        eps_max=eps_max,
        p_hat_f=p_hat_f,
        cov_pf=failure_prob_cov(p_hat_f, n),
        alpha=alpha,
        pool_size=n,
    )


def failure_prob_cov(p_hat_f: float, pool_size: int) -> float:
    """Coefficient of variation of a Monte Carlo failure-probability estimate.

    Returns +inf for p_hat_f = 0, which forces pool enrichment downstream.
    """
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    if not (0.0 <= p_hat_f <= 1.0):
        raise ValueError("p_hat_f must lie in [0, 1]")
    if p_hat_f == 0.0:
        return math.inf
    return math.sqrt((1.0 - p_hat_f) / (p_hat_f * pool_size))
