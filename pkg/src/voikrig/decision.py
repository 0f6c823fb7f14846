"""Bayesian decision analysis: event algebra, prior/posterior optimization,
likelihood weighting, and the Monte Carlo value-of-information estimator.

The bridge decision distinguishes six mutually exclusive events built from
four limit-state signs (serviceability/structural thresholds, before and
after an imperfect upgrade), three actions (do nothing, full
rehabilitation, imperfect upgrade), and an event-by-action cost matrix.
The value of a measurement is the expected drop in the optimal expected
cost once the posterior (likelihood-reweighted) event probabilities are
used for the decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .streams import stream
from .truss import N_LOADS, with_added_area

EVENTS = ("E1", "E2", "E3", "E4", "E5", "E6")
ACTIONS = ("a0", "a_per", "a_imp")


class DecisionError(Exception):
    pass


class EventClassificationError(DecisionError):
    """A limit-state tuple violates the threshold-order consistency."""


def cost_matrix_derived(c_fser: float, c_fstr: float, c_rper: float, c_rimp: float) -> np.ndarray:
    """Event x action costs consistent with the event definitions.

    Doing nothing pays the plain failure consequence of the realized
    (un-upgraded) state; rehabilitation always pays its fixed cost; the
    imperfect upgrade pays its cost plus the consequence of the upgraded
    state still failing.
    """
    f, s, r, i = c_fser, c_fstr, c_rper, c_rimp
    return np.array(
        [
            [0.0, r, i],
            [f, r, i],
            [f, r, i + f],
            [s, r, i],
            [s, r, i + f],
            [s, r, i + s],
        ]
    )


def cost_matrix_table2_as_printed(c_fser: float, c_fstr: float, c_rper: float, c_rimp: float) -> np.ndarray:
    """Alternative preset mirroring the published cost table layout."""
    f, s, r, i = c_fser, c_fstr, c_rper, c_rimp
    return np.array(
        [
            [0.0, r, i],
            [f, r, i],
            [f, r, i + f],
            [f, r, i],
            [f, r, i + s],
            [f, r, i + s],
        ]
    )


@dataclass(frozen=True)
class DecisionProblem:
    """Six-event, three-action decision with its cost matrix and limit states."""

    cost_matrix: np.ndarray  # (6, 3)
    limit_states: tuple  # ordered (ser, str, ser_upgraded, str_upgraded)
    events: tuple = EVENTS
    actions: tuple = ACTIONS

    def __post_init__(self):
        c = np.asarray(self.cost_matrix, dtype=float)
        if c.shape != (len(self.events), len(self.actions)):
            raise DecisionError(
                f"cost matrix must be {len(self.events)}x{len(self.actions)}"
            )
        if np.any(c < 0.0) or not np.all(np.isfinite(c)):
            raise DecisionError("costs must be nonnegative and finite")
        c.setflags(write=False)
        object.__setattr__(self, "cost_matrix", c)


def event_indicators(g: np.ndarray) -> np.ndarray:
    """(n, 6) one-hot event membership from (n, 4) limit-state values.

    Columns of ``g`` are (g_ser, g_str, g_ser_up, g_str_up); g <= 0 means
    the state has occurred (ties count as occurrence). Raises
    EventClassificationError if the threshold order is violated or any
    row matches no event.
    """
    g = np.atleast_2d(np.asarray(g, dtype=float))
    if g.shape[1] != 4:
        raise DecisionError("expected four limit-state values per row")
    if np.any(g[:, 1] < g[:, 0]) or np.any(g[:, 3] < g[:, 2]):
        raise EventClassificationError("threshold order violated (g_str < g_ser)")
    ser, stru, ser_u, str_u = (g[:, k] for k in range(4))
    ok_ser, ok_str = ser > 0.0, stru > 0.0
    ok_ser_u, ok_str_u = ser_u > 0.0, str_u > 0.0
    ind = np.empty((g.shape[0], 6), dtype=bool)
    ind[:, 0] = ok_ser
    ind[:, 1] = ~ok_ser & ok_str & ok_ser_u
    ind[:, 2] = ~ok_ser & ok_str & ~ok_ser_u & ok_str_u
    ind[:, 3] = ~ok_str & ok_ser_u
    ind[:, 4] = ~ok_str & ~ok_ser_u & ok_str_u
    ind[:, 5] = ~ok_str & ~ok_str_u
    counts = ind.sum(axis=1)
    if np.any(counts != 1):
        raise EventClassificationError(
            "limit-state tuple matches no unique event (inconsistent signs)"
        )
    return ind


def classify_event(g4) -> str:
    """Event label for one (g_ser, g_str, g_ser_up, g_str_up) tuple."""
    ind = event_indicators(np.asarray(g4, dtype=float)[None, :])
    return EVENTS[int(np.argmax(ind[0]))]


def _check_probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float).ravel()
    if p.size != len(EVENTS):
        raise DecisionError(f"expected {len(EVENTS)} event probabilities")
    if np.any(p < 0.0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise DecisionError("event probabilities must be nonnegative and sum to 1")
    return p


def prior_decision(event_probs, cost_matrix) -> tuple[str, float]:
    """Action minimizing expected cost, with that cost; ties break in
    action declaration order."""
    p = _check_probs(event_probs)
    c = np.asarray(cost_matrix, dtype=float)
    expected = p @ c
    a = int(np.argmin(expected))
    return ACTIONS[a], float(expected[a])


def vopi(event_probs, cost_matrix) -> float:
    """Upper bound on any measurement's value: expected gain from learning
    the realized event exactly before acting."""
    p = _check_probs(event_probs)
    c = np.asarray(cost_matrix, dtype=float)
    c_prior = float(np.min(p @ c))
    c_perfect = float(p @ c.min(axis=1))
    return c_prior - c_perfect


def likelihood_weights(y: float, res_prime, sigma_eps: float) -> np.ndarray:
    """Normal measurement likelihood of each prior sample given outcome y."""
    if not (sigma_eps > 0.0):
        raise DecisionError("sigma_eps must be positive")
    res_prime = np.asarray(res_prime, dtype=float)
    return norm.pdf(y - res_prime, scale=sigma_eps)


def posterior_event_probs(weights, indicators) -> np.ndarray:
    """Likelihood-weighted event probabilities; rows of ``indicators`` are
    one-hot event memberships of the prior samples."""
    w = np.asarray(weights, dtype=float).ravel()
    ind = np.asarray(indicators)
    total = float(w.sum())
    if not (total > 0.0):
        raise DecisionError("total likelihood weight is zero")
    return (w @ ind) / total


@dataclass(frozen=True)
class MeasurementPlan:
    """Load test: fixed applied loads, measurement noise sd, outcome count."""

    test_loads: tuple
    sigma_eps: float
    n_sy: int

    def __post_init__(self):
        loads = tuple(float(v) for v in self.test_loads)
        if len(loads) != N_LOADS:
            raise DecisionError(f"exactly {N_LOADS} test loads are required")
        if not (self.sigma_eps > 0.0):
            raise DecisionError("sigma_eps must be positive")
        if self.n_sy < 1:
            raise DecisionError("n_sy must be >= 1")
        object.__setattr__(self, "test_loads", loads)


@dataclass(frozen=True)
class VoiPool:
    """Prior Monte Carlo samples plus their upgrade-area realizations."""

    inputs: np.ndarray  # (n, 10)
    a_add: np.ndarray  # (n,)

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        a = np.asarray(self.a_add, dtype=float).ravel()
        if x.shape[0] != a.size:
            raise DecisionError("a_add length must match the sample count")
        x.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "a_add", a)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class VoiResult:
    c_prior: float
    a_opt_prior: str
    vopi: float
    voi: float  # clamped at 0
    voi_raw: float
    voi_mc_stderr: float
    n_mcs: int
    n_sy: int
    seed: int
    event_probs: tuple
    degenerate_outcomes: int
    valid: bool


def estimate_voi(
    problem: DecisionProblem,
    response,
    plan: MeasurementPlan,
    pool: VoiPool,
    seed: int,
    diagnostics: bool = False,
    outcome_chunk: int = 200,
):
    """Monte Carlo VoI of the load-test measurement.

    ``response`` maps (n, 10) physical inputs to responses (surrogate mean
    or the true model). Precomputes per-sample test responses and event
    memberships once; each simulated outcome reweights the prior pool by
    its measurement likelihood, re-optimizes the action, and the average
    posterior-optimal cost against the prior cost gives the VoI.
    Outcomes whose weights all underflow are excluded and counted;
    above 10% of them flags the run invalid.
    """
    x = pool.inputs
    n = pool.n
    thresholds = [s.res_critical for s in problem.limit_states]
    res_base = np.asarray(response(x), dtype=float)
    res_up = np.asarray(response(with_added_area(x, pool.a_add)), dtype=float)
    x_test = x.copy()
    x_test[:, :N_LOADS] = plan.test_loads
    res_test = np.asarray(response(x_test), dtype=float)
    g = np.column_stack(
        [
            thresholds[0] - res_base,
            thresholds[1] - res_base,
            thresholds[2] - res_up,
            thresholds[3] - res_up,
        ]
    )
    ind = event_indicators(g)
    prior = ind.mean(axis=0)
    a_opt, c_prior = prior_decision(prior, problem.cost_matrix)
    vopi_val = vopi(prior, problem.cost_matrix)

    anchors = stream(seed, "voi_outcomes").permutation(n)
    anchors = anchors[np.arange(plan.n_sy) % n]
    noise = stream(seed, "measurement_noise").normal(0.0, plan.sigma_eps, plan.n_sy)
    ys = res_test[anchors] + noise

    ind_f = ind.astype(float)
    cost = np.asarray(problem.cost_matrix, dtype=float)
    min_costs = np.empty(plan.n_sy)
    valid_mask = np.ones(plan.n_sy, dtype=bool)
    diag_rows = [] if diagnostics else None
    inv_two_s2 = 0.5 / plan.sigma_eps**2
    for a in range(0, plan.n_sy, outcome_chunk):
        b = min(a + outcome_chunk, plan.n_sy)
        d = ys[a:b, None] - res_test[None, :]
        w = np.exp(-inv_two_s2 * d * d)  # pdf constant cancels in the ratio
        totals = w.sum(axis=1)
        ok = totals > 0.0
        valid_mask[a:b] = ok
        post = np.zeros((b - a, len(EVENTS)))
        post[ok] = (w[ok] @ ind_f) / totals[ok, None]
        expected = post @ cost
        min_costs[a:b] = expected.min(axis=1)
        if diagnostics:
            choice = expected.argmin(axis=1)
            for j in range(b - a):
                diag_rows.append(
                    {
                        "outcome": a + j,
                        "y": float(ys[a + j]),
                        "posterior": post[j].tolist(),
                        "action": ACTIONS[int(choice[j])],
                        "cost": float(min_costs[a + j]),
                        "valid": bool(ok[j]),
                    }
                )
    n_bad = int(np.count_nonzero(~valid_mask))
    kept = min_costs[valid_mask]
    if kept.size == 0:
        raise DecisionError("every simulated outcome degenerated to zero weight")
    voi_raw = c_prior - float(kept.mean())
    stderr = float(kept.std(ddof=1) / math.sqrt(kept.size)) if kept.size > 1 else 0.0
    result = VoiResult(
        c_prior=c_prior,
        a_opt_prior=a_opt,
        vopi=vopi_val,
        voi=max(voi_raw, 0.0),
        voi_raw=voi_raw,
        voi_mc_stderr=stderr,
        n_mcs=n,
        n_sy=plan.n_sy,
        seed=int(seed),
        event_probs=tuple(float(p) for p in prior),
        degenerate_outcomes=n_bad,
        valid=n_bad <= 0.10 * plan.n_sy,
    )
    if diagnostics:
        return result, diag_rows
    return result


def draw_voi_pool(dists, upgrade_dist, n: int, seed: int) -> VoiPool:
    """Fresh prior pool for VoI with its own upgrade-area stream."""
    from .distributions import lhs_sample

    x = lhs_sample(dists, n, seed, "voi_pool").values
    rng = stream(seed, "upgrade_area", 1023)
    a_add = upgrade_dist.quantile(rng.uniform(size=n))
    return VoiPool(inputs=x, a_add=a_add)
