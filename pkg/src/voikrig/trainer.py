"""Adaptive training of shared response surrogates for grouped limit states.

One Kriging model per group of limit states with comparable event
probabilities; within a group the model is trained concurrently against
every member threshold. Each iteration refits the surrogate, bounds the
failure-count error per unconverged member, and adds the candidate with
the smallest threshold margin per active member. After all members meet
the error threshold, a coefficient-of-variation check decides whether the
candidate pool itself is large enough; if not, the pool is enriched with
fresh samples and training resumes. Completed groups pass their training
points to the next group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import DistributionSpec, lhs_sample
from .error_control import LimitState, StoppingReport, failure_prob_cov, max_error_rate, threshold_margins
from . import kriging
from .streams import stream


class TrainerError(Exception):
    pass


class PoolExhaustedError(TrainerError):
    """Every candidate is already in the training set."""


class TrainingBudgetError(TrainerError):
    """Iteration or enrichment cap exceeded; carries the partial log."""

    def __init__(self, message: str, log: "TrainingLog | None" = None):
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class LimitStateGroup:
    members: tuple[LimitState, ...]
    priority: int  # 0 = trained first (smallest pilot event probability)

    def __post_init__(self):
        if not self.members:
            raise ValueError("a limit-state group must be nonempty")
        object.__setattr__(self, "members", tuple(self.members))


def group_limit_states(states, pilot_pfs, ratio_threshold: float):
    """Partition limit states by pilot failure-probability proximity.

    States whose pairwise pilot-probability ratio is at most
    ``ratio_threshold`` share a group (transitive closure). Groups are
    ordered by ascending minimum pilot probability: rare events train
    first, so their points seed the easier groups.
    """
    states = tuple(states)
    pfs = [float(p) for p in pilot_pfs]
    if len(pfs) != len(states):
        raise ValueError("pilot_pfs length must match states")
    if any(not (0.0 < p <= 1.0) for p in pfs):
        raise ValueError("pilot probabilities must lie in (0, 1]")
    if ratio_threshold < 1.0:
        raise ValueError("ratio_threshold must be >= 1")
    n = len(states)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            hi, lo = max(pfs[i], pfs[j]), min(pfs[i], pfs[j])
            if hi / lo <= ratio_threshold:
                parent[find(i)] = find(j)
    buckets: dict[int, list[int]] = {}
    for i in range(n):
        buckets.setdefault(find(i), []).append(i)
    ordered = sorted(buckets.values(), key=lambda idx: min(pfs[i] for i in idx))
    return [
        LimitStateGroup(members=tuple(states[i] for i in idx), priority=rank)
        for rank, idx in enumerate(ordered)
    ]


def select_next_points(margins_per_member, active, exclude_per_member, selection="per_member"):
    """Pool indices to evaluate next: the margin argmin per active member.

    ``margins_per_member`` holds one margin array per member over the
    candidate pool; ``exclude_per_member`` the per-member sets of indices
    already in the training set. Duplicate picks collapse; ties break to
    the lowest index. ``selection="single_best"`` returns only the single
    candidate with the smallest margin across active members.
    """
    picks: list[tuple[float, int, int]] = []  # (margin, index, member order)
    for mi, (margins, act) in enumerate(zip(margins_per_member, active)):
        if not act:
            continue
        margins = np.asarray(margins, dtype=float)
        excl = exclude_per_member[mi]
        best_idx, best_val = -1, math.inf
        for idx in np.argsort(margins, kind="stable"):
            if int(idx) not in excl:
                best_idx, best_val = int(idx), float(margins[idx])
                break
        if best_idx < 0:
            raise PoolExhaustedError("all candidates already trained")
        picks.append((best_val, best_idx, mi))
    if not picks:
        raise ValueError("at least one member must be active")
    if selection == "single_best":
        picks.sort(key=lambda t: (t[0], t[2]))
        picks = picks[:1]
    elif selection != "per_member":
        raise ValueError(f"unknown selection mode: {selection!r}")
    return sorted({idx for _, idx, _ in picks})


class CandidatePool:
    """LHS candidate pool with lazily materialized per-transform views."""

    def __init__(self, dists, n, seed, group_index, upgrade_dist=None, upgrade_cols=()):
        self.dists = tuple(dists)
        self.seed = int(seed)
        self.group_index = int(group_index)
        self.upgrade_dist = upgrade_dist
        self.upgrade_cols = tuple(upgrade_cols)
        self._draws = 0
        self.base = lhs_sample(self.dists, n, seed, "pool", self._stream_index()).values
        self.a_add = self._draw_upgrade(n)
        self._views: dict[str, np.ndarray] = {}

    def _stream_index(self) -> int:
        return self.group_index * 64 + self._draws

    def _draw_upgrade(self, n):
        if self.upgrade_dist is None:
            return None
        rng = stream(self.seed, "upgrade_area", self._stream_index())
        return self.upgrade_dist.quantile(rng.uniform(size=n))

    @property
    def n(self) -> int:
        return self.base.shape[0]

    def view(self, transform: str) -> np.ndarray:
        if transform == "identity":
            return self.base
        if transform != "imperfect_upgrade":
            raise ValueError(f"unknown transform: {transform!r}")
        if self.upgrade_dist is None:
            raise TrainerError("pool has no upgrade variable for the transformed view")
        cached = self._views.get(transform)
        if cached is None:
            cached = self.base.copy()
            for col in self.upgrade_cols:
                cached[:, col] += self.a_add
            self._views[transform] = cached
        return cached

    def enrich(self, k: int) -> None:
        self._draws += 1
        extra = lhs_sample(self.dists, k, self.seed, "pool", self._stream_index()).values
        if self.upgrade_dist is not None:
            self.a_add = np.concatenate([self.a_add, self._draw_upgrade(k)])
        self.base = np.vstack([self.base, extra])
        self._views.clear()

    def stats(self):
        return self.base.mean(axis=0), self.base.std(axis=0)


@dataclass
class IterationRecord:
    iteration: int
    pool_size: int
    truth_evals: int
    reports: dict
    active: dict
    added_rows: list


@dataclass
class TrainingLog:
    group: tuple
    iterations: list = field(default_factory=list)
    enrichments: int = 0
    added_points: int = 0
    initial_points: int = 0
    converged: bool = False

    def trace_rows(self):
        """Flat rows (iteration, member, eps_max, p_hat_f, cov, pool, point)."""
        rows = []
        for rec in self.iterations:
            for name, rep in rec.reports.items():
                rows.append(
                    {
                        "iteration": rec.iteration,
                        "member": name,
                        "eps_max": rep.eps_max,
                        "p_hat_f": rep.p_hat_f,
                        "cov_pf": rep.cov_pf,
                        "pool_size": rec.pool_size,
                        "active": int(rec.active.get(name, False)),
                        "added_rows": rec.added_rows,
                    }
                )
        return rows


@dataclass
class TrainerConfig:
    eps_thr: float = 0.05
    alpha: float = 0.05
    cov_thr: float = 0.05
    n_initial: int = 12
    pool_sizes: tuple = (100000, 10000)  # by group training order; last repeats
    n_delta: int = 100000
    max_added: int = 600
    max_enrichments: int = 8
    selection: str = "per_member"
    sharing: str = "shared_model"  # shared_model | share_all | share_k | separate
    share_k: int = 50
    ratio_threshold: float = 3.0
    pilot_pfs: tuple | None = None


@dataclass
class SurrogateProblem:
    """Inputs, limit states, and the expensive truth model to substitute."""

    dists: tuple
    limit_states: tuple
    truth: object  # callable: (n, d) array -> (n,) responses
    upgrade_dist: DistributionSpec | None = None
    upgrade_cols: tuple = ()


class _TruthOracle:
    """Caching wrapper: every distinct input row is evaluated exactly once."""

    def __init__(self, fn):
        self._fn = fn
        self._cache: dict[bytes, float] = {}
        self.calls = 0

    def evaluate(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        out = np.empty(rows.shape[0])
        missing, missing_at = [], []
        for i, row in enumerate(rows):
            key = row.tobytes()
            if key in self._cache:
                out[i] = self._cache[key]
            else:
                missing.append(row)
                missing_at.append(i)
        if missing:
            vals = np.asarray(self._fn(np.array(missing)), dtype=float).ravel()
            self.calls += len(missing)
            for i, row, v in zip(missing_at, missing, vals):
                self._cache[row.tobytes()] = float(v)
                out[i] = v
        return out


def _fit_options(pool: CandidatePool, warm_theta):
    return kriging.KrigingOptions(input_stats=pool.stats(), warm_theta=warm_theta)


def train_group(group, pool, training, truth, cfg, log=None):
    """Adaptive shared-model training loop for one group.

    Mutates ``training`` in place (points accumulate for the next group)
    and returns (model, log). Raises TrainingBudgetError with the partial
    log when the added-point or enrichment cap is hit.
    """
    members = group.members
    views = {m.input_transform for m in members}
    log = log or TrainingLog(group=tuple(m.name for m in members))
    log.initial_points = training.m
    ei = {m.name: True for m in members}
    reports: dict[str, StoppingReport] = {}
    used: dict[str, set[int]] = {v: set() for v in views}
    model = None
    warm = None
    iteration = 0
    while True:
        iteration += 1
        if model is None:
            model = kriging.fit(training, _fit_options(pool, warm))
            warm = model.theta
        preds = {v: kriging.predict(model, pool.view(v)) for v in views}
        for m in members:
            if ei[m.name]:
                rep = max_error_rate(preds[m.input_transform], m.res_critical, cfg.alpha)
                reports[m.name] = StoppingReport(
                    limit_state=m.name,
                    n_hat_f=rep.n_hat_f,
                    s_f_upper=rep.s_f_upper,
                    s_s_upper=rep.s_s_upper,
                    eps_max=rep.eps_max,
                    p_hat_f=rep.p_hat_f,
                    cov_pf=rep.cov_pf,
                    alpha=rep.alpha,
                    pool_size=rep.pool_size,
                )
                ei[m.name] = not (rep.eps_max <= cfg.eps_thr)
        record = IterationRecord(
            iteration=iteration,
            pool_size=pool.n,
            truth_evals=truth.calls,
            reports=dict(reports),
            active=dict(ei),
            added_rows=[],
        )
        log.iterations.append(record)
        if not any(ei.values()):
            # pool-sufficiency check on the converged surrogate
            failed = []
            for m in members:
                mean = preds[m.input_transform].mean
                p_hat = float(np.count_nonzero(mean >= m.res_critical)) / pool.n
                cov = failure_prob_cov(p_hat, pool.n) if p_hat > 0.0 else math.inf
                reports[m.name] = StoppingReport(
                    limit_state=m.name,
                    n_hat_f=int(round(p_hat * pool.n)),
                    s_f_upper=reports[m.name].s_f_upper,
                    s_s_upper=reports[m.name].s_s_upper,
                    eps_max=reports[m.name].eps_max,
                    p_hat_f=p_hat,
                    cov_pf=cov,
                    alpha=cfg.alpha,
                    pool_size=pool.n,
                )
                if not (cov <= cfg.cov_thr):
                    failed.append(m.name)
            record.reports = dict(reports)
            if not failed:
                log.converged = True
                log.added_points = training.m - log.initial_points
                return model, log
            if log.enrichments >= cfg.max_enrichments:
                raise TrainingBudgetError(
                    f"pool enrichment cap hit; members still failing COV: {failed}",
                    log,
                )
            pool.enrich(cfg.n_delta)
            log.enrichments += 1
            for name in failed:
                ei[name] = True
            continue
        # one new point per active member, duplicates collapsed per view
        picks_by_view: dict[str, list[int]] = {}
        for v in views:
            member_idx = [i for i, m in enumerate(members) if m.input_transform == v]
            margins = [
                threshold_margins(preds[v], members[i].res_critical) for i in member_idx
            ]
            act = [ei[members[i].name] for i in member_idx]
            if not any(act):
                continue
            picks_by_view[v] = select_next_points(
                margins, act, [used[v]] * len(member_idx), cfg.selection
            )
        if cfg.selection == "single_best":
            # keep only the globally best pick across views
            best = None
            for v, idxs in picks_by_view.items():
                for idx in idxs:
                    mvals = [
                        threshold_margins(preds[v], m.res_critical)[idx]
                        for m in members
                        if m.input_transform == v and ei[m.name]
                    ]
                    val = min(mvals)
                    if best is None or val < best[0]:
                        best = (val, v, idx)
            picks_by_view = {best[1]: [best[2]]}
        for v, idxs in picks_by_view.items():
            rows = pool.view(v)[idxs]
            ys = truth.evaluate(rows)
            for idx, row, y in zip(idxs, rows, ys):
                used[v].add(idx)
                if not training.contains(row):
                    training.add(row, y)
                    record.added_rows.append(row.tolist())
        log.added_points = training.m - log.initial_points
        if log.added_points > cfg.max_added:
            raise TrainingBudgetError("added-point cap exceeded", log)
        model = None


@dataclass
class FrameworkResult:
    groups: list
    models: list
    logs: list
    final_model: object
    pf_by_state: dict
    truth_evals: int
    training_size: int
    seed: int


def _pilot_failure_probs(problem, cfg, seed):
    """12-point pilot fit for grouping when no pilot probabilities are given."""
    pool = CandidatePool(
        problem.dists, min(cfg.pool_sizes[-1], 10000), seed, group_index=63,
        upgrade_dist=problem.upgrade_dist, upgrade_cols=problem.upgrade_cols,
    )
    rng = stream(seed, "pilot")
    idx = rng.choice(pool.n, size=min(cfg.n_initial, pool.n), replace=False)
    rows = pool.base[np.sort(idx)]
    training = kriging.TrainingSet(rows, problem.truth(rows))
    model = kriging.fit(training, _fit_options(pool, None))
    pfs = []
    for state in problem.limit_states:
        mean = kriging.predict(model, pool.view(state.input_transform)).mean
        p = float(np.count_nonzero(mean >= state.res_critical)) / pool.n
        pfs.append(min(max(p, 1.0 / pool.n), 1.0))
    return pfs


def run_framework(problem: SurrogateProblem, cfg: TrainerConfig, seed: int) -> FrameworkResult:
    """Full pipeline: group, train each group with point passing, report.

    The training set of each completed group seeds the next group per the
    sharing scheme; the final (largest) model is designated as the
    response surrogate for downstream decision analysis.
    """
    states = tuple(problem.limit_states)
    pilot = cfg.pilot_pfs if cfg.pilot_pfs is not None else _pilot_failure_probs(problem, cfg, seed)
    groups = group_limit_states(states, pilot, cfg.ratio_threshold)
    if cfg.sharing in ("separate", "share_k", "share_all"):
        pf_of = {s.name: p for s, p in zip(states, pilot)}
        singles = sorted(states, key=lambda s: pf_of[s.name])
        groups = [LimitStateGroup(members=(s,), priority=i) for i, s in enumerate(singles)]
    elif cfg.sharing != "shared_model":
        raise ValueError(f"unknown sharing scheme: {cfg.sharing!r}")

    truth = _TruthOracle(problem.truth)
    models, logs = [], []
    accumulated: list[tuple[np.ndarray, float]] = []  # chronological points
    pf_by_state: dict[str, float] = {}
    for gi, group in enumerate(groups):
        size = cfg.pool_sizes[min(gi, len(cfg.pool_sizes) - 1)]
        pool = CandidatePool(
            problem.dists, size, seed, group_index=gi,
            upgrade_dist=problem.upgrade_dist, upgrade_cols=problem.upgrade_cols,
        )
        training = kriging.TrainingSet()
        if gi == 0 or cfg.sharing == "separate":
            rng = stream(seed, "initial_points", gi)
            idx = np.sort(rng.choice(pool.n, size=cfg.n_initial, replace=False))
            view = pool.view(group.members[0].input_transform)
            rows = view[idx]
            for row, y in zip(rows, truth.evaluate(rows)):
                training.add(row, y)
        else:
            carry = accumulated
            if cfg.sharing == "share_k":
                carry = accumulated[: cfg.share_k]
            for row, y in carry:
                training.add(row, y)
        model, log = train_group(group, pool, training, truth, cfg)
        models.append(model)
        logs.append(log)
        accumulated = [
            (r.copy(), y) for r, y in zip(training.inputs, training.outputs)
        ]
        preds = {
            v: kriging.predict(model, pool.view(v))
            for v in {m.input_transform for m in group.members}
        }
        for m in group.members:
            mean = preds[m.input_transform].mean
            pf_by_state[m.name] = float(np.count_nonzero(mean >= m.res_critical)) / pool.n
    return FrameworkResult(
        groups=groups,
        models=models,
        logs=logs,
        final_model=models[-1],
        pf_by_state=pf_by_state,
        truth_evals=truth.calls,
        training_size=models[-1].training.m,
        seed=int(seed),
    )
