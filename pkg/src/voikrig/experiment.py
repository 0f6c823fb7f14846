"""Experiment orchestration: repetition studies, the true-model oracle,
knowledge-sharing comparisons, measurement-noise calibration, persistence,
and bit-exact replay of recorded runs.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import kriging
from .config import RunConfig, validate
from .decision import VoiPool, draw_voi_pool, estimate_voi
from .trainer import run_framework
from .truss import midspan_deflection_many, with_added_area

FORMAT_VERSION = 1


class ExperimentError(Exception):
    pass


@dataclass
class RunRecord:
    """Full provenance of one experiment: config, per-repetition rows,
    aggregates recomputable from the rows."""

    kind: str  # surrogate | oracle | scheme_sweep | noise_calibration
    config: dict
    repetitions: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "config": self.config,
            "repetitions": self.repetitions,
            "aggregates": self.aggregates,
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        doc = json.loads(text)
        if doc.get("format_version") != FORMAT_VERSION:
            raise ExperimentError("unsupported record format version")
        return cls(
            kind=doc["kind"],
            config=doc["config"],
            repetitions=doc["repetitions"],
            aggregates=doc["aggregates"],
        )


def _voi_row(vr) -> dict:
    return {
        "c_prior": vr.c_prior,
        "a_opt_prior": vr.a_opt_prior,
        "vopi": vr.vopi,
        "voi": vr.voi,
        "voi_raw": vr.voi_raw,
        "voi_mc_stderr": vr.voi_mc_stderr,
        "n_mcs": vr.n_mcs,
        "n_sy": vr.n_sy,
        "event_probs": list(vr.event_probs),
        "degenerate_outcomes": vr.degenerate_outcomes,
        "valid": vr.valid,
    }


def run_single_repetition(cfg: RunConfig, seed: int, keep_model: bool = False) -> dict:
    """One framework run plus the surrogate VoI estimate for one seed."""
    problem = cfg.surrogate_problem()
    result = run_framework(problem, cfg.trainer_config(), seed)
    model = result.final_model

    def response(rows):
        return kriging.predict(model, rows).mean

    pool = draw_voi_pool(
        problem.dists, problem.upgrade_dist, int(cfg["voi"]["n_mcs"]), seed
    )
    vr = estimate_voi(cfg.decision_problem(), response, cfg.measurement_plan(), pool, seed)
    row = {
        "seed": int(seed),
        "truth_evals": result.truth_evals,
        "training_size": result.training_size,
        "added_per_group": [log.added_points for log in result.logs],
        "enrichments": [log.enrichments for log in result.logs],
        "pf_by_state": {k: float(v) for k, v in result.pf_by_state.items()},
        "voi": _voi_row(vr),
    }
    if keep_model:
        row["_result"] = result
    return row


def aggregate_repetitions(rows) -> dict:
    valid = [r for r in rows if r["voi"]["valid"]]
    vois = np.array([r["voi"]["voi"] for r in valid])
    evals = np.array([r["truth_evals"] for r in rows])
    return {
        "n_repetitions": len(rows),
        "n_valid": len(valid),
        "n_invalid": len(rows) - len(valid),
        "voi_mean": float(vois.mean()) if valid else None,
        "voi_sd": float(vois.std(ddof=1)) if len(valid) > 1 else None,
        "evals_mean": float(evals.mean()),
        "evals_min": int(evals.min()),
        "evals_max": int(evals.max()),
    }


def run_experiment(cfg: RunConfig, progress=None) -> RunRecord:
    """Repeat framework + VoI ``repetitions`` times and aggregate.

    With ``output_dir`` configured, a per-repetition training trace file
    is written alongside the record.
    """
    out_dir = cfg["output_dir"]
    rows = []
    for rep in range(int(cfg["repetitions"])):
        seed = int(cfg["seed"]) + rep
        row = run_single_repetition(cfg, seed, keep_model=bool(out_dir))
        row["repetition"] = rep
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            write_training_trace(
                row["_result"].logs, os.path.join(out_dir, f"trace_rep{rep}.csv")
            )
            del row["_result"]
        rows.append(row)
        if progress:
            progress(rep, row)
    return RunRecord(
        kind="surrogate",
        config=cfg.snapshot(),
        repetitions=rows,
        aggregates=aggregate_repetitions(rows),
    )


def mcs_oracle(cfg: RunConfig) -> RunRecord:
    """Prior probabilities and VoI from the true truss model only.

    The failure-probability pool has ``oracle.n_pf`` samples; the VoI
    posterior pool is its first ``oracle.n_mcs`` rows, so the expensive
    responses are shared between the two stages.
    """
    geom = cfg.geometry()
    problem = cfg.decision_problem()
    dists = cfg.input_distributions()
    upgrade = cfg.distribution("upgrade_area")
    seed = int(cfg["seed"])
    n_pf = int(cfg["oracle"]["n_pf"])
    n_mcs = int(cfg["oracle"]["n_mcs"])
    pool = draw_voi_pool(dists, upgrade, n_pf, seed)
    res_base = midspan_deflection_many(pool.inputs, geom)
    res_up = midspan_deflection_many(with_added_area(pool.inputs, pool.a_add), geom)
    states = cfg.limit_states()
    pf = {
        states[0].name: float(np.mean(res_base >= states[0].res_critical)),
        states[1].name: float(np.mean(res_base >= states[1].res_critical)),
        states[2].name: float(np.mean(res_up >= states[2].res_critical)),
        states[3].name: float(np.mean(res_up >= states[3].res_critical)),
    }

    def response(rows):
        return midspan_deflection_many(rows, geom)

    sub = VoiPool(inputs=pool.inputs[:n_mcs], a_add=pool.a_add[:n_mcs])
    plan = cfg.measurement_plan(n_sy=int(cfg["oracle"]["n_sy"]))
    vr = estimate_voi(problem, response, plan, sub, seed)
    row = {
        "repetition": 0,
        "seed": seed,
        "truth_evals": 2 * n_pf + n_mcs,
        "pf_by_state": pf,
        "voi": _voi_row(vr),
    }
    return RunRecord(
        kind="oracle",
        config=cfg.snapshot(),
        repetitions=[row],
        aggregates={
            "pf_by_state": pf,
            "voi_mean": vr.voi,
            "voi_mc_stderr": vr.voi_mc_stderr,
            "n_valid": int(vr.valid),
            "n_invalid": int(not vr.valid),
        },
    )


def calibrate_measurement_noise(cfg: RunConfig, grid) -> RunRecord:
    """Oracle-mode VoI for each measurement-noise sd on the grid.

    More noise means less information, so the VoI column should be
    nonincreasing within Monte Carlo scatter.
    """
    grid = [float(s) for s in grid]
    if not grid:
        raise ExperimentError("sigma grid must be nonempty")
    geom = cfg.geometry()
    problem = cfg.decision_problem()
    dists = cfg.input_distributions()
    upgrade = cfg.distribution("upgrade_area")
    seed = int(cfg["seed"])
    n_mcs = int(cfg["oracle"]["n_mcs"])
    pool = draw_voi_pool(dists, upgrade, n_mcs, seed)

    def response(rows):
        return midspan_deflection_many(rows, geom)

    rows = []
    for i, sigma in enumerate(grid):
        plan = cfg.measurement_plan(n_sy=int(cfg["oracle"]["n_sy"]))
        plan = type(plan)(test_loads=plan.test_loads, sigma_eps=sigma, n_sy=plan.n_sy)
        vr = estimate_voi(problem, response, plan, pool, seed)
        rows.append(
            {
                "repetition": i,
                "sigma_eps": sigma,
                "voi": _voi_row(vr),
            }
        )
    return RunRecord(
        kind="noise_calibration",
        config=cfg.snapshot(),
        repetitions=rows,
        aggregates={
            "grid": grid,
            "voi_by_sigma": [r["voi"]["voi"] for r in rows],
            "stderr_by_sigma": [r["voi"]["voi_mc_stderr"] for r in rows],
        },
    )


SCHEMES = ("separate", "share_k", "share_all", "shared_model")


def sweep_schemes(cfg: RunConfig, schemes=SCHEMES, reps: int | None = None) -> RunRecord:
    """Training-point comparison of knowledge-sharing schemes on the
    serviceability/structural pair of the un-upgraded system."""
    reps = int(reps if reps is not None else cfg["repetitions"])
    base = cfg.snapshot()
    rows = []
    means = {}
    for scheme in schemes:
        raw = copy.deepcopy(base)
        raw["sharing"]["scheme"] = scheme
        sub_cfg = validate(raw)
        problem = sub_cfg.surrogate_problem()
        states = problem.limit_states[:2]  # ser, str
        tcfg = sub_cfg.trainer_config()
        tcfg.pilot_pfs = tcfg.pilot_pfs[:2] if tcfg.pilot_pfs else None
        tcfg.pool_sizes = (int(base["pools"]["second_group"]),)
        pair = type(problem)(
            dists=problem.dists,
            limit_states=states,
            truth=problem.truth,
            upgrade_dist=None,
            upgrade_cols=(),
        )
        counts = []
        for rep in range(reps):
            seed = int(cfg["seed"]) + rep
            result = run_framework(pair, tcfg, seed)
            counts.append(result.truth_evals)
            rows.append(
                {
                    "repetition": rep,
                    "scheme": scheme,
                    "seed": seed,
                    "truth_evals": result.truth_evals,
                }
            )
        means[scheme] = float(np.mean(counts))
    return RunRecord(
        kind="scheme_sweep",
        config=cfg.snapshot(),
        repetitions=rows,
        aggregates={"mean_evals_by_scheme": means, "reps_per_scheme": reps},
    )


# -- persistence ------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_repetitions_csv(record: RunRecord, path) -> None:
    """Per-repetition rows as delimiter-separated text, 17 significant digits."""
    rows = record.repetitions
    if not rows:
        return
    flat_rows = []
    for r in rows:
        flat = {}
        for k, v in r.items():
            if k.startswith("_"):
                continue
            if isinstance(v, dict):
                for kk, vv in v.items():
                    if isinstance(vv, list):
                        for i, item in enumerate(vv):
                            flat[f"{k}.{kk}.{i}"] = item
                    else:
                        flat[f"{k}.{kk}"] = vv
            elif isinstance(v, list):
                for i, item in enumerate(v):
                    flat[f"{k}.{i}"] = item
            else:
                flat[k] = v
        flat_rows.append(flat)
    header = list(flat_rows[0].keys())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for flat in flat_rows:
            fh.write(",".join(_fmt(flat.get(col, "")) for col in header) + "\n")


def write_training_trace(logs, path) -> None:
    """Per-iteration trace: iteration, member, eps_max, p_hat_f, cov_pf,
    pool_size, active flag, and the added input rows (';'-joined decimals)."""
    header = "group,iteration,member,eps_max,p_hat_f,cov_pf,pool_size,active,added_rows"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for gi, log in enumerate(logs):
            for row in log.trace_rows():
                added = ";".join(
                    " ".join(_fmt(v) for v in point) for point in row["added_rows"]
                )
                fh.write(
                    ",".join(
                        [
                            str(gi),
                            str(row["iteration"]),
                            row["member"],
                            _fmt(row["eps_max"]),
                            _fmt(row["p_hat_f"]),
                            _fmt(row["cov_pf"]),
                            str(row["pool_size"]),
                            str(row["active"]),
                            added,
                        ]
                    )
                    + "\n"
                )


def write_record(record: RunRecord, out_dir, stem: str = "run_record") -> str:
    os.makedirs(out_dir, exist_ok=True)
    record_path = os.path.join(out_dir, f"{stem}.json")
    with open(record_path, "w", encoding="utf-8") as fh:
        fh.write(record.to_json())
    write_repetitions_csv(record, os.path.join(out_dir, f"{stem}_rows.csv"))
    return record_path


def read_record(path) -> RunRecord:
    with open(path, "r", encoding="utf-8") as fh:
        return RunRecord.from_json(fh.read())


def replay(record_path) -> tuple[bool, RunRecord]:
    """Re-run a recorded experiment from its config snapshot and compare.

    Returns (bit_identical, fresh_record); single-thread reference mode.
    """
    original = read_record(record_path)
    cfg = validate(copy.deepcopy(original.config))
    if original.kind == "surrogate":
        fresh = run_experiment(cfg)
    elif original.kind == "oracle":
        fresh = mcs_oracle(cfg)
    elif original.kind == "scheme_sweep":
        reps = original.aggregates.get("reps_per_scheme")
        schemes = tuple(original.aggregates["mean_evals_by_scheme"].keys())
        fresh = sweep_schemes(cfg, schemes=schemes, reps=reps)
    elif original.kind == "noise_calibration":
        fresh = calibrate_measurement_noise(cfg, original.aggregates["grid"])
    else:
        raise ExperimentError(f"cannot replay record kind {original.kind!r}")
    return fresh.to_json() == original.to_json(), fresh
