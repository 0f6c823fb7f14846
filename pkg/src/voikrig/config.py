"""Run configuration: defaults, file parsing, validation, problem assembly.

Config files are JSON with the key tree below; omitted keys take the
defaults (an empty file runs the bridge example end to end). Unknown keys
are rejected. Numeric fields are validated against the preconditions of
the modules that consume them, with field-path error messages.

The default variable table is the calibrated bridge table: the load sd
and upgrade-plate mean were swept against the reference failure
probabilities on the shipped geometry (see CALIBRATION.md) and frozen
here; every entry can be overridden per key.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .decision import (
    DecisionProblem,
    MeasurementPlan,
    cost_matrix_derived,
    cost_matrix_table2_as_printed,
)
from .distributions import make_distribution
from .error_control import LimitState
from .trainer import SurrogateProblem, TrainerConfig
from .truss import IDX_A1, IDX_A2, TrussGeometry, default_bridge_geometry, load_geometry, midspan_deflection_many

STATE_NAMES = ("ser", "str", "ser_up", "str_up")

DEFAULTS: dict = {
    "variables": {
        "loads": {"kind": "gumbel", "mean": 4.0e4, "sd": 4.5e4},
        "a1": {"kind": "lognormal", "mean": 4.0e-3, "sd": 2.0e-3},
        "a2": {"kind": "lognormal", "mean": 3.0e-3, "sd": 1.5e-3},
        "e1": {"kind": "lognormal", "mean": 2.1e11, "sd": 2.1e10},
        "e2": {"kind": "lognormal", "mean": 2.1e11, "sd": 2.1e10},
        "upgrade_area": {"kind": "lognormal", "mean": 8.0e-4, "sd": 8.0e-5},
    },
    "thresholds": {"serviceability": 0.09, "structural": 0.11},
    "costs": {
        "preset": "derived",  # derived | table2_as_printed | explicit
        "c_fser": 220000.0,
        "c_fstr": 920000.0,
        "c_rper": 400000.0,
        "c_rimp": 120000.0,
        "matrix": None,  # 6x3 row-major list when preset == "explicit"
    },
    "esc": {"eps_thr": 0.05, "alpha": 0.05, "cov_thr": 0.05},
    "pools": {"first_group": 100000, "second_group": 10000, "n_delta": 100000},
    "training": {
        "n_initial": 12,
        "max_added": 600,
        "max_enrichments": 8,
        "selection": "per_member",  # per_member | single_best
    },
    "grouping": {
        "ratio_threshold": 3.0,
        "pilot_pfs": [0.046, 0.038, 0.0058, 0.0044],
    },
    "sharing": {"scheme": "shared_model", "k": 50},
    "measurement": {"sigma_eps": 0.01, "n_sy": 10000, "test_load": 4.0e4},
    "voi": {"n_mcs": 100000},
    "oracle": {"n_pf": 1000000, "n_mcs": 10000, "n_sy": 10000},
    "seed": 92021,
    "repetitions": 20,
    "geometry": None,
    "output_dir": None,
}


class ConfigError(Exception):
    pass


def _merge(defaults, override, path=""):
    if not isinstance(override, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(defaults[key], dict) and defaults[key]:
            out[key] = _merge(defaults[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


@dataclass
class RunConfig:
    """Validated, fully resolved run configuration."""

    raw: dict = field(repr=False)

    def __getitem__(self, key):
        return self.raw[key]

    def snapshot(self) -> dict:
        return copy.deepcopy(self.raw)

    # -- assembled model objects ------------------------------------------

    def distribution(self, name: str):
        spec = self.raw["variables"][name]
        return make_distribution(spec["kind"], spec["mean"], spec["sd"])

    def input_distributions(self) -> tuple:
        loads = self.distribution("loads")
        return (loads,) * 6 + tuple(
            self.distribution(k) for k in ("a1", "a2", "e1", "e2")
        )

    def geometry(self) -> TrussGeometry:
        path = self.raw["geometry"]
        return load_geometry(path) if path else default_bridge_geometry()

    def limit_states(self) -> tuple:
        t = self.raw["thresholds"]
        return (
            LimitState("ser", t["serviceability"], "identity"),
            LimitState("str", t["structural"], "identity"),
            LimitState("ser_up", t["serviceability"], "imperfect_upgrade"),
            LimitState("str_up", t["structural"], "imperfect_upgrade"),
        )

    def cost_matrix(self) -> np.ndarray:
        c = self.raw["costs"]
        if c["preset"] == "derived":
            return cost_matrix_derived(c["c_fser"], c["c_fstr"], c["c_rper"], c["c_rimp"])
        if c["preset"] == "table2_as_printed":
            return cost_matrix_table2_as_printed(
                c["c_fser"], c["c_fstr"], c["c_rper"], c["c_rimp"]
            )
        return np.asarray(c["matrix"], dtype=float)

    def surrogate_problem(self) -> SurrogateProblem:
        geom = self.geometry()

        def truth(rows):
            return midspan_deflection_many(rows, geom)

        return SurrogateProblem(
            dists=self.input_distributions(),
            limit_states=self.limit_states(),
            truth=truth,
            upgrade_dist=self.distribution("upgrade_area"),
            upgrade_cols=(IDX_A1, IDX_A2),
        )

    def decision_problem(self) -> DecisionProblem:
        return DecisionProblem(
            cost_matrix=self.cost_matrix(), limit_states=self.limit_states()
        )

    def measurement_plan(self, n_sy: int | None = None) -> MeasurementPlan:
        m = self.raw["measurement"]
        return MeasurementPlan(
            test_loads=(m["test_load"],) * 6,
            sigma_eps=m["sigma_eps"],
            n_sy=int(n_sy if n_sy is not None else m["n_sy"]),
        )

    def trainer_config(self) -> TrainerConfig:
        esc, pools, tr = self.raw["esc"], self.raw["pools"], self.raw["training"]
        gr, sh = self.raw["grouping"], self.raw["sharing"]
        pilot = gr["pilot_pfs"]
        return TrainerConfig(
            eps_thr=esc["eps_thr"],
            alpha=esc["alpha"],
            cov_thr=esc["cov_thr"],
            n_initial=tr["n_initial"],
            pool_sizes=(pools["first_group"], pools["second_group"]),
            n_delta=pools["n_delta"],
            max_added=tr["max_added"],
            max_enrichments=tr["max_enrichments"],
            selection=tr["selection"],
            sharing=sh["scheme"],
            share_k=sh["k"],
            ratio_threshold=gr["ratio_threshold"],
            pilot_pfs=tuple(pilot) if pilot is not None else None,
        )


def validate(raw: dict) -> RunConfig:
    v = raw["variables"]
    for name, spec in v.items():
        _require(
            isinstance(spec, dict) and set(spec) == {"kind", "mean", "sd"},
            f"variables.{name}: expected kind/mean/sd",
        )
        _require(spec["kind"] in ("normal", "lognormal", "gumbel"),
                 f"variables.{name}.kind: unknown family {spec['kind']!r}")
        _require(spec["sd"] > 0, f"variables.{name}.sd: must be positive")
        if spec["kind"] == "lognormal":
            _require(spec["mean"] > 0, f"variables.{name}.mean: must be positive")
    t = raw["thresholds"]
    _require(0 < t["serviceability"] <= t["structural"],
             "thresholds: need 0 < serviceability <= structural")
    c = raw["costs"]
    _require(c["preset"] in ("derived", "table2_as_printed", "explicit"),
             f"costs.preset: unknown preset {c['preset']!r}")
    if c["preset"] == "explicit":
        m = np.asarray(c["matrix"], dtype=float) if c["matrix"] is not None else None
        _require(m is not None and m.shape == (6, 3), "costs.matrix: expected 6x3 values")
        _require(bool(np.all(m >= 0) and np.all(np.isfinite(m))),
                 "costs.matrix: entries must be nonnegative and finite")
    else:
        for k in ("c_fser", "c_fstr", "c_rper", "c_rimp"):
            _require(c[k] >= 0 and np.isfinite(c[k]), f"costs.{k}: must be nonnegative")
    esc = raw["esc"]
    _require(esc["eps_thr"] > 0, "esc.eps_thr: must be positive")
    _require(0 < esc["alpha"] < 1, "esc.alpha: must lie in (0, 1)")
    _require(esc["cov_thr"] > 0, "esc.cov_thr: must be positive")
    pools = raw["pools"]
    for k in ("first_group", "second_group", "n_delta"):
        _require(int(pools[k]) >= 1, f"pools.{k}: must be >= 1")
    tr = raw["training"]
    _require(int(tr["n_initial"]) >= 2, "training.n_initial: must be >= 2")
    _require(int(tr["max_added"]) >= 1, "training.max_added: must be >= 1")
    _require(int(tr["max_enrichments"]) >= 0, "training.max_enrichments: must be >= 0")
    _require(tr["selection"] in ("per_member", "single_best"),
             f"training.selection: unknown mode {tr['selection']!r}")
    gr = raw["grouping"]
    _require(gr["ratio_threshold"] >= 1, "grouping.ratio_threshold: must be >= 1")
    if gr["pilot_pfs"] is not None:
        _require(len(gr["pilot_pfs"]) == 4 and all(0 < p <= 1 for p in gr["pilot_pfs"]),
                 "grouping.pilot_pfs: need four probabilities in (0, 1]")
    sh = raw["sharing"]
    _require(sh["scheme"] in ("shared_model", "share_all", "share_k", "separate"),
             f"sharing.scheme: unknown scheme {sh['scheme']!r}")
    _require(int(sh["k"]) >= 2, "sharing.k: must be >= 2")
    m = raw["measurement"]
    _require(m["sigma_eps"] > 0, "measurement.sigma_eps: must be positive")
    _require(int(m["n_sy"]) >= 1, "measurement.n_sy: must be >= 1")
    _require(np.isfinite(m["test_load"]), "measurement.test_load: must be finite")
    _require(int(raw["voi"]["n_mcs"]) >= 1, "voi.n_mcs: must be >= 1")
    for k in ("n_pf", "n_mcs", "n_sy"):
        _require(int(raw["oracle"][k]) >= 1, f"oracle.{k}: must be >= 1")
    _require(int(raw["repetitions"]) >= 1, "repetitions: must be >= 1")
    return RunConfig(raw=raw)


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Load, merge with defaults, and validate a config file.

    ``path=None`` or an empty file yields the default bridge setup.
    """
    data: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        if text.strip():
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config parse failure: {exc}") from exc
    merged = _merge(DEFAULTS, data)
    if overrides:
        merged = _merge(merged, overrides)
    return validate(merged)


def default_config(**overrides) -> RunConfig:
    merged = _merge(DEFAULTS, overrides)
    return validate(merged)
