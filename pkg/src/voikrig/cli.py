"""Command-line interface.

Subcommands:
  run            adaptive-surrogate VoI experiment (repeated runs)
  oracle         true-model (truss) baseline: prior probabilities + VoI
  sweep-schemes  knowledge-sharing comparison on the ser/str pair
  calibrate      measurement-noise grid of oracle-mode VoI estimates
  replay         re-run a recorded experiment and verify bit-identity

Exit codes: 0 success, 1 validation failure, 2 numerical failure,
3 invalid-run threshold exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, parse_config
from .decision import DecisionError
from .error_control import LimitState  # noqa: F401  (re-export convenience)
from .experiment import (
    ExperimentError,
    calibrate_measurement_noise,
    mcs_oracle,
    read_record,
    replay,
    run_experiment,
    sweep_schemes,
    write_record,
)
from .kriging import KrigingError
from .trainer import TrainerError
from .truss import TrussError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_INVALID_RUNS = 0, 1, 2, 3
INVALID_RUN_FRACTION = 0.5


def _add_common(p):
    p.add_argument("--config", default=None, help="JSON config file (empty = bridge defaults)")
    p.add_argument("--seed", type=int, default=None, help="override the base seed")
    p.add_argument("--reps", type=int, default=None, help="override the repetition count")
    p.add_argument("--out", default=None, help="output directory for records and traces")
    p.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker threads (>1 is not bit-reproducible; reference mode is 1)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voikrig", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "oracle", "sweep-schemes", "calibrate"):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "calibrate":
            p.add_argument(
                "--grid",
                default="0.002,0.005,0.01,0.02",
                help="comma-separated measurement-noise sds (m)",
            )
    p = sub.add_parser("replay")
    p.add_argument("record", help="path to a run_record JSON file")
    return parser


def _load_config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.reps is not None:
        overrides["repetitions"] = args.reps
    if args.out is not None:
        overrides["output_dir"] = args.out
    cfg = parse_config(args.config, overrides)
    print("effective config:")
    print(json.dumps(cfg.snapshot(), indent=1))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            match, fresh = replay(args.record)
            original = read_record(args.record)
            print(f"replayed kind={original.kind}: bit-identical={match}")
            return EXIT_OK if match else EXIT_NUMERICAL
        cfg = _load_config(args)
        if args.command == "run":
            record = run_experiment(
                cfg, progress=lambda rep, row: print(
                    f"rep {rep}: evals={row['truth_evals']} voi={row['voi']['voi']:.6g}"
                )
            )
            agg = record.aggregates
            print(
                f"VoI mean={agg['voi_mean']} sd={agg['voi_sd']} "
                f"evals mean={agg['evals_mean']} range=[{agg['evals_min']}, {agg['evals_max']}] "
                f"invalid={agg['n_invalid']}"
            )
            if cfg["output_dir"]:
                print("record:", write_record(record, cfg["output_dir"]))
            if agg["n_invalid"] > INVALID_RUN_FRACTION * agg["n_repetitions"]:
                return EXIT_INVALID_RUNS
        elif args.command == "oracle":
            record = mcs_oracle(cfg)
            agg = record.aggregates
            print("prior pf:", agg["pf_by_state"])
            print(f"VoI={agg['voi_mean']} stderr={agg['voi_mc_stderr']}")
            if cfg["output_dir"]:
                print("record:", write_record(record, cfg["output_dir"], stem="oracle_record"))
            if agg["n_invalid"]:
                return EXIT_INVALID_RUNS
        elif args.command == "sweep-schemes":
            record = sweep_schemes(cfg)
            print("mean truth evaluations by scheme:")
            for scheme, mean in record.aggregates["mean_evals_by_scheme"].items():
                print(f"  {scheme:12s} {mean:.1f}")
            if cfg["output_dir"]:
                print("record:", write_record(record, cfg["output_dir"], stem="scheme_record"))
        elif args.command == "calibrate":
            grid = [float(s) for s in args.grid.split(",") if s.strip()]
            record = calibrate_measurement_noise(cfg, grid)
            print("sigma_eps, VoI, stderr:")
            for row in record.repetitions:
                print(
                    f"  {row['sigma_eps']:.6g}  {row['voi']['voi']:.6g}  "
                    f"{row['voi']['voi_mc_stderr']:.6g}"
                )
            if cfg["output_dir"]:
                print("record:", write_record(record, cfg["output_dir"], stem="calibration_record"))
        return EXIT_OK
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (KrigingError, TrainerError, TrussError, DecisionError, ExperimentError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
