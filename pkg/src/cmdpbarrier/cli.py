"""Command-line harness.

Subcommands:
    validate <cmdp.json>        check a serialized model's invariants
    ground-truth <env.json>     occupancy-LP optimum for a model or gridworld spec
    run <config.json>           run a seeded experiment, writing all artifacts
    aggregate <dir>             recompute aggregate/safety reports from traces

`CMDPBARRIER_OUTPUT_DIR` supplies the default output directory when a run
config omits `output_dir`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiment
from .baselines import lp_occupancy_solve
from .gridworld import GridworldSpec, build_gridworld
from .model import CmdpValidationError, cmdp_from_dict, validate

OUTPUT_DIR_ENV = "CMDPBARRIER_OUTPUT_DIR"


def _load_env_file(path: Path):
    doc = json.loads(path.read_text())
    if "transition" in doc:
        return cmdp_from_dict(doc)
    if "gridworld" in doc:
        doc = doc["gridworld"]
    return build_gridworld(GridworldSpec.from_dict(doc))


def _cmd_validate(args) -> int:
    try:
        cmdp = cmdp_from_dict(json.loads(Path(args.cmdp).read_text()))
        validate(cmdp)
    except (OSError, ValueError, KeyError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    print(f"ok: {cmdp.num_states} states, {cmdp.num_actions} actions, "
          f"{cmdp.num_constraints} constraints")
    return 0


def _cmd_ground_truth(args) -> int:
    try:
        cmdp = _load_env_file(Path(args.env))
        validate(cmdp)
    except (OSError, ValueError, KeyError) as exc:
        print(f"invalid environment: {exc}", file=sys.stderr)
        return 1
    solution = lp_occupancy_solve(cmdp)
    out_path = Path(args.output) if args.output else Path(args.env).with_suffix(".ground_truth.json")
    out_path.write_text(json.dumps(solution.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"status: {solution.status}")
    if solution.status == "optimal":
        print(f"V0* = {solution.objective!r}")
        for i, v in enumerate(solution.constraint_values, start=1):
            print(f"V{i}* = {v!r} (threshold {cmdp.thresholds[i - 1]!r})")
    else:
        print(f"no policy meets thresholds {cmdp.thresholds.tolist()}", file=sys.stderr)
        print(f"written: {out_path}")
        return 1
    print(f"written: {out_path}")
    return 0


def _cmd_run(args) -> int:
    try:
        config = experiment.load_experiment_config(
            args.config, default_output_dir=os.environ.get(OUTPUT_DIR_ENV)
        )
        summary = experiment.run_experiment(config, seed_offset=args.seed_offset)
    except experiment.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # infeasible start, LP failure, ...
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    safety = summary["safety"]
    print(f"artifacts in {summary['output_dir']}")
    if safety["seeds_with_zero_violations"] is not None:
        print(
            f"safety: {safety['seeds_with_zero_violations']}/{safety['total_seeds']} "
            "seeds without violating iterates"
        )
    opt = summary["aggregate"]["optimality"]
    if opt is not None:
        print(f"optimality: median final gap {opt['median_gap']!r} vs LP {opt['lp_objective']!r}")
    return 0


def _cmd_aggregate(args) -> int:
    try:
        aggregate, safety = experiment.aggregate_runs(args.directory)
    except experiment.ConfigError as exc:
        print(f"aggregate error: {exc}", file=sys.stderr)
        return 1
    print(f"aggregated {len(aggregate['seeds'])} seeds in {args.directory}")
    if safety["seeds_with_zero_violations"] is not None:
        print(
            f"safety: {safety['seeds_with_zero_violations']}/{safety['total_seeds']} "
            "seeds without violating iterates"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmdpbarrier",
        description="Safe-exploration barrier policy gradient toolkit for tabular CMDPs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a serialized model")
    p.add_argument("cmdp", help="path to a model JSON file")
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("ground-truth", help="solve the occupancy-measure LP")
    p.add_argument("env", help="model JSON or gridworld spec JSON")
    p.add_argument("--output", help="where to write the solution JSON")
    p.set_defaults(fn=_cmd_ground_truth)

    p = sub.add_parser("run", help="run a seeded experiment")
    p.add_argument("config", help="experiment config JSON")
    p.add_argument("--seed-offset", type=int, default=0, help="shift every seed for sweeps")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("aggregate", help="recompute reports from seed traces")
    p.add_argument("directory", help="experiment output directory")
    p.set_defaults(fn=_cmd_aggregate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
