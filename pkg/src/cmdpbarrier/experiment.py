"""Experiment orchestration: seeded runs, aggregation, and report files.

One experiment = one algorithm, one environment, several seeds.  Each seed
produces a JSON-lines trace (`seed_<k>.jsonl`) and a plot-ready CSV
(`seed_<k>.csv`); a post-pass writes `aggregate.json` (per-iterate median and
10%/90% quantiles of the exact values across seeds, plus the optimality gap
against the occupancy-LP optimum) and `safety_report.json` (per-seed counts
of iterates whose exact margins dip below threshold).  Re-running the same
configuration reproduces every artifact byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import IpoConfig, ipo_run, lp_occupancy_solve
from .gridworld import GridworldSpec, build_gridworld
from .lbsgd import LbSgdConfig, RecoveryConfig, lbsgd_run
from .model import TabularCmdp, load_cmdp, validate
from .policy import SoftmaxPolicy

__all__ = [
    "ExperimentConfig",
    "load_experiment_config",
    "run_experiment",
    "aggregate_runs",
    "nearest_rank",
]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str  # "lbsgd" | "ipo"
    env: GridworldSpec | str  # spec, or path to a serialized model
    params: LbSgdConfig | IpoConfig
    seeds: tuple[int, ...]
    output_dir: str
    oracle_logging: bool = True
    normalize: bool = False
    # theta_0(s, a) = initial_action_bias[a] for every state; the run needs a
    # strictly feasible start, so a cautious bias can encode prior knowledge.
    initial_action_bias: tuple[float, ...] | None = None
    # full flat theta_0, state-major; takes precedence over the bias
    initial_theta: tuple[float, ...] | None = None

    def validate(self) -> None:
        if self.algorithm not in ("lbsgd", "ipo"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if not self.seeds:
            raise ConfigError("seeds list must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if isinstance(self.env, GridworldSpec):
            self.env.validate()


def _recovery_from_dict(doc: dict | None) -> RecoveryConfig:
    return RecoveryConfig(**doc) if doc else RecoveryConfig()


def _params_from_dict(algorithm: str, doc: dict):
    doc = dict(doc)
    recovery = _recovery_from_dict(doc.pop("recovery", None))
    if algorithm == "lbsgd":
        return LbSgdConfig(recovery=recovery, **doc)
    if algorithm == "ipo":
        return IpoConfig(recovery=recovery, **doc)
    raise ConfigError(f"unknown algorithm {algorithm!r}")


def experiment_config_from_dict(doc: dict, default_output_dir: str | None = None) -> ExperimentConfig:
    try:
        algorithm = doc["algorithm"]
        env_doc = doc["env"]
        if "cmdp_file" in env_doc:
            env = env_doc["cmdp_file"]
        elif "gridworld" in env_doc:
            env = GridworldSpec.from_dict(env_doc["gridworld"])
        else:
            raise ConfigError("env must carry either 'gridworld' or 'cmdp_file'")
        params = _params_from_dict(algorithm, doc["params"])
        output_dir = doc.get("output_dir", default_output_dir)
        if output_dir is None:
            raise ConfigError(
                "no output_dir in the config and no default provided "
                "(set CMDPBARRIER_OUTPUT_DIR or add output_dir)"
            )
        bias = doc.get("initial_action_bias")
        theta0 = doc.get("initial_theta")
        config = ExperimentConfig(
            algorithm=algorithm,
            env=env,
            params=params,
            seeds=tuple(int(s) for s in doc.get("seeds", ())),
            output_dir=str(output_dir),
            oracle_logging=bool(doc.get("oracle_logging", True)),
            normalize=bool(doc.get("normalize", False)),
            initial_action_bias=None if bias is None else tuple(float(b) for b in bias),
            initial_theta=None if theta0 is None else tuple(float(v) for v in theta0),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed experiment config: {exc}") from exc
    config.validate()
    return config


def load_experiment_config(path: str | Path, default_output_dir: str | None = None) -> ExperimentConfig:
    return experiment_config_from_dict(json.loads(Path(path).read_text()), default_output_dir)


def normalize_utilities(cmdp: TabularCmdp) -> TabularCmdp:
    """Rescale each utility signal (and its threshold) by its reward bound."""
    rewards = cmdp.rewards.copy()
    bounds = cmdp.reward_bounds.copy()
    thresholds = cmdp.thresholds.copy()
    for i in range(1, cmdp.num_signals):
        scale = bounds[i]
        if scale > 1.0:
            rewards[i] /= scale
            thresholds[i - 1] /= scale
            bounds[i] = 1.0
    return TabularCmdp(
        num_states=cmdp.num_states,
        num_actions=cmdp.num_actions,
        transition=cmdp.transition,
        initial_dist=cmdp.initial_dist,
        rewards=rewards,
        reward_bounds=bounds,
        discount=cmdp.discount,
        thresholds=thresholds,
    )


def build_environment(config: ExperimentConfig) -> TabularCmdp:
    cmdp = (
        build_gridworld(config.env)
        if isinstance(config.env, GridworldSpec)
        else load_cmdp(config.env)
    )
    validate(cmdp)
    if config.normalize:
        cmdp = normalize_utilities(cmdp)
    return cmdp


def initial_policy(config: ExperimentConfig, cmdp: TabularCmdp) -> SoftmaxPolicy:
    theta = np.zeros(cmdp.num_states * cmdp.num_actions)
    if config.initial_theta is not None:
        theta = np.asarray(config.initial_theta, dtype=np.float64)
        if theta.shape != (cmdp.num_states * cmdp.num_actions,):
            raise ConfigError(
                f"initial_theta needs {cmdp.num_states * cmdp.num_actions} entries, "
                f"got {theta.shape[0]}"
            )
    elif config.initial_action_bias is not None:
        bias = np.asarray(config.initial_action_bias, dtype=np.float64)
        if bias.shape != (cmdp.num_actions,):
            raise ConfigError(
                f"initial_action_bias needs {cmdp.num_actions} entries, got {bias.shape[0]}"
            )
        theta = np.tile(bias, cmdp.num_states)
    kw = {}
    if hasattr(config.params, "m_g"):
        kw["m_g"] = config.params.m_g
    if hasattr(config.params, "m_h"):
        kw["m_h"] = config.params.m_h
    return SoftmaxPolicy(theta, cmdp.num_states, cmdp.num_actions, **kw)


def nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """Nearest-rank quantile: the ceil(q*N)-th smallest value (1-based)."""
    n = len(sorted_values)
    rank = min(max(math.ceil(q * n), 1), n)
    return float(sorted_values[rank - 1])


def _run_one_seed(config: ExperimentConfig, cmdp: TabularCmdp, seed: int):
    rng = np.random.default_rng(seed)
    policy = initial_policy(config, cmdp)
    if config.algorithm == "lbsgd":
        return lbsgd_run(cmdp, policy, config.params, rng, config.oracle_logging)
    return ipo_run(cmdp, policy, config.params, rng, config.oracle_logging)


def _dump_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def run_experiment(config: ExperimentConfig, seed_offset: int = 0) -> dict:
    """Run every seed, write all artifacts, and return the summary dict."""
    config.validate()
    cmdp = build_environment(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    seeds = [s + seed_offset for s in config.seeds]
    meta = {
        "algorithm": config.algorithm,
        "seeds": seeds,
        "thresholds": cmdp.thresholds.tolist(),
        "num_signals": cmdp.num_signals,
        "oracle_logging": config.oracle_logging,
        "normalize": config.normalize,
    }
    _dump_json(out / "experiment_meta.json", meta)

    histories = {}
    for seed in seeds:
        history = _run_one_seed(config, cmdp, seed)
        history.write_jsonl(out / f"seed_{seed}.jsonl")
        history.write_csv(out / f"seed_{seed}.csv")
        histories[seed] = history

    lp = lp_occupancy_solve(cmdp)
    _dump_json(out / "lp_solution.json", lp.to_dict())

    seed_records = {
        seed: [
            {"t": r.t, "exact_values": None if r.exact_values is None else r.exact_values.tolist()}
            for r in history.records
        ]
        for seed, history in histories.items()
    }
    run_meta = {
        seed: {
            "termination": history.termination,
            "recoveries": history.meta["recoveries"],
            "final_n": history.meta.get("final_n"),
        }
        for seed, history in histories.items()
    }
    aggregate, safety = _build_reports(
        seed_records, run_meta, cmdp.thresholds.tolist(), lp.to_dict()
    )
    _dump_json(out / "aggregate.json", aggregate)
    _dump_json(out / "safety_report.json", safety)
    return {"output_dir": str(out), "aggregate": aggregate, "safety": safety}


def _build_reports(seed_records: dict, run_meta: dict, thresholds: list, lp_doc: dict | None):
    seeds = sorted(seed_records)
    k = None
    have_exact = True
    for recs in seed_records.values():
        for r in recs:
            if r["exact_values"] is None:
                have_exact = False
            elif k is None:
                k = len(r["exact_values"])

    per_iterate = []
    if have_exact and k is not None:
        max_t = max(r["t"] for recs in seed_records.values() for r in recs)
        by_t: dict[int, list] = {}
        for recs in seed_records.values():
            for r in recs:
                by_t.setdefault(r["t"], []).append(r["exact_values"])
        for t in range(max_t + 1):
            rows = by_t.get(t)
            if not rows:
                continue
            entry = {"t": t, "count": len(rows)}
            for i in range(k):
                vals = np.sort(np.array([row[i] for row in rows]))
                entry[f"V{i}"] = {
                    "median": nearest_rank(vals, 0.5),
                    "q10": nearest_rank(vals, 0.1),
                    "q90": nearest_rank(vals, 0.9),
                }
            per_iterate.append(entry)

    safety_rows = []
    for seed in seeds:
        recs = seed_records[seed]
        violations = None
        if have_exact:
            violations = 0
            for r in recs:
                margins = [
                    r["exact_values"][1 + j] - thresholds[j] for j in range(len(thresholds))
                ]
                if any(m < 0 for m in margins):
                    violations += 1
        row = {"seed": seed, "iterates": len(recs), "violating_iterates": violations}
        row.update(run_meta.get(seed, {}))
        safety_rows.append(row)

    safety = {
        "per_seed": safety_rows,
        "seeds_with_zero_violations": sum(
            1 for r in safety_rows if r["violating_iterates"] == 0
        )
        if have_exact
        else None,
        "total_seeds": len(seeds),
        "oracle_logging": have_exact,
    }

    optimality = None
    if lp_doc is not None and lp_doc["status"] == "optimal" and have_exact:
        finals = {}
        for seed in seeds:
            last = seed_records[seed][-1]
            finals[str(seed)] = {
                "final_v0": last["exact_values"][0],
                "gap": lp_doc["objective"] - last["exact_values"][0],
            }
        gaps = np.sort(np.array([v["gap"] for v in finals.values()]))
        optimality = {
            "lp_objective": lp_doc["objective"],
            "per_seed": finals,
            "median_gap": nearest_rank(gaps, 0.5),
        }

    aggregate = {
        "seeds": seeds,
        "per_iterate": per_iterate,
        "optimality": optimality,
        "lp": lp_doc,
    }
    return aggregate, safety


def aggregate_runs(directory: str | Path) -> tuple[dict, dict]:
    """Recompute aggregate.json and safety_report.json from seed traces."""
    directory = Path(directory)
    meta_path = directory / "experiment_meta.json"
    if not meta_path.exists():
        raise ConfigError(f"{meta_path} not found; not an experiment directory")
    meta = json.loads(meta_path.read_text())
    seed_records = {}
    for path in sorted(directory.glob("seed_*.jsonl")):
        seed = int(path.stem.split("_", 1)[1])
        records = [json.loads(line) for line in path.read_text().splitlines() if line]
        seed_records[seed] = [
            {"t": r["t"], "exact_values": r.get("exact_values")} for r in records
        ]
    if not seed_records:
        raise ConfigError(f"no seed_*.jsonl files under {directory}")
    lp_path = directory / "lp_solution.json"
    lp_doc = json.loads(lp_path.read_text()) if lp_path.exists() else None
    aggregate, safety = _build_reports(seed_records, {}, meta["thresholds"], lp_doc)
    _dump_json(directory / "aggregate.json", aggregate)
    _dump_json(directory / "safety_report.json", safety)
    return aggregate, safety
