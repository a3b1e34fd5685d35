"""Experiment orchestration: configs, seeded parallel runs, CSV/JSON output.

One experiment = one instance, one algorithm, `runs` independent seeded
runs.  Per-run streams derive from (master_seed, run_index) on a fixed
64-bit generator (PCG64), so outputs are byte-identical regardless of how
many workers execute the runs.  The FAIRLIN_THREADS environment variable
caps the worker count.
"""

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .design import d_optimal_design
from .geometry import john_distribution
from .instances import ArmSet, BanditInstance, make_synthetic_instance
from .metrics import ExpectedRewardTrace, RegretReport, aggregate_runs, compute_report, log_spaced_checkpoints
from .policies import (
    PolicyConfig,
    Precomputed,
    RunTrace,
    run_fair_lin_bandit,
    run_plain_lin_ucb_baseline,
)

ALGOS = ("fair_lin_ucb", "fair_lin_pe", "plain_lin_ucb")

_CONFIG_KEYS = {
    "instance", "generator", "algo", "T", "p_list", "sigma", "alpha", "runs",
    "master_seed", "checkpoints", "stopping", "p", "out", "label",
}
_GENERATOR_KEYS = {"d", "n_arms", "sparsity", "instance_seed"}
_STOPPING_KEYS = {"c_lower", "c_upper", "width_exponent"}
_INSTANCE_KEYS = {"d", "arms", "theta_star", "sigma"}


class ConfigError(ValueError):
    """A malformed experiment configuration (unknown keys, bad values)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment: instance source, algorithm, horizon, seeds, metrics."""

    algo: str
    T: int
    p_list: tuple[float, ...]
    runs: int
    master_seed: int
    sigma: float | None = None
    alpha: float = 1.0
    checkpoints: int = 64
    generator: dict | None = None
    instance: dict | None = None
    p: float | None = None
    c_lower: float = 48.0
    c_upper: float = 900.0
    width_exponent: float = 2.0
    out: str | None = None
    label: str | None = None

    @property
    def algorithm_p(self) -> float:
        """The fairness order the run targets: explicit p, else min of p_list."""
        return self.p if self.p is not None else min(self.p_list)

    def policy_config(self, env: BanditInstance) -> PolicyConfig:
        phase2 = "lin_pe" if self.algo == "fair_lin_pe" else "lin_ucb"
        return PolicyConfig(
            T=self.T,
            p=self.algorithm_p,
            alpha=self.alpha,
            sigma=None,  # algorithms trust the instance's sigma
            phase2=phase2,
            c_lower=self.c_lower,
            c_upper=self.c_upper,
            width_exponent=self.width_exponent,
        )


def _reject_unknown(doc: dict, allowed: set, where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config document; unknown keys anywhere are rejected."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(doc, _CONFIG_KEYS, "config")

    if ("generator" in doc) == ("instance" in doc):
        raise ConfigError("config needs exactly one of 'generator' or 'instance'")
    generator = instance = None
    if "generator" in doc:
        generator = dict(doc["generator"])
        _reject_unknown(generator, _GENERATOR_KEYS, "generator")
        missing = _GENERATOR_KEYS - set(generator)
        if missing:
            raise ConfigError(f"generator is missing keys: {sorted(missing)}")
        if "sigma" not in doc:
            raise ConfigError("generator-based configs must set 'sigma'")
    else:
        instance = dict(doc["instance"])
        _reject_unknown(instance, _INSTANCE_KEYS, "instance")

    stopping = dict(doc.get("stopping", {}))
    _reject_unknown(stopping, _STOPPING_KEYS, "stopping")

    try:
        cfg = ExperimentConfig(
            algo=str(doc["algo"]),
            T=int(doc["T"]),
            p_list=tuple(float(p) for p in doc["p_list"]),
            runs=int(doc["runs"]),
            master_seed=int(doc["master_seed"]),
            sigma=None if "sigma" not in doc else float(doc["sigma"]),
            alpha=float(doc.get("alpha", 1.0)),
            checkpoints=int(doc.get("checkpoints", 64)),
            generator=generator,
            instance=instance,
            p=None if "p" not in doc else float(doc["p"]),
            c_lower=float(stopping.get("c_lower", 48.0)),
            c_upper=float(stopping.get("c_upper", 900.0)),
            width_exponent=float(stopping.get("width_exponent", 2.0)),
            out=doc.get("out"),
            label=doc.get("label"),
        )
    except KeyError as e:
        raise ConfigError(f"config is missing required key {e}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad config value: {e}") from None

    if cfg.algo not in ALGOS:
        raise ConfigError(f"algo must be one of {ALGOS}, got {cfg.algo!r}")
    if cfg.T < 1:
        raise ConfigError("T must be >= 1")
    if cfg.runs < 1:
        raise ConfigError("runs must be >= 1")
    if not cfg.p_list:
        raise ConfigError("p_list must be nonempty")
    if cfg.sigma is not None and cfg.sigma < 0:
        raise ConfigError("sigma must be nonnegative")
    if cfg.alpha <= 0:
        raise ConfigError("alpha must be positive")
    if cfg.checkpoints < 1:
        raise ConfigError("checkpoints must be >= 1")
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(json.load(fh))


def build_instance(cfg: ExperimentConfig) -> BanditInstance:
    if cfg.generator is not None:
        g = cfg.generator
        try:
            return make_synthetic_instance(
                d=int(g["d"]),
                n_arms=int(g["n_arms"]),
                sparsity=int(g["sparsity"]),
                seed=int(g["instance_seed"]),
                sigma=float(cfg.sigma),
            )
        except ValueError as e:
            raise ConfigError(str(e)) from None
    doc = dict(cfg.instance)
    if cfg.sigma is not None:
        doc["sigma"] = cfg.sigma  # config-level sigma overrides the inline one
    try:
        return BanditInstance.from_json(json.dumps(doc))
    except (KeyError, ValueError) as e:
        raise ConfigError(f"bad inline instance: {e}") from None


@dataclass(frozen=True)
class RunDiagnostics:
    run: int
    seed: tuple[int, int]
    t_phase1: int
    tau_reported: int
    floor_ratio: float | None

    def to_doc(self) -> dict:
        return {
            "run": self.run,
            "seed": list(self.seed),
            "t_phase1": self.t_phase1,
            "tau_reported": self.tau_reported,
            "floor_ratio": self.floor_ratio,
        }


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    instance: BanditInstance
    report: RegretReport
    aggregate: ExpectedRewardTrace
    diagnostics: list[RunDiagnostics]
    wall_ms: list[float]
    traces: list[RunTrace] = field(default_factory=list)


def run_stream(master_seed: int, run_index: int) -> np.random.Generator:
    """The documented per-run stream: PCG64 seeded with (master_seed, run_index)."""
    return np.random.default_rng([master_seed, run_index])


def _execute_run(env, cfg: ExperimentConfig, pre: Precomputed | None, run_index: int):
    rng = run_stream(cfg.master_seed, run_index)
    policy_cfg = cfg.policy_config(env)
    start = time.perf_counter()
    if cfg.algo == "plain_lin_ucb":
        trace = run_plain_lin_ucb_baseline(env, policy_cfg, rng)
    else:
        trace = run_fair_lin_bandit(env, policy_cfg, rng, precomputed=pre)
    wall_ms = (time.perf_counter() - start) * 1e3
    return trace, wall_ms


_WORKER_STATE: dict = {}


def _worker_init(instance_json: str, cfg: ExperimentConfig, pre: Precomputed | None):
    _WORKER_STATE["env"] = BanditInstance.from_json(instance_json)
    _WORKER_STATE["cfg"] = cfg
    _WORKER_STATE["pre"] = pre


def _worker_run(run_index: int):
    trace, wall_ms = _execute_run(
        _WORKER_STATE["env"], _WORKER_STATE["cfg"], _WORKER_STATE["pre"], run_index
    )
    return run_index, trace, wall_ms


def worker_count(runs: int) -> int:
    cap = os.environ.get("FAIRLIN_THREADS")
    if cap is not None:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise ConfigError(f"FAIRLIN_THREADS must be an integer, got {cap!r}") from None
    else:
        limit = os.cpu_count() or 1
    return max(1, min(limit, runs))


def run_experiment(
    cfg: ExperimentConfig,
    out_dir=None,
    keep_traces: bool = False,
) -> ExperimentResult:
    """Execute all seeded runs, aggregate, score regrets, and write outputs.

    Runs execute in parallel when more than one worker is available;
    aggregation always happens in run-index order, so the result does not
    depend on the degree of parallelism.
    """
    env = build_instance(cfg)
    pre = None
    if cfg.algo in ("fair_lin_ucb", "fair_lin_pe"):
        # Design and welfare distribution depend only on the arm set: compute
        # once and share across runs (each run would recompute identical values).
        policy_cfg = cfg.policy_config(env)
        pre = Precomputed(
            design=d_optimal_design(env.arm_set, policy_cfg.design_eps, policy_cfg.design_max_iters),
            john=john_distribution(env.arm_set, policy_cfg.n_dirs),
        )

    results: list = [None] * cfg.runs
    workers = worker_count(cfg.runs)
    if workers == 1:
        for r in range(cfg.runs):
            results[r] = _execute_run(env, cfg, pre, r)
    else:
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_worker_init,
            initargs=(env.to_json(), cfg, pre),
        ) as pool:
            for run_index, trace, wall_ms in pool.map(_worker_run, range(cfg.runs)):
                results[run_index] = (trace, wall_ms)

    traces = [trace for trace, _ in results]
    wall_ms = [ms for _, ms in results]
    aggregate = aggregate_runs([tr.true_mean for tr in traces], env.mu_star)
    report = compute_report(
        aggregate, cfg.p_list, checkpoints=log_spaced_checkpoints(cfg.T, cfg.checkpoints)
    )
    diagnostics = [
        RunDiagnostics(
            run=r,
            seed=(cfg.master_seed, r),
            t_phase1=tr.t_phase1,
            tau_reported=tr.tau_reported,
            floor_ratio=tr.floor_ratio,
        )
        for r, tr in enumerate(traces)
    ]
    result = ExperimentResult(
        config=cfg,
        instance=env,
        report=report,
        aggregate=aggregate,
        diagnostics=diagnostics,
        wall_ms=wall_ms,
        traces=traces if keep_traces else [],
    )
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def format_p(p: float) -> str:
    """Minimal decimal form of p for column names: -1.5, 0.5, 1, 0."""
    if p == int(p):
        return str(int(p))
    return repr(p)


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def report_csv_lines(report: RegretReport, label: str | None = None) -> list[str]:
    cols = ["t", "mean_expected_reward", "avg_regret", "nash_regret"]
    cols += [f"p_regret_{format_p(p)}" for p in report.p_list]
    header = ("algo," if label is not None else "") + ",".join(cols)
    lines = [header]
    for i, t in enumerate(report.checkpoints):
        row = [
            str(int(t)),
            _fmt(report.mean_expected_reward[i]),
            _fmt(report.avg_regret[i]),
            _fmt(report.nash_regret[i]),
        ]
        row += [_fmt(report.p_regret[p][i]) for p in report.p_list]
        if label is not None:
            row = [label] + row
        lines.append(",".join(row))
    return lines


def write_outputs(result: ExperimentResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text("\n".join(report_csv_lines(result.report)) + "\n")
    diagnostics = {"runs": [dg.to_doc() for dg in result.diagnostics]}
    (out / "diagnostics.json").write_text(json.dumps(diagnostics, sort_keys=True, indent=2) + "\n")
    # Wall-clock lives in its own file: it is the one non-deterministic output.
    timings = {
        "runs": [{"run": r, "wall_ms": ms} for r, ms in enumerate(result.wall_ms)],
        "total_wall_ms": float(sum(result.wall_ms)),
    }
    (out / "timings.json").write_text(json.dumps(timings, sort_keys=True, indent=2) + "\n")
    (out / "instance.json").write_text(result.instance.to_json() + "\n")


# ---------------------------------------------------------------------------
# Multi-config comparison
# ---------------------------------------------------------------------------

def _shared_spec(cfg: ExperimentConfig) -> tuple:
    return (
        json.dumps(cfg.generator, sort_keys=True),
        json.dumps(cfg.instance, sort_keys=True),
        cfg.T,
        cfg.runs,
        cfg.master_seed,
        cfg.checkpoints,
        cfg.sigma,
        cfg.p_list,
    )


def compare(cfgs: list[ExperimentConfig], out_dir=None) -> dict[str, ExperimentResult]:
    """Run several configs on the same instance and seed schedule.

    Entries must agree on the instance spec, T, runs, master_seed,
    checkpoints and p_list; they may differ in algorithm, fairness order,
    alpha, and stopping overrides.  Emits one combined CSV with a leading
    label column (default label: the algo name, which must then be unique).
    """
    if not cfgs:
        raise ConfigError("compare needs at least one experiment")
    base = _shared_spec(cfgs[0])
    for cfg in cfgs[1:]:
        if _shared_spec(cfg) != base:
            raise ConfigError(
                "compare entries must share instance spec, T, runs, master_seed, "
                "checkpoints and p_list"
            )
    labels = [cfg.label or cfg.algo for cfg in cfgs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"compare labels must be unique, got {labels}")

    results: dict[str, ExperimentResult] = {}
    all_lines: list[str] = []
    for label, cfg in zip(labels, cfgs):
        res = run_experiment(cfg)
        results[label] = res
        lines = report_csv_lines(res.report, label=label)
        if not all_lines:
            all_lines.append(lines[0])
        all_lines.extend(lines[1:])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.csv").write_text("\n".join(all_lines) + "\n")
        for label, res in results.items():
            write_outputs(res, out / "entries" / label)
    return results


def parse_compare_config(doc: dict) -> list[ExperimentConfig]:
    if not isinstance(doc, dict) or set(doc) != {"experiments"}:
        raise ConfigError("compare config must be an object with a single 'experiments' list")
    entries = doc["experiments"]
    if not isinstance(entries, list) or not entries:
        raise ConfigError("'experiments' must be a nonempty list")
    return [parse_config(e) for e in entries]
