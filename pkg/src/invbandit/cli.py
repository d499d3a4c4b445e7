"""Experiment orchestration: config parsing and the five subcommands.

``simulate`` writes expert logs, ``invert`` recovers parameters from a
reward-free log, ``evaluate`` scores a parameter file, ``ablate`` drives the
full run matrix in memory, and ``report`` aggregates metric CSVs into
mean±std tables.

Config files are INI: section per component, every default matching the
standard synthetic setup, so an empty file (or no ``--config``) reproduces
the headline configuration.  Metric CSVs are deterministic given seeds;
wall-clock timings go to a separate ``timings.csv`` so reruns stay
byte-identical.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evalkit
from .bandit import greedy_choices, run_online_phase
from .baselines import BayesianIrl, BehaviorCloning
from .evalkit import (ExpertConfig, MetricReport, bt_avg_reward, bt_fitness,
                      format_mean_std, ol_fitness)
from .history import read_history, read_phase, strip_rewards, truncate, write_history, write_phase
from .ibcb import EstimationError, IbcbEstimator, dump_constraints, mode_for_expert
from .linalg import derive_seed, make_rng
from .synthenv import OOD_DEFAULT_MEAN, EnvSpec, gen_phase, sample_env

__all__ = ["ExperimentConfig", "load_config", "simulate_log", "ablate_matrix", "main"]

_COLUMNS_DOC = (
    "metrics.csv columns: " + ",".join(evalkit.METRIC_COLUMNS) + "\n"
    "timings.csv columns: " + ",".join(evalkit.TIMING_COLUMNS) + "\n"
    "The 'seed' column is log_index * 1000 + evaluation_seed_index.\n"
    "ol_fitness is empty for algorithms that recover no reward parameters (bc)."
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; defaults reproduce the headline setup."""

    # environment
    d: int = 10
    M: int = 10
    sigma_s: float = 0.05
    reward_link: str = "sigmoid"
    noise_std: float = 0.0
    dup: int = 0
    ood: bool = False
    ood_mean: float = OOD_DEFAULT_MEAN
    # expert
    expert_mode: str = "ucb"
    expert_alpha: float = 0.4
    expert_lam: float = 1.0
    # phases
    n_ol: int = 20
    b_ol: int = 1000
    n_bt: int = 20
    b_bt: int = 1000
    # inverse estimator
    ibcb_alpha: float = 1.0
    ibcb_alpha_list: tuple = (1.0,)
    ibcb_epsilon: float = 0.01
    # baselines
    bc_learning_rate: float = 0.5
    bc_l2_reg: float = 1e-4
    bc_max_iter: int = 1_000_000
    bc_tol: float = 1e-8
    birl_burn_in: int = 10000
    birl_iterations: int = 10000
    birl_thin: int = 10
    birl_proposal_std: float = 0.05
    birl_beta: float = 5.0
    birl_prior_std: float = 1.0
    # ablation axes (cross product)
    noise_list: tuple = (0.0,)
    dup_list: tuple = (0,)
    ce_list: tuple = (1.0,)
    algorithms: tuple = ("expert", "ibcb", "bc", "birl")
    # seeds
    n_logs: int = 5
    n_seeds_per_log: int = 5
    base_seed: int = 0

    def __post_init__(self):
        for name in ("ibcb_alpha_list", "noise_list", "dup_list", "ce_list", "algorithms"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")


def _split_list(raw, cast):
    return tuple(cast(tok) for tok in raw.replace(",", " ").split())


def load_config(path=None, seed=None, linear_link=False):
    """Build an :class:`ExperimentConfig` from an INI file plus flag overrides."""
    cp = configparser.ConfigParser()
    if path is not None:
        read = cp.read(path)
        if not read:
            raise FileNotFoundError(f"config file not found: {path}")

    def get(section, key, cast, default):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if cast in (tuple,):
            raise AssertionError("use explicit list casts")
        return cast(raw)

    base = ExperimentConfig()
    cfg = ExperimentConfig(
        d=get("env", "d", int, base.d),
        M=get("env", "m", int, base.M),
        sigma_s=get("env", "sigma_s", float, base.sigma_s),
        reward_link="linear" if linear_link else get("env", "reward_link", str, base.reward_link),
        noise_std=get("env", "noise_std", float, base.noise_std),
        dup=get("env", "dup", int, base.dup),
        ood=get("env", "ood", bool, base.ood),
        ood_mean=get("env", "ood_mean", float, base.ood_mean),
        expert_mode=get("expert", "mode", str, base.expert_mode),
        expert_alpha=get("expert", "alpha", float, base.expert_alpha),
        expert_lam=get("expert", "lambda", float, base.expert_lam),
        n_ol=get("phases", "n_ol", int, base.n_ol),
        b_ol=get("phases", "b_ol", int, base.b_ol),
        n_bt=get("phases", "n_bt", int, base.n_bt),
        b_bt=get("phases", "b_bt", int, base.b_bt),
        ibcb_alpha=get("ibcb", "alpha", float, base.ibcb_alpha),
        ibcb_alpha_list=(_split_list(cp.get("ibcb", "alpha_list"), float)
                         if cp.has_option("ibcb", "alpha_list") else base.ibcb_alpha_list),
        ibcb_epsilon=get("ibcb", "epsilon_margin", float, base.ibcb_epsilon),
        bc_learning_rate=get("bc", "learning_rate", float, base.bc_learning_rate),
        bc_l2_reg=get("bc", "l2_reg", float, base.bc_l2_reg),
        bc_max_iter=get("bc", "max_iter", int, base.bc_max_iter),
        bc_tol=get("bc", "tol", float, base.bc_tol),
        birl_burn_in=get("birl", "burn_in", int, base.birl_burn_in),
        birl_iterations=get("birl", "iterations", int, base.birl_iterations),
        birl_thin=get("birl", "thin", int, base.birl_thin),
        birl_proposal_std=get("birl", "proposal_std", float, base.birl_proposal_std),
        birl_beta=get("birl", "beta_inv_temp", float, base.birl_beta),
        birl_prior_std=get("birl", "prior_std", float, base.birl_prior_std),
        noise_list=(_split_list(cp.get("ablate", "noise_list"), float)
                    if cp.has_option("ablate", "noise_list") else base.noise_list),
        dup_list=(_split_list(cp.get("ablate", "dup_list"), int)
                  if cp.has_option("ablate", "dup_list") else base.dup_list),
        ce_list=(_split_list(cp.get("ablate", "ce_list"), float)
                 if cp.has_option("ablate", "ce_list") else base.ce_list),
        algorithms=(_split_list(cp.get("ablate", "algorithms"), str)
                    if cp.has_option("ablate", "algorithms") else base.algorithms),
        n_logs=get("seeds", "n_logs", int, base.n_logs),
        n_seeds_per_log=get("seeds", "n_seeds_per_log", int, base.n_seeds_per_log),
        base_seed=seed if seed is not None else get("seeds", "base_seed", int, base.base_seed),
    )
    return cfg


@dataclass(frozen=True, eq=False)
class SimResult:
    env: EnvSpec
    hist: object  # privileged EvolutionHistory (with rewards)
    final_state: object
    bt_data: object


def log_env(cfg, log_index, noise_std=None, dup=None):
    """The environment of one log; noise/dup may be overridden per ablation cell."""
    return sample_env(
        derive_seed(cfg.base_seed, "log", log_index),
        d=cfg.d, M=cfg.M, sigma_s=cfg.sigma_s, reward_link=cfg.reward_link,
        noise_std=cfg.noise_std if noise_std is None else noise_std,
        dup=cfg.dup if dup is None else dup,
        ood_first_mean_bt=cfg.ood_mean if cfg.ood else None)


def simulate_log(cfg, log_index, noise_std=None, dup=None):
    """Run one expert forward: online phase, final policy, test-phase contexts."""
    env = log_env(cfg, log_index, noise_std=noise_std, dup=dup)
    hist, final, _states = run_online_phase(
        env, cfg.expert_mode, cfg.n_ol, cfg.b_ol,
        alpha=cfg.expert_alpha, lam=cfg.expert_lam)
    bt = gen_phase(env, "BT", cfg.n_bt, cfg.b_bt, make_rng(env.seed, "bt-data"))
    return SimResult(env, hist, final, bt)


def _fit_one(cfg, algorithm, sim, train_hist, ibcb_alpha, log_seed):
    """Fit one algorithm on the reward-free training view; returns (theta, seconds)."""
    if algorithm == "expert":
        return sim.final_state.theta, 0.0
    if algorithm == "ibcb":
        est = IbcbEstimator(alpha=ibcb_alpha, lam=cfg.expert_lam,
                            mode=mode_for_expert(cfg.expert_mode),
                            epsilon_margin=cfg.ibcb_epsilon)
        est.fit(train_hist)
        return est.theta_, est.train_time_
    if algorithm == "bc":
        est = BehaviorCloning(cfg.bc_learning_rate, cfg.bc_l2_reg,
                              cfg.bc_max_iter, cfg.bc_tol)
        est.fit(train_hist)
        return est.w_, est.train_time_
    if algorithm == "birl":
        est = BayesianIrl(cfg.birl_burn_in, cfg.birl_iterations, cfg.birl_thin,
                          cfg.birl_proposal_std, cfg.birl_beta,
                          cfg.birl_prior_std, seed=log_seed)
        est.fit(train_hist)
        return est.theta_, est.train_time_
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _cell_rows(cfg, cell):
    """All metric rows of one ablation cell: fits per log, rewards per seed."""
    noise_std, dup, ce_rate, ibcb_alpha = cell
    rows = []
    for log_index in range(cfg.n_logs):
        sim = simulate_log(cfg, log_index, noise_std=noise_std, dup=dup)
        train_hist = strip_rewards(sim.hist)
        if ce_rate < 1.0:
            train_hist = truncate(train_hist, ce_rate)
        expert_cfg = ExpertConfig.from_meta(sim.hist.meta)
        for algorithm in cfg.algorithms:
            theta, seconds = _fit_one(cfg, algorithm, sim, train_hist,
                                      ibcb_alpha, sim.env.seed)
            olf = None
            if algorithm != "bc":  # bc recovers no reward parameters
                olf = ol_fitness(theta, sim.hist.candidates, expert_cfg, sim.hist.choices)
            btf = bt_fitness(theta, sim.final_state.theta, sim.bt_data)
            picks = greedy_choices(theta, sim.bt_data.episodes)
            for s in range(cfg.n_seeds_per_log):
                rng = make_rng(sim.env.seed, "bt-reward", algorithm, s)
                rows.append(MetricReport(
                    algorithm=algorithm, seed=log_index * 1000 + s,
                    noise_std=noise_std, dup=dup, ce_rate=ce_rate, alpha=ibcb_alpha,
                    bt_fitness=btf,
                    bt_avg_reward=bt_avg_reward(picks, sim.bt_data, sim.env, rng),
                    ol_fitness=olf, train_time_seconds=seconds))
    return rows


def _cell_worker(payload):
    cfg_dict, cell = payload
    return _cell_rows(ExperimentConfig(**cfg_dict), cell)


def ablate_matrix(cfg, jobs=1):
    """Metric rows for the cross product noise x dup x ce x ibcb-alpha."""
    cells = [(n, k, ce, a)
             for n in cfg.noise_list for k in cfg.dup_list
             for ce in cfg.ce_list for a in cfg.ibcb_alpha_list]
    if jobs > 1 and len(cells) > 1:
        payloads = [(dataclasses.asdict(cfg), cell) for cell in cells]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_cell = list(pool.map(_cell_worker, payloads))
    else:
        per_cell = [_cell_rows(cfg, cell) for cell in cells]
    rows = [row for chunk in per_cell for row in chunk]
    rows.sort(key=lambda r: (r.noise_std, r.dup, r.ce_rate, r.alpha, r.algorithm, r.seed))
    return rows


# ---------------------------------------------------------------------------
# subcommands


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    cfg = load_config(args.config, seed=args.seed, linear_link=args.linear_link)
    out = _out_dir(args)
    for k in range(cfg.n_logs):
        sim = simulate_log(cfg, k)
        log_dir = out / f"log{k:02d}"
        log_dir.mkdir(parents=True, exist_ok=True)
        write_history(sim.hist, log_dir / "history_priv.jsonl")
        write_history(strip_rewards(sim.hist), log_dir / "history.jsonl")
        write_phase(sim.bt_data, log_dir / "bt_data.jsonl")
        env_dict = dataclasses.asdict(sim.env)
        env_dict["ood_first_mean_bt"] = sim.env.ood_first_mean_bt
        (log_dir / "env.json").write_text(json.dumps(env_dict, indent=1) + "\n")
        (log_dir / "expert.json").write_text(json.dumps({
            "mode": cfg.expert_mode, "alpha": cfg.expert_alpha, "lam": cfg.expert_lam,
            "env_seed": sim.env.seed,
            "theta_final": [float(v) for v in sim.final_state.theta]}, indent=1) + "\n")
        print(f"log{k:02d}: N={cfg.n_ol} episodes x B={cfg.b_ol} steps, "
              f"mode={cfg.expert_mode}, seed={sim.env.seed}")
    return 0


def cmd_invert(args):
    cfg = load_config(args.config, seed=args.seed, linear_link=args.linear_link)
    hist = strip_rewards(read_history(args.history))
    out_path = Path(args.params_out) if args.params_out else (
        Path(args.history).parent / f"params_{args.method}.json")
    t0 = time.perf_counter()
    payload = {"algorithm": args.method}
    try:
        if args.method == "ibcb":
            est = IbcbEstimator(alpha=args.alpha if args.alpha is not None else cfg.ibcb_alpha,
                                lam=cfg.expert_lam, mode=mode_for_expert(hist.meta.mode),
                                epsilon_margin=cfg.ibcb_epsilon)
            est.fit(hist)
            if args.dump_constraints:
                from .ibcb import build_constraints
                dump_constraints(build_constraints(hist, est.lam, est.alpha, est.mode,
                                                   est.epsilon_margin),
                                 args.dump_constraints)
            payload.update(theta=[float(v) for v in est.theta_],
                           alpha=float(est.alpha),
                           status=est.solution_.status.value,
                           n_constraints=int(est.n_constraints_),
                           train_time_seconds=est.train_time_)
        elif args.method == "bc":
            est = BehaviorCloning(cfg.bc_learning_rate, cfg.bc_l2_reg,
                                  cfg.bc_max_iter, cfg.bc_tol)
            est.fit(hist)
            payload.update(w=[float(v) for v in est.w_], bias=float(est.bias_),
                           iterations=int(est.model_.iterations),
                           train_time_seconds=est.train_time_)
        elif args.method == "birl":
            est = BayesianIrl(cfg.birl_burn_in, cfg.birl_iterations, cfg.birl_thin,
                              cfg.birl_proposal_std, cfg.birl_beta, cfg.birl_prior_std,
                              seed=hist.meta.env_seed)
            est.fit(hist)
            payload.update(theta=[float(v) for v in est.theta_],
                           acceptance_rate=float(est.acceptance_rate_),
                           train_time_seconds=est.train_time_)
        else:
            print(f"invert: unknown method {args.method!r}", file=sys.stderr)
            return 2
    except (ValueError, EstimationError) as exc:
        print(f"invert: {args.method} on {args.history} failed: {exc}", file=sys.stderr)
        return 2
    out_path.write_text(json.dumps(payload, indent=1) + "\n")
    print(f"{args.method}: wrote {out_path} "
          f"({time.perf_counter() - t0:.2f}s wall, "
          f"{payload['train_time_seconds']:.2f}s train)")
    return 0


def cmd_evaluate(args):
    log_dir = Path(args.log_dir)
    params = json.loads(Path(args.params).read_text())
    env_dict = json.loads((log_dir / "env.json").read_text())
    env_dict["mu_list"] = tuple(env_dict["mu_list"])
    env_dict["w_reward"] = tuple(env_dict["w_reward"])
    env = EnvSpec(**env_dict)
    expert = json.loads((log_dir / "expert.json").read_text())
    hist = read_history(log_dir / "history.jsonl")
    bt = read_phase(log_dir / "bt_data.jsonl")

    algorithm = params["algorithm"]
    theta = np.asarray(params.get("theta", params.get("w")), dtype=np.float64)
    theta_expert = np.asarray(expert["theta_final"], dtype=np.float64)
    olf = None
    if algorithm != "bc" and "theta" in params:
        olf = ol_fitness(theta, hist.candidates, ExpertConfig.from_meta(hist.meta),
                         hist.choices)
    picks = greedy_choices(theta, bt.episodes)
    report = MetricReport(
        algorithm=algorithm, seed=args.seed or 0,
        noise_std=env.noise_std, dup=env.dup, ce_rate=1.0,
        alpha=float(params.get("alpha", 0.0)),
        bt_fitness=bt_fitness(theta, theta_expert, bt),
        bt_avg_reward=bt_avg_reward(picks, bt, env,
                                    make_rng(env.seed, "bt-reward", algorithm,
                                             args.seed or 0)),
        ol_fitness=olf,
        train_time_seconds=float(params.get("train_time_seconds", 0.0)))
    out_csv = Path(args.metrics_out) if args.metrics_out else log_dir / f"metrics_{algorithm}.csv"
    evalkit.write_metrics_csv([report], out_csv)
    cells = {c: getattr(report, c) for c in evalkit.METRIC_COLUMNS}
    print(", ".join(f"{k}={'' if v is None else v}" for k, v in cells.items()))
    return 0


def cmd_ablate(args):
    cfg = load_config(args.config, seed=args.seed, linear_link=args.linear_link)
    out = _out_dir(args)
    rows = ablate_matrix(cfg, jobs=args.jobs)
    evalkit.write_metrics_csv(rows, out / "metrics.csv")
    evalkit.write_timings_csv(rows, out / "timings.csv")
    print(f"wrote {len(rows)} rows to {out / 'metrics.csv'} (timings separate)")
    return 0


def cmd_report(args):
    rows = evalkit.read_csv_rows(Path(args.dir) / "metrics.csv")
    if not rows:
        print("report: no metric rows found", file=sys.stderr)
        return 2
    groups = {}
    for row in rows:
        key = (row["algorithm"], row["noise_std"], row["dup"], row["ce_rate"], row["alpha"])
        groups.setdefault(key, []).append(row)

    header = ["algorithm", "noise_std", "dup", "ce_rate", "alpha",
              "ol_fitness", "bt_fitness", "bt_avg_reward"]
    out_rows = []
    for key in sorted(groups):
        bucket = groups[key]
        cells = list(key)
        for metric in ("ol_fitness", "bt_fitness", "bt_avg_reward"):
            vals = [float(r[metric]) for r in bucket if r[metric] != ""]
            cells.append(format_mean_std(vals) if vals else "")
        out_rows.append(cells)

    report_csv = Path(args.dir) / "report.csv"
    with open(report_csv, "w") as fh:
        fh.write(",".join(header) + "\n")
        for cells in out_rows:
            fh.write(",".join(cells) + "\n")
    md_lines = ["| " + " | ".join(header) + " |",
                "|" + "---|" * len(header)]
    md_lines += ["| " + " | ".join(cells) + " |" for cells in out_rows]
    (Path(args.dir) / "report.md").write_text("\n".join(md_lines) + "\n")
    print("\n".join(md_lines))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="invbandit",
        description="Batched-bandit expert simulation and inverse parameter recovery.",
        epilog=_COLUMNS_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default=None):
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--seed", type=int, default=None, help="base seed override")
        p.add_argument("--linear-link", action="store_true",
                       help="use the linear reward link (test mode)")
        if out_default is not None:
            p.add_argument("--out", default=out_default, help="output directory")

    p = sub.add_parser("simulate", help="run the expert forward and write logs")
    common(p, out_default="runs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("invert", help="recover parameters from a reward-free log")
    common(p)
    p.add_argument("--history", required=True, help="history file (rewards are stripped)")
    p.add_argument("--method", default="ibcb", choices=("ibcb", "bc", "birl"))
    p.add_argument("--alpha", type=float, default=None, help="ibcb bonus coefficient")
    p.add_argument("--params-out", default=None, help="parameter JSON path")
    p.add_argument("--dump-constraints", default=None,
                   help="also write the ibcb constraint system here")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("evaluate", help="score a parameter file against a log directory")
    p.add_argument("--params", required=True, help="parameter JSON from invert")
    p.add_argument("--log-dir", required=True, help="directory written by simulate")
    p.add_argument("--seed", type=int, default=0, help="evaluation seed index")
    p.add_argument("--metrics-out", default=None, help="metrics CSV path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the full matrix and write metrics.csv")
    common(p, out_default="runs")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers over cells")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="aggregate metrics.csv into mean±std tables")
    p.add_argument("--dir", default="runs", help="directory holding metrics.csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
