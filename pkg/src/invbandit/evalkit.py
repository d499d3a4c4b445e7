"""The three evaluation metrics and the replay machinery behind them.

* ``ol_fitness`` — re-runs a fresh expert over the logged online candidate
  sets, but rewards come from the noiseless linear model ``<theta_hat, s>``
  instead of the real environment; the score is the fraction of steps whose
  choice matches the reference log.  Thompson replays reuse the reference
  run's noise stream (common random numbers), so differences measure
  parameters, not sampling luck.
* ``bt_fitness`` — greedy action agreement between two parameter vectors
  over test-phase candidate sets (scale-invariant by construction).
* ``bt_avg_reward`` — mean Bernoulli reward of the chosen test contexts
  under the true environment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bandit import greedy_choices, simulate_online, ts_xi_draws, ts_z_draws
from .linalg import make_rng
from .synthenv import sample_bt_reward

__all__ = [
    "ExpertConfig",
    "MetricReport",
    "METRIC_COLUMNS",
    "TIMING_COLUMNS",
    "ol_fitness",
    "bt_fitness",
    "bt_avg_reward",
    "write_metrics_csv",
    "write_timings_csv",
    "read_csv_rows",
    "format_mean_std",
]


@dataclass(frozen=True)
class ExpertConfig:
    """What the replay needs to re-instantiate the expert: mode, alpha, lam, seed."""

    mode: str
    alpha: float
    lam: float
    seed: int

    @classmethod
    def from_meta(cls, meta):
        return cls(mode=meta.mode, alpha=meta.alpha, lam=meta.lam, seed=meta.env_seed)


@dataclass
class MetricReport:
    """One (algorithm, cell, seed) evaluation row; ``ol_fitness`` may be absent."""

    algorithm: str
    seed: int
    noise_std: float
    dup: int
    ce_rate: float
    alpha: float
    bt_fitness: float
    bt_avg_reward: float
    ol_fitness: Optional[float] = None
    train_time_seconds: float = 0.0


# fixed CSV column orders; timing lives in its own file so that metric CSVs
# are byte-identical across reruns of the same seed
METRIC_COLUMNS = ("algorithm", "seed", "noise_std", "dup", "ce_rate", "alpha",
                  "ol_fitness", "bt_fitness", "bt_avg_reward")
TIMING_COLUMNS = ("algorithm", "seed", "noise_std", "dup", "ce_rate", "alpha",
                  "train_time_seconds")


def _episodes_of(data):
    if hasattr(data, "episodes"):
        return np.asarray(data.episodes)
    if hasattr(data, "candidates"):
        return np.asarray(data.candidates)
    return np.asarray(data)


def ol_fitness(theta_hat, ol_data, expert_config, reference_choices, noise_std=0.0):
    """Choice-match fraction of a replayed expert fed ``<theta_hat, s>`` rewards.

    ``ol_data`` are the logged online candidate sets; ``reference_choices``
    the original expert's (N, B) choices.  ``noise_std > 0`` adds seeded
    Gaussian reward noise (a sensitivity knob; off by default).
    """
    data = _episodes_of(ol_data)
    ref = np.asarray(reference_choices)
    n_ep, n_st = data.shape[:2]
    if ref.shape != (n_ep, n_st):
        raise ValueError(f"reference choices shape {ref.shape} != {(n_ep, n_st)}")
    theta_hat = np.asarray(theta_hat, dtype=np.float64)

    cfg = expert_config
    if cfg.mode == "ts_reparam":
        z = ts_z_draws(cfg.seed, n_ep, n_st)
    elif cfg.mode == "ts_full":
        z = ts_xi_draws(cfg.seed, n_ep, n_st, data.shape[3])
    else:
        z = None
    if noise_std > 0:
        noise = noise_std * make_rng(cfg.seed, "replay-noise").standard_normal((n_ep, n_st))

        def reward_fn(chosen, n):
            return chosen @ theta_hat + noise[n]
    else:
        def reward_fn(chosen, n):
            return chosen @ theta_hat

    choices, _, _, _ = simulate_online(data, cfg.mode, cfg.alpha, cfg.lam,
                                       reward_fn, z_draws=z)
    return float((choices == ref).mean())


def bt_fitness(theta_hat, theta_expert_final, bt_data):
    """Greedy agreement between two parameter vectors on test candidate sets."""
    episodes = _episodes_of(bt_data)
    a = greedy_choices(theta_hat, episodes)
    b = greedy_choices(theta_expert_final, episodes)
    return float((a == b).mean())


def bt_avg_reward(choices, bt_data, bt_env, rng):
    """Mean Bernoulli reward of the chosen test contexts under ``bt_env``."""
    episodes = _episodes_of(bt_data)
    idx = np.asarray(choices)
    if idx.shape != episodes.shape[:-2]:
        raise ValueError(f"choices shape {idx.shape} != {episodes.shape[:-2]}")
    chosen = np.take_along_axis(episodes, idx[..., None, None], axis=-2)[..., 0, :]
    return float(np.mean(sample_bt_reward(bt_env, chosen, rng)))


def _fmt_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return "%.10g" % value
    return str(value)


def write_metrics_csv(reports, path):
    """Append-free whole-file write of metric rows in ``METRIC_COLUMNS`` order."""
    with open(path, "w") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for r in reports:
            fh.write(",".join(_fmt_cell(getattr(r, c)) for c in METRIC_COLUMNS) + "\n")


def write_timings_csv(reports, path):
    """Wall-clock companion file; kept separate so metric files stay reproducible."""
    with open(path, "w") as fh:
        fh.write(",".join(TIMING_COLUMNS) + "\n")
        for r in reports:
            fh.write(",".join(_fmt_cell(getattr(r, c)) for c in TIMING_COLUMNS) + "\n")


def read_csv_rows(path):
    """Rows of a metrics/timings CSV as dicts (empty strings for absent cells)."""
    import csv

    with open(path) as fh:
        return list(csv.DictReader(fh))


def format_mean_std(values):
    """The reporting format for a cell: mean±std with three decimals."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values to aggregate")
    return f"{arr.mean():.3f}±{arr.std():.3f}"
