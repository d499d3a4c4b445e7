"""Synthetic contextual-bandit environment: contexts, rewards, and corruptions.

An :class:`EnvSpec` pins everything about one environment draw — context
geometry, the hidden reward parameter, link function, noise level, and the
optional log corruptions (duplicated episodes, an out-of-distribution first
candidate in the test phase).  Phases are generated as dense arrays of shape
(episodes, steps, candidates, dim) so the simulation and constraint-building
code can stay vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .linalg import make_rng

__all__ = [
    "DEFAULT_MU",
    "OOD_DEFAULT_MEAN",
    "default_mu",
    "EnvSpec",
    "PhaseData",
    "sample_env",
    "draw_w_reward",
    "gen_phase",
    "reward_mean",
    "sample_ol_reward",
    "sample_bt_reward",
]

# candidate population means: candidate m is drawn around DEFAULT_MU[m] * ones(d)
DEFAULT_MU = (1.0, 0.6, 0.2, -0.2, -0.6, -1.0, -1.4, -1.8, -2.2, -2.6)


def default_mu(m):
    """The arithmetic mean sequence 1.0, 0.6, 0.2, ... continued to ``m`` terms."""
    return tuple((10 - 4 * k) / 10 for k in range(m))

# conventional mean for the out-of-distribution first candidate in the test phase
OOD_DEFAULT_MEAN = 1.4


@dataclass(frozen=True)
class EnvSpec:
    """One fully-specified synthetic environment.

    ``w_reward`` is the hidden linear reward parameter (length ``d``);
    ``ood_first_mean_bt`` replaces candidate 0's population mean in the test
    phase when set (``None`` keeps the test phase in-distribution); ``dup``
    clones the first ``dup`` online episodes over episodes ``dup+1..2*dup``.
    """

    d: int = 10
    M: int = 10
    mu_list: tuple = ()  # empty selects default_mu(M)
    sigma_s: float = 0.05
    w_reward: tuple = ()
    reward_link: str = "sigmoid"
    noise_std: float = 0.0
    ood_first_mean_bt: Optional[float] = None
    dup: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.M < 2:
            raise ValueError("M must be >= 2")
        if not self.mu_list:
            object.__setattr__(self, "mu_list", default_mu(self.M))
        elif len(self.mu_list) != self.M:
            raise ValueError(f"mu_list has {len(self.mu_list)} entries, expected M={self.M}")
        if self.sigma_s < 0:
            raise ValueError("sigma_s must be nonnegative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if self.dup < 0:
            raise ValueError("dup must be nonnegative")
        if self.reward_link not in ("sigmoid", "linear"):
            raise ValueError(f"unknown reward_link {self.reward_link!r}")
        if self.w_reward and len(self.w_reward) != self.d:
            raise ValueError(f"w_reward has {len(self.w_reward)} entries, expected d={self.d}")

    @property
    def w(self):
        if not self.w_reward:
            raise ValueError("w_reward is not set on this EnvSpec")
        return np.asarray(self.w_reward, dtype=np.float64)


@dataclass(frozen=True)
class PhaseData:
    """Contexts for one phase: ``episodes`` has shape (N, B, M, d)."""

    phase: str
    episodes: np.ndarray

    def __post_init__(self):
        if self.phase not in ("OL", "BT"):
            raise ValueError(f"phase must be 'OL' or 'BT', got {self.phase!r}")
        if self.episodes.ndim != 4:
            raise ValueError(f"episodes must be 4-D (N,B,M,d), got ndim={self.episodes.ndim}")

    @property
    def N(self):
        return self.episodes.shape[0]

    @property
    def B(self):
        return self.episodes.shape[1]

    @property
    def M(self):
        return self.episodes.shape[2]

    @property
    def d(self):
        return self.episodes.shape[3]


def draw_w_reward(d, rng):
    """Hidden reward parameter: each coordinate ~ N(0.1, 0.01^2)."""
    return 0.1 + 0.01 * rng.standard_normal(d)


def sample_env(seed, **overrides):
    """Build an :class:`EnvSpec` for ``seed``, drawing ``w_reward`` from it.

    Any EnvSpec field can be overridden; an explicit ``w_reward`` suppresses
    the draw.
    """
    spec = EnvSpec(seed=seed, **{k: v for k, v in overrides.items() if k != "w_reward"})
    if "w_reward" in overrides:
        w = tuple(float(x) for x in overrides["w_reward"])
    else:
        w = tuple(draw_w_reward(spec.d, make_rng(seed, "w-reward")))
    return replace(spec, w_reward=w)


def gen_phase(spec, phase, N, B, rng):
    """Draw phase contexts of shape (N, B, M, d).

    Candidate m is N(mu_m * ones(d), sigma_s^2 I).  In the test phase an OOD
    override replaces candidate 0's mean; in the online phase ``dup > 0``
    copies episodes ``1..dup`` bit-for-bit onto episodes ``dup+1..2*dup``.
    """
    if phase not in ("OL", "BT"):
        raise ValueError(f"phase must be 'OL' or 'BT', got {phase!r}")
    if N < 1 or B < 1:
        raise ValueError("N and B must be >= 1")
    means = np.asarray(spec.mu_list, dtype=np.float64).copy()
    if phase == "BT" and spec.ood_first_mean_bt is not None:
        means[0] = spec.ood_first_mean_bt
    data = means[None, None, :, None] + spec.sigma_s * rng.standard_normal((N, B, spec.M, spec.d))
    if phase == "OL" and spec.dup > 0:
        if spec.dup >= N / 2:
            raise ValueError(f"dup={spec.dup} requires dup < N/2 (N={N})")
        data[spec.dup:2 * spec.dup] = data[:spec.dup]
    return PhaseData(phase, data)


def reward_mean(spec, s):
    """Mean reward of context(s) ``s``: sigmoid(<w, s>) or linear <w, s>."""
    z = np.asarray(s, dtype=np.float64) @ spec.w
    if spec.reward_link == "sigmoid":
        z = expit(z)
    return float(z) if np.ndim(z) == 0 else z

def sample_ol_reward(spec, s, rng):
    """Online-phase reward: mean plus N(0, noise_std^2), unbounded."""
    mean = reward_mean(spec, s)
    noise = spec.noise_std * rng.standard_normal(np.shape(mean))
    out = mean + noise
    return float(out) if np.ndim(out) == 0 else out


def sample_bt_reward(spec, s, rng):
    """Test-phase reward: Bernoulli with success prob clip(mean + noise, 0, 1)."""
    mean = reward_mean(spec, s)
    p = np.clip(mean + spec.noise_std * rng.standard_normal(np.shape(mean)), 0.0, 1.0)
    draw = (rng.random(np.shape(p)) < p).astype(np.int64)
    return int(draw) if np.ndim(draw) == 0 else draw
