"""Batched linear bandit experts: ridge updates and per-step selection rules.

The expert keeps a ridge regression of rewards on chosen contexts.  Within an
episode the parameters are frozen; between episodes ``ridge_update`` folds in
the episode's (context, reward) batch.  Three selection modes share the same
scoring pieces:

* ``ucb`` — greedy score plus ``alpha`` times the ridge uncertainty bonus;
* ``ts_full`` — a fresh parameter draw N(theta, alpha^2 psi^{-1}) per step;
* ``ts_reparam`` — the bonus form ``greedy + alpha * bonus * z`` with one
  shared standard-normal ``z`` per step, i.e. a single scalar couples all
  candidates of that step.

Ties always resolve to the lowest candidate index.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .history import EvolutionHistory, HistoryMeta
from .linalg import SpdMatrix, make_rng
from .synthenv import gen_phase, sample_ol_reward

__all__ = [
    "MODES",
    "CandidateSet",
    "PolicyState",
    "ridge_update",
    "ucb_scores",
    "select_ucb",
    "select_ts_full",
    "select_ts_reparam",
    "ts_z_draws",
    "ts_xi_draws",
    "simulate_online",
    "run_online_phase",
    "greedy_choices",
    "run_batch_test_phase",
]

MODES = ("ucb", "ts_full", "ts_reparam")


@dataclass(frozen=True)
class CandidateSet:
    """Contexts offered at one step: ``contexts`` has shape (M, d), M >= 2."""

    contexts: np.ndarray
    episode: int = 0
    step: int = 0

    def __post_init__(self):
        c = np.asarray(self.contexts, dtype=np.float64)
        if c.ndim != 2:
            raise ValueError(f"contexts must be 2-D (M, d), got ndim={c.ndim}")
        if c.shape[0] < 2:
            raise ValueError(f"need at least 2 candidates, got {c.shape[0]}")
        if not np.isfinite(c).all():
            raise ValueError("contexts contain non-finite entries")
        object.__setattr__(self, "contexts", c)

    @property
    def M(self):
        return self.contexts.shape[0]

    @property
    def d(self):
        return self.contexts.shape[1]


@dataclass(frozen=True, eq=False)
class PolicyState:
    """Frozen ridge state: theta, Gram accumulator phi, response accumulator b_vec."""

    theta: np.ndarray
    phi: np.ndarray
    b_vec: np.ndarray
    lam: float
    alpha: float
    episode_counter: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        d = self.theta.shape[0]
        if self.phi.shape != (d, d) or self.b_vec.shape != (d,):
            raise ValueError("inconsistent state shapes")

    @classmethod
    def fresh(cls, d, lam=1.0, alpha=0.4):
        """Episode-1 state: zero parameters, so selection is bonus-driven."""
        return cls(np.zeros(d), np.zeros((d, d)), np.zeros(d), lam, alpha)

    @property
    def d(self):
        return self.theta.shape[0]

    @cached_property
    def psi(self):
        """Regularized design matrix ``lam * I + phi`` with its cached factor."""
        return SpdMatrix(self.lam * np.eye(self.d) + self.phi)


def ridge_update(state, s_matrix, rewards):
    """Fold one episode's chosen contexts and rewards into the ridge state."""
    s = np.asarray(s_matrix, dtype=np.float64)
    r = np.asarray(rewards, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != state.d:
        raise ValueError(f"s_matrix must have shape (B, {state.d})")
    if r.shape != (s.shape[0],):
        raise ValueError(f"rewards must have shape ({s.shape[0]},)")
    if not (np.isfinite(s).all() and np.isfinite(r).all()):
        raise ValueError("update data contains non-finite entries")
    phi = state.phi + s.T @ s
    b_vec = state.b_vec + s.T @ r
    psi = SpdMatrix(state.lam * np.eye(state.d) + phi)
    new = PolicyState(psi.solve(b_vec), phi, b_vec, state.lam, state.alpha,
                      state.episode_counter + 1)
    new.__dict__["psi"] = psi  # seed the cache; the factor is already computed
    return new


def _contexts_of(cand):
    return cand.contexts if isinstance(cand, CandidateSet) else np.asarray(cand, dtype=np.float64)


def _bonus(state, contexts):
    q = state.psi.solve(contexts.T)
    return np.sqrt(np.maximum(np.einsum("md,dm->m", contexts, q), 0.0))


def ucb_scores(state, candidate_set):
    """Per-candidate scores ``<theta, s> + alpha * sqrt(s' psi^{-1} s)``."""
    c = _contexts_of(candidate_set)
    return c @ state.theta + state.alpha * _bonus(state, c)


def select_ucb(state, candidate_set):
    return int(np.argmax(ucb_scores(state, candidate_set)))


def _ts_parameter_draw(state, xi):
    """theta + alpha * F^{-1} xi where F'F = psi, so the draw has cov alpha^2 psi^{-1}."""
    c, lower = state.psi.cho
    if lower:
        sol = sla.solve_triangular(c, xi, lower=True, trans="T", check_finite=False)
    else:
        sol = sla.solve_triangular(c, xi, lower=False, check_finite=False)
    return state.theta + state.alpha * np.asarray(sol).T


def select_ts_full(state, candidate_set, rng):
    """Thompson sampling with a full parameter draw N(theta, alpha^2 psi^{-1})."""
    c = _contexts_of(candidate_set)
    if state.alpha == 0:
        theta_t = state.theta
    else:
        theta_t = _ts_parameter_draw(state, rng.standard_normal(state.d))
    return int(np.argmax(c @ theta_t))


def select_ts_reparam(state, candidate_set, rng):
    """Single-scalar Thompson sampling: one shared z scales the bonus for all candidates."""
    c = _contexts_of(candidate_set)
    z = float(rng.standard_normal())
    return int(np.argmax(c @ state.theta + state.alpha * _bonus(state, c) * z))


def ts_z_draws(seed, n_episodes, n_steps):
    """The (N, B) shared-scalar stream a seed-derived ``ts_reparam`` run uses."""
    return make_rng(seed, "ts-z").standard_normal((n_episodes, n_steps))


def ts_xi_draws(seed, n_episodes, n_steps, d):
    """The (N, B, d) parameter-noise stream a seed-derived ``ts_full`` run uses."""
    return make_rng(seed, "ts-xi").standard_normal((n_episodes, n_steps, d))


def simulate_online(data, mode, alpha, lam, reward_fn, z_draws=None, ts_rng=None):
    """Run the batched expert over contexts ``data`` of shape (N, B, M, d).

    ``reward_fn(chosen_contexts, episode_index)`` maps the (B, d) chosen
    contexts of an episode to its (B,) rewards.  For the Thompson modes the
    selection noise comes from ``z_draws`` (shape (N, B) for ``ts_reparam``,
    (N, B, d) for ``ts_full``) or is drawn from ``ts_rng``.

    Returns ``(choices, rewards, states, final_state)`` where ``states[n]``
    is the policy that acted in episode ``n`` and ``final_state`` includes
    the last episode's update.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 4:
        raise ValueError(f"data must be 4-D (N,B,M,d), got ndim={data.ndim}")
    n_ep, n_st, m, d = data.shape
    if mode != "ucb" and z_draws is None:
        if ts_rng is None:
            raise ValueError(f"mode {mode!r} needs z_draws or ts_rng")
        shape = (n_ep, n_st) if mode == "ts_reparam" else (n_ep, n_st, d)
        z_draws = ts_rng.standard_normal(shape)

    state = PolicyState.fresh(d, lam=lam, alpha=alpha)
    choices = np.empty((n_ep, n_st), dtype=np.int64)
    rewards = np.empty((n_ep, n_st), dtype=np.float64)
    states = []
    for n in range(n_ep):
        states.append(state)
        cand = data[n]
        if mode == "ts_full":
            thetas = _ts_parameter_draw(state, z_draws[n].T) if alpha > 0 else state.theta
            scores = np.einsum("bmd,bd->bm", cand, np.broadcast_to(thetas, (n_st, d)))
        else:
            greedy = cand @ state.theta
            flat = cand.reshape(n_st * m, d)
            q = state.psi.solve(flat.T)
            bonus = np.sqrt(np.maximum((flat * q.T).sum(axis=1), 0.0)).reshape(n_st, m)
            if mode == "ucb":
                scores = greedy + alpha * bonus
            else:
                scores = greedy + alpha * bonus * z_draws[n][:, None]
        picks = np.argmax(scores, axis=1)
        chosen = np.take_along_axis(cand, picks[:, None, None], axis=1)[:, 0, :]
        choices[n] = picks
        rewards[n] = reward_fn(chosen, n)
        state = ridge_update(state, chosen, rewards[n])
    return choices, rewards, states, state


def _env_digest(spec):
    return hashlib.sha256(np.asarray(spec.w_reward, dtype=np.float64).tobytes()).hexdigest()[:16]


def run_online_phase(spec, mode, n_episodes, n_steps, rng=None, alpha=0.4, lam=1.0):
    """Generate an online phase and run the expert over it.

    With ``rng=None`` (the normal path) every stream is derived from
    ``spec.seed`` under a fixed key, which is what lets evaluation code
    re-create the expert's Thompson draws from the history metadata alone.
    Passing an explicit ``rng`` draws everything from that one stream instead.

    Returns ``(history, final_state, states)``: the privileged history (with
    rewards), the post-run policy, and the per-episode acting policies.
    """
    if rng is None:
        data = gen_phase(spec, "OL", n_episodes, n_steps, make_rng(spec.seed, "ol-data"))
        reward_rng = make_rng(spec.seed, "ol-reward")
        if mode == "ts_reparam":
            z = ts_z_draws(spec.seed, n_episodes, n_steps)
        elif mode == "ts_full":
            z = ts_xi_draws(spec.seed, n_episodes, n_steps, spec.d)
        else:
            z = None
    else:
        data = gen_phase(spec, "OL", n_episodes, n_steps, rng)
        reward_rng = rng
        if mode == "ts_reparam":
            z = rng.standard_normal((n_episodes, n_steps))
        elif mode == "ts_full":
            z = rng.standard_normal((n_episodes, n_steps, spec.d))
        else:
            z = None

    def reward_fn(chosen, _n):
        return sample_ol_reward(spec, chosen, reward_rng)

    choices, rewards, states, final = simulate_online(
        data.episodes, mode, alpha, lam, reward_fn, z_draws=z)
    meta = HistoryMeta(d=spec.d, M=spec.M, N=n_episodes, B=n_steps, mode=mode,
                       alpha=alpha, lam=lam, env_seed=spec.seed, env_digest=_env_digest(spec))
    hist = EvolutionHistory(meta, data.episodes, choices, rewards)
    return hist, final, states


def greedy_choices(theta, contexts):
    """Argmax of ``<theta, s>`` along the candidate axis of (..., M, d) contexts."""
    scores = np.asarray(contexts, dtype=np.float64) @ np.asarray(theta, dtype=np.float64)
    return np.argmax(scores, axis=-1)


def run_batch_test_phase(theta, bt_data):
    """Greedy selection under fixed ``theta`` over the test phase.

    ``bt_data`` may be a list of :class:`CandidateSet`, a
    :class:`~invbandit.synthenv.PhaseData`, or a contexts array (..., M, d).
    Returns chosen indices (a list for list input, an index array otherwise).
    """
    if isinstance(bt_data, (list, tuple)):
        if not bt_data:
            raise ValueError("bt_data is empty")
        return [int(greedy_choices(theta, _contexts_of(cs))) for cs in bt_data]
    episodes = bt_data.episodes if hasattr(bt_data, "episodes") else np.asarray(bt_data)
    if episodes.size == 0:
        raise ValueError("bt_data is empty")
    return greedy_choices(theta, episodes)
