"""Inverse estimation: from a reward-free history to the expert's parameters.

The expert's selections reveal inequalities.  When the policy with ridge
state (theta_e, psi_e) chose context ``s*`` over candidate ``s_J`` at some
step of episode ``e``, then under UCB scoring

    <theta_e, s_J - s*>  <=  alpha * (H_e(s*) - H_e(s_J)),

with ``H_e(s) = sqrt(s' psi_e^{-1} s)``.  Because theta_e is itself the ridge
solution ``psi_e^{-1} b_e`` and every reward is bounded away from nothing the
estimator can see, the history is summarized through the final parameter
vector ``theta``: substituting ``theta_e = psi_e^{-1} G_e theta`` (the Gram
``G_e`` of everything the expert had seen before episode ``e``) turns each
revealed preference into one linear row

    (G_e psi_e^{-1} (s_J - s*))' theta  <=  alpha * (H_e(s*) - H_e(s_J)).

Episode 1 contributes no rows (the fresh policy's score is pure bonus and
carries no information about theta).  For Thompson experts the bonus gap is
not identified, so each row instead gets the fixed margin ``-epsilon``,
encoding a strict preference.  The minimum-norm feasible point of the stacked
system is the estimate.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import bandit
from .linalg import SpdMatrix
from .qpsolve import QpSettings, QpStatus, solve_minnorm

__all__ = [
    "EpisodeGeometry",
    "ConstraintSystem",
    "EstimationError",
    "mode_for_expert",
    "replay_psi",
    "build_constraints",
    "estimate",
    "dump_constraints",
    "load_constraints",
    "IbcbEstimator",
]

MODES = ("ucb", "ts")


def mode_for_expert(expert_mode):
    """The constraint mode matching an expert selection mode."""
    if expert_mode == "ucb":
        return "ucb"
    if expert_mode in ("ts_full", "ts_reparam"):
        return "ts"
    raise ValueError(f"unknown expert mode {expert_mode!r}")


@dataclass(frozen=True, eq=False)
class EpisodeGeometry:
    """Episode ``episode`` (1-based): Gram of all prior chosen contexts, and psi."""

    episode: int
    gram_before: np.ndarray
    psi: SpdMatrix


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    """Stacked rows ``a_rows @ theta <= u`` with (episode, step, alt) provenance."""

    a_rows: np.ndarray
    u: np.ndarray
    provenance: np.ndarray
    mode: str
    alpha_ibcb: float
    epsilon_margin: float

    def __post_init__(self):
        if self.a_rows.ndim != 2:
            raise ValueError("a_rows must be 2-D")
        r = self.a_rows.shape[0]
        if self.u.shape != (r,) or self.provenance.shape != (r, 3):
            raise ValueError("inconsistent constraint system shapes")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def n_rows(self):
        return self.a_rows.shape[0]

    @property
    def n_vacuous(self):
        """Rows with all-zero coefficients (identical candidate pairs)."""
        if self.n_rows == 0:
            return 0
        return int((np.abs(self.a_rows).max(axis=1) == 0.0).sum())


class EstimationError(RuntimeError):
    """Raised when the constraint system defeats all solver stages."""


def replay_psi(hist, lam):
    """Reconstruct each episode's prior Gram and regularized design matrix.

    Uses only candidates and choices, so the reward-free view is enough.
    Entry ``e`` (0-based) describes the state the expert acted under in
    episode ``e + 1``.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    m = hist.meta
    chosen = np.take_along_axis(
        hist.candidates, hist.choices[:, :, None, None], axis=2)[:, :, 0, :]
    gram = np.zeros((m.d, m.d))
    eye = lam * np.eye(m.d)
    out = []
    for e in range(m.N):
        out.append(EpisodeGeometry(e + 1, gram.copy(), SpdMatrix(eye + gram)))
        gram = gram + chosen[e].T @ chosen[e]
    return out


def build_constraints(hist, lam, alpha_ibcb, mode="ucb", epsilon_margin=0.01):
    """Turn a history into the stacked inequality system on the final theta.

    One row per (episode >= 2, step, non-chosen candidate).  ``mode`` selects
    the bound: ``"ucb"`` uses the bonus gap scaled by ``alpha_ibcb``;
    ``"ts"`` uses the strict margin ``-epsilon_margin``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if alpha_ibcb <= 0:
        raise ValueError("alpha_ibcb must be positive")
    if epsilon_margin <= 0:
        raise ValueError("epsilon_margin must be positive")
    m = hist.meta
    if m.N < 2:
        raise ValueError("need at least 2 episodes to build constraints")
    if not np.isfinite(hist.candidates).all():
        raise ValueError("history contexts contain non-finite entries")

    geos = replay_psi(hist, lam)
    n_st, n_cand = m.B, m.M
    alt_grid = np.broadcast_to(np.arange(n_cand), (n_st, n_cand))
    step_grid = np.broadcast_to(np.arange(n_st)[:, None], (n_st, n_cand))
    rows_parts, u_parts, prov_parts = [], [], []
    for e in range(1, m.N):
        geo = geos[e]
        cand = hist.candidates[e]
        idx = hist.choices[e]
        chosen = np.take_along_axis(cand, idx[:, None, None], axis=1)[:, 0, :]
        gp = geo.psi.solve(geo.gram_before).T  # = G psi^{-1}, both symmetric
        rows_all = (cand - chosen[:, None, :]) @ gp.T

        mask = np.ones((n_st, n_cand), dtype=bool)
        mask[np.arange(n_st), idx] = False
        if mode == "ucb":
            flat = cand.reshape(n_st * n_cand, m.d)
            q = geo.psi.solve(flat.T)
            bonus = np.sqrt(np.maximum((flat * q.T).sum(axis=1), 0.0)).reshape(n_st, n_cand)
            h_chosen = np.take_along_axis(bonus, idx[:, None], axis=1)
            u_all = alpha_ibcb * (h_chosen - bonus)
            u_parts.append(u_all[mask])
        else:
            u_parts.append(np.full(n_st * (n_cand - 1), -epsilon_margin))
        rows_parts.append(rows_all[mask])
        prov = np.stack([np.full(n_st * (n_cand - 1), e + 1),
                         step_grid[mask], alt_grid[mask]], axis=1)
        prov_parts.append(prov)

    return ConstraintSystem(
        np.concatenate(rows_parts, axis=0),
        np.concatenate(u_parts, axis=0),
        np.concatenate(prov_parts, axis=0).astype(np.int64),
        mode, float(alpha_ibcb), float(epsilon_margin))


def estimate(constraints, settings=None):
    """Minimum-norm theta satisfying the constraint system.

    Infeasible (noisy) systems come back with status ``PENALTY_FALLBACK``;
    only a full solver breakdown raises.
    """
    sol = solve_minnorm(constraints.a_rows, constraints.u, settings)
    if sol.status == QpStatus.FAILED:
        raise EstimationError(
            f"solver failed after all stages: {sol.iterations} iterations, "
            f"max violation {sol.max_violation:.3e}")
    return sol


_FMT = "%.17g"


def dump_constraints(cs, path):
    """Write a constraint system as line-delimited JSON (metadata line first)."""
    with open(path, "w") as fh:
        fh.write(json.dumps({
            "mode": cs.mode, "alpha_ibcb": cs.alpha_ibcb,
            "epsilon_margin": cs.epsilon_margin,
            "rows": int(cs.n_rows), "d": int(cs.a_rows.shape[1])}) + "\n")
        for a, u, p in zip(cs.a_rows, cs.u, cs.provenance):
            fh.write('{"a":[%s],"u":%s,"provenance":[%d,%d,%d]}\n'
                     % (",".join(_FMT % v for v in a), _FMT % u, p[0], p[1], p[2]))


def load_constraints(path):
    """Parse a constraint system written by :func:`dump_constraints`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError("line 1: empty constraints file")
    try:
        meta = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ValueError(f"line 1: invalid JSON: {exc}") from exc
    n_rows, dim = int(meta["rows"]), int(meta["d"])
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n_rows:
        raise ValueError(f"expected {n_rows} rows, found {len(body)}")
    a = np.empty((n_rows, dim))
    u = np.empty(n_rows)
    prov = np.empty((n_rows, 3), dtype=np.int64)
    for i, ln in enumerate(body):
        try:
            rec = json.loads(ln)
            a[i] = rec["a"]
            u[i] = rec["u"]
            prov[i] = rec["provenance"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"line {i + 2}: malformed constraint row: {exc}") from exc
    return ConstraintSystem(a, u, prov, str(meta["mode"]),
                            float(meta["alpha_ibcb"]), float(meta["epsilon_margin"]))


class IbcbEstimator(BaseEstimator):
    """Recover an expert's final parameters from a reward-free history.

    Parameters mirror :func:`build_constraints`; ``settings`` (a
    :class:`~invbandit.qpsolve.QpSettings`) tunes the solver.  After ``fit``:
    ``theta_`` — the estimate; ``solution_`` — the full solver result;
    ``n_constraints_`` — stacked row count; ``train_time_`` — wall-clock
    seconds spent building and solving.
    """

    def __init__(self, alpha=1.0, lam=1.0, mode="ucb", epsilon_margin=0.01, settings=None):
        self.alpha = alpha
        self.lam = lam
        self.mode = mode
        self.epsilon_margin = epsilon_margin
        self.settings = settings

    def fit(self, hist, y=None):
        t0 = time.perf_counter()
        cs = build_constraints(hist, self.lam, self.alpha, self.mode, self.epsilon_margin)
        sol = estimate(cs, self.settings)
        self.train_time_ = time.perf_counter() - t0
        self.theta_ = sol.theta_hat
        self.solution_ = sol
        self.n_constraints_ = cs.n_rows
        return self

    def predict(self, bt_data):
        """Greedy choices of the recovered parameters over test contexts."""
        if not hasattr(self, "theta_"):
            raise RuntimeError("estimator is not fitted")
        return bandit.run_batch_test_phase(self.theta_, bt_data)
