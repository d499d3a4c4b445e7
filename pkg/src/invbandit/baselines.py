"""Comparison methods: behavior cloning and Bayesian IRL over choice logs.

Behavior cloning treats every step as a one-vs-rest linear classification —
the chosen context labeled +1, each passed-over candidate −1 — trained with
hinge loss plus L2 by deterministic full-batch subgradient descent.  There is
no fixed action set (candidates ARE contexts), so prediction is the argmax of
the learned scorer over each step's candidates.

Bayesian IRL posits Boltzmann-rational choices: the posterior is a Gaussian
prior times a softmax likelihood per step, sampled with random-walk
Metropolis-Hastings; the estimate is the mean of the thinned post-burn-in
samples.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import bandit

__all__ = [
    "BcSettings",
    "BcModel",
    "bc_train",
    "bc_predict",
    "BirlConfig",
    "mh_sample",
    "choice_log_posterior",
    "birl_estimate",
    "BehaviorCloning",
    "BayesianIrl",
]


@dataclass(frozen=True)
class BcSettings:
    learning_rate: float = 0.5
    l2_reg: float = 1e-4
    max_iter: int = 1_000_000
    tol: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.l2_reg <= 0:
            raise ValueError("learning_rate and l2_reg must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")


@dataclass(frozen=True, eq=False)
class BcModel:
    w: np.ndarray
    bias: float
    iterations: int


def _flatten_examples(hist):
    m = hist.meta
    x = hist.candidates.reshape(m.N * m.B * m.M, m.d)
    y = np.full(m.N * m.B * m.M, -1.0)
    y[np.arange(m.N * m.B) * m.M + hist.choices.ravel()] = 1.0
    return x, y


def bc_train(hist, settings=None):
    """Hinge + L2 linear scorer on one-vs-rest step examples.

    Full-batch subgradient descent with a fixed step, stopped when the
    objective plateaus (relative improvement below ``tol``) or at the
    iteration cap.  Deterministic given history and settings.
    """
    st = settings or BcSettings()
    x, y = _flatten_examples(hist)
    if np.ptp(x, axis=0).max(initial=0.0) == 0.0:
        warnings.warn("all training contexts are identical; returning zero weights")
        return BcModel(np.zeros(hist.meta.d), 0.0, 0)

    n, d = x.shape
    w = np.zeros(d)
    bias = 0.0
    best = np.inf
    best_w, best_bias = w, bias
    window_best = np.inf
    it = 0
    while it < st.max_iter:
        margins = y * (x @ w + bias)
        viol = margins < 1.0
        obj = np.maximum(1.0 - margins, 0.0).mean() + 0.5 * st.l2_reg * (w @ w)
        if obj < best:
            best, best_w, best_bias = obj, w, bias
        # subgradient iterates oscillate; stop when a whole window stops improving
        if it % 50 == 0 and it > 0:
            if window_best - best < st.tol * max(1.0, abs(window_best)):
                break
            window_best = best
        yv = y[viol]
        g_w = st.l2_reg * w - (yv @ x[viol]) / n
        g_b = -yv.sum() / n
        w = w - st.learning_rate * g_w
        bias = bias - st.learning_rate * g_b
        it += 1
    return BcModel(best_w, float(best_bias), it)


def bc_predict(model, contexts):
    """Argmax of ``w . s + bias`` along the candidate axis of (..., M, d) contexts."""
    episodes = contexts.episodes if hasattr(contexts, "episodes") else np.asarray(contexts)
    return np.argmax(episodes @ model.w + model.bias, axis=-1)


@dataclass(frozen=True)
class BirlConfig:
    burn_in: int = 10000
    iterations: int = 10000
    thin: int = 10
    proposal_std: float = 0.05
    beta_inv_temp: float = 5.0
    prior_std: float = 1.0

    def __post_init__(self):
        for name in ("burn_in", "iterations", "thin"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.proposal_std <= 0 or self.prior_std <= 0:
            raise ValueError("proposal_std and prior_std must be positive")
        if self.beta_inv_temp < 0:
            raise ValueError("beta_inv_temp must be nonnegative")

    @property
    def n_samples(self):
        return self.iterations // self.thin


def mh_sample(log_post, x0, iterations, burn_in, thin, proposal_std, rng):
    """Random-walk Metropolis-Hastings.

    Returns ``(samples, acceptance_rate)`` where samples are the thinned
    post-burn-in states and the rate is measured after burn-in only.
    """
    x = np.array(x0, dtype=np.float64)
    lp = float(log_post(x))
    samples = []
    accepted = 0
    for t in range(burn_in + iterations):
        prop = x + proposal_std * rng.standard_normal(x.shape)
        lp_prop = float(log_post(prop))
        if np.log(rng.random()) < lp_prop - lp:
            x, lp = prop, lp_prop
            if t >= burn_in:
                accepted += 1
        if t >= burn_in and (t - burn_in + 1) % thin == 0:
            samples.append(x.copy())
    return np.array(samples), accepted / iterations


def choice_log_posterior(hist, cfg):
    """Log posterior of theta under Boltzmann-rational choices with a Gaussian prior.

    The returned callable reuses preallocated buffers, so it is cheap enough
    to sit in the MH inner loop at full log sizes.
    """
    m = hist.meta
    x = np.ascontiguousarray(hist.candidates.reshape(m.N * m.B * m.M, m.d))
    chosen_flat = np.arange(m.N * m.B) * m.M + hist.choices.ravel()
    beta = cfg.beta_inv_temp
    inv_two_var = 0.5 / cfg.prior_std ** 2
    scores = np.empty(m.N * m.B * m.M)
    buf = np.empty((m.N * m.B, m.M))

    def log_post(theta):
        np.dot(x, beta * theta, out=scores)
        s = scores.reshape(m.N * m.B, m.M)
        mx = s.max(axis=1)
        np.exp(s - mx[:, None], out=buf)
        ll = scores[chosen_flat].sum() - mx.sum() - np.log(buf.sum(axis=1)).sum()
        return ll - inv_two_var * (theta @ theta)

    return log_post


def birl_estimate(hist, cfg=None, rng=None):
    """Posterior-mean theta via MH; warns when mixing looks off."""
    from .linalg import make_rng

    cfg = cfg or BirlConfig()
    rng = rng if rng is not None else make_rng(0, "birl")
    log_post = choice_log_posterior(hist, cfg)
    samples, rate = mh_sample(log_post, np.zeros(hist.meta.d), cfg.iterations,
                              cfg.burn_in, cfg.thin, cfg.proposal_std, rng)
    if not 0.05 <= rate <= 0.95:
        warnings.warn(
            f"MH acceptance rate {rate:.3f} outside [0.05, 0.95] "
            f"(proposal_std={cfg.proposal_std}, iterations={cfg.iterations}); "
            "samples may mix poorly")
    return samples.mean(axis=0)


class BehaviorCloning(BaseEstimator):
    """sklearn-style wrapper around :func:`bc_train`.

    After ``fit``: ``model_`` (the :class:`BcModel`), ``w_``, ``bias_``, and
    ``train_time_`` in wall-clock seconds.
    """

    def __init__(self, learning_rate=0.5, l2_reg=1e-4, max_iter=1_000_000, tol=1e-8):
        self.learning_rate = learning_rate
        self.l2_reg = l2_reg
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, hist, y=None):
        import time

        st = BcSettings(self.learning_rate, self.l2_reg, self.max_iter, self.tol)
        t0 = time.perf_counter()
        self.model_ = bc_train(hist, st)
        self.train_time_ = time.perf_counter() - t0
        self.w_ = self.model_.w
        self.bias_ = self.model_.bias
        return self

    def predict(self, bt_data):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")
        return bc_predict(self.model_, bt_data)


class BayesianIrl(BaseEstimator):
    """sklearn-style wrapper around :func:`birl_estimate`.

    After ``fit``: ``theta_``, ``acceptance_rate_``, ``train_time_``.
    """

    def __init__(self, burn_in=10000, iterations=10000, thin=10,
                 proposal_std=0.05, beta_inv_temp=5.0, prior_std=1.0, seed=0):
        self.burn_in = burn_in
        self.iterations = iterations
        self.thin = thin
        self.proposal_std = proposal_std
        self.beta_inv_temp = beta_inv_temp
        self.prior_std = prior_std
        self.seed = seed

    def _config(self):
        return BirlConfig(self.burn_in, self.iterations, self.thin,
                          self.proposal_std, self.beta_inv_temp, self.prior_std)

    def fit(self, hist, y=None):
        import time

        from .linalg import make_rng

        cfg = self._config()
        log_post = choice_log_posterior(hist, cfg)
        t0 = time.perf_counter()
        samples, rate = mh_sample(log_post, np.zeros(hist.meta.d), cfg.iterations,
                                  cfg.burn_in, cfg.thin, cfg.proposal_std,
                                  make_rng(self.seed, "birl"))
        self.train_time_ = time.perf_counter() - t0
        if not 0.05 <= rate <= 0.95:
            warnings.warn(
                f"MH acceptance rate {rate:.3f} outside [0.05, 0.95] "
                f"(proposal_std={cfg.proposal_std}, iterations={cfg.iterations}); "
                "samples may mix poorly")
        self.theta_ = samples.mean(axis=0)
        self.acceptance_rate_ = rate
        return self

    def predict(self, bt_data):
        if not hasattr(self, "theta_"):
            raise RuntimeError("estimator is not fitted")
        return bandit.run_batch_test_phase(self.theta_, bt_data)
