"""Batched contextual bandits, behavior logs, and inverse parameter recovery.

The package has three layers:

* forward simulation — ``synthenv`` builds candidate contexts and rewards,
  ``bandit`` runs batched UCB / Thompson-sampling experts over them,
  ``history`` serializes the resulting behavioral evolution logs;
* inverse estimation — ``ibcb`` turns a reward-free log into linear
  inequality constraints on the expert's final parameters and solves the
  minimum-norm program with the ADMM solver in ``qpsolve``; ``baselines``
  provides behavior cloning and Bayesian IRL references;
* evaluation — ``evalkit`` scores recovered parameters (online/batch-test
  fitness, batch-test average reward) and ``cli`` wires everything into
  reproducible experiment runs.
"""

from . import bandit, baselines, cli, evalkit, history, ibcb, linalg, qpsolve, synthenv
from .baselines import BayesianIrl, BehaviorCloning
from .ibcb import IbcbEstimator

__all__ = [
    "bandit",
    "baselines",
    "cli",
    "evalkit",
    "history",
    "ibcb",
    "linalg",
    "qpsolve",
    "synthenv",
    "IbcbEstimator",
    "BehaviorCloning",
    "BayesianIrl",
]

__version__ = "0.1.0"
