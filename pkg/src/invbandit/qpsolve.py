"""Minimum-norm quadratic program over linear inequality constraints.

Solves ``min 0.5 ||theta||^2  s.t.  A theta <= u`` with an operator-splitting
(ADMM) method specialized to this objective.  The variable is split into
``theta`` and its constraint image ``z = A theta``; each iteration is

* a ridge solve ``((1 + sigma) I + rho A'A) x = sigma x + A'(rho z - y)``
  using one cached d x d Cholesky factorization,
* the projection ``z <- min(A x + y / rho, u)``,
* a dual ascent ``y <- y + rho (A x - z)``.

``A'A`` is d x d regardless of the number of rows, so a 171k-row system built
from a full behavior log costs two tall matrix-vector products per iteration
and nothing else.  Rows are equilibrated to unit infinity norm before
iterating, and all reported violations are per unit-norm row (i.e. relative
to each row's scale), which is the quantity the stopping tests control.

Non-convergence at the requested tolerance triggers one retry at
``fallback_eps``; a detected primal infeasibility certificate (or exhausting
both ADMM stages) hands the final iterate to a damped-Newton penalty stage on
``0.5 ||theta||^2 + penalty_rho * sum max(0, a'theta - u)^2``.  ``Failed`` is
reserved for the penalty stage itself stalling.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

__all__ = [
    "QpSettings",
    "QpStatus",
    "QpSolution",
    "KktReport",
    "solve_minnorm",
    "check_kkt",
]


@dataclass(frozen=True)
class QpSettings:
    """Solver knobs; defaults are tuned for behavior-log constraint systems."""

    eps_abs: float = 8e-2
    eps_rel: float = 8e-2
    fallback_eps: float = 8e-1
    max_iter: int = 20000
    rho: float = 0.1
    sigma: float = 1e-6
    infeasibility_tol: float = 1e-4
    penalty_rho: float = 10.0
    relax: float = 1.6  # over-relaxation; 1.0 disables
    check_every: int = 25

    def __post_init__(self):
        for name in ("eps_abs", "eps_rel", "fallback_eps", "rho", "sigma",
                     "infeasibility_tol", "penalty_rho"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.fallback_eps < self.eps_abs:
            raise ValueError("fallback_eps must be >= eps_abs")
        if self.max_iter < 1 or self.check_every < 1:
            raise ValueError("max_iter and check_every must be >= 1")
        if not 0.0 < self.relax < 2.0:
            raise ValueError("relax must lie in (0, 2)")


class QpStatus(enum.Enum):
    SOLVED = "solved"
    SOLVED_LOW_ACCURACY = "solved_low_accuracy"
    PENALTY_FALLBACK = "penalty_fallback"
    FAILED = "failed"


@dataclass
class QpSolution:
    """Result of :func:`solve_minnorm`.

    ``max_violation`` is the largest constraint violation per unit-norm row
    (zero when feasible); ``duals`` are nonnegative-at-optimum multipliers in
    the original (unscaled) row scaling, one per constraint row.
    """

    theta_hat: np.ndarray
    status: QpStatus
    iterations: int
    max_violation: float
    objective: float
    duals: np.ndarray = field(repr=False, default=None)


@dataclass
class KktReport:
    max_violation: float
    stationarity_residual: float
    complementarity_gap: float


def _validate_system(a_rows, u):
    a = np.asarray(a_rows, dtype=np.float64)
    b = np.asarray(u, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"constraint matrix must be 2-D (rows x dim), got ndim={a.ndim}")
    if b.ndim != 1 or b.shape[0] != a.shape[0]:
        raise ValueError(f"bound vector has shape {b.shape}, expected ({a.shape[0]},)")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("constraint system contains non-finite entries")
    return a, b


def _admm(a_s, u_s, x, z, y, eps_abs, eps_rel, st, budget):
    """Run ADMM until both residual tests pass; returns (state, iters, converged, infeasible)."""
    rows, dim = a_s.shape
    kkt = (1.0 + st.sigma) * np.eye(dim) + st.rho * (a_s.T @ a_s)
    factor = sla.cho_factor(kkt, check_finite=False)
    y_prev = y.copy()
    it = 0
    while it < budget:
        steps = min(st.check_every, budget - it)
        for _ in range(steps):
            rhs = st.sigma * x + a_s.T @ (st.rho * z - y)
            x = sla.cho_solve(factor, rhs, check_finite=False)
            ax = a_s @ x
            ax_r = st.relax * ax + (1.0 - st.relax) * z
            z = np.minimum(ax_r + y / st.rho, u_s)
            y = y + st.rho * (ax_r - z)
        it += steps

        ax = a_s @ x
        aty = a_s.T @ y
        r_prim = np.abs(ax - z).max(initial=0.0)
        r_dual = np.abs(x + aty).max(initial=0.0)
        eps_prim = eps_abs + eps_rel * max(np.abs(ax).max(initial=0.0),
                                           np.abs(z).max(initial=0.0))
        eps_dual = eps_abs + eps_rel * max(np.abs(x).max(initial=0.0),
                                           np.abs(aty).max(initial=0.0))
        if r_prim <= eps_prim and r_dual <= eps_dual:
            return x, z, y, it, True, False

        # primal infeasibility certificate: v >= 0 with A'v ~ 0 and u'v < 0
        dy = np.maximum(y - y_prev, 0.0)
        dy_norm = np.abs(dy).max(initial=0.0)
        if dy_norm > 0:
            v = dy / dy_norm
            if (np.abs(a_s.T @ v).max(initial=0.0) <= st.infeasibility_tol
                    and u_s @ v <= -st.infeasibility_tol):
                return x, z, y, it, False, True
        y_prev = y.copy()
    return x, z, y, it, False, False


def _penalty_newton(a_s, u_s, x, rho_pen, budget=200):
    """Damped Newton on the quadratic-penalty relaxation; returns (x, duals, iters, ok)."""

    def value(theta):
        r = np.maximum(a_s @ theta - u_s, 0.0)
        return 0.5 * theta @ theta + rho_pen * (r @ r)

    dim = a_s.shape[1]
    f = value(x)
    for it in range(1, budget + 1):
        r = np.maximum(a_s @ x - u_s, 0.0)
        grad = x + 2.0 * rho_pen * (a_s.T @ r)
        if np.abs(grad).max(initial=0.0) <= 1e-9 * (1.0 + np.abs(x).max(initial=0.0)):
            return x, 2.0 * rho_pen * r, it, True
        act = r > 0
        hess = np.eye(dim)
        if act.any():
            a_act = a_s[act]
            hess += 2.0 * rho_pen * (a_act.T @ a_act)
        step = -sla.cho_solve(sla.cho_factor(hess, check_finite=False), grad,
                              check_finite=False)
        slope = grad @ step
        t = 1.0
        while t > 1e-12:
            x_new = x + t * step
            f_new = value(x_new)
            if f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return x, 2.0 * rho_pen * np.maximum(a_s @ x - u_s, 0.0), it, False
        x, f = x_new, f_new
    r = np.maximum(a_s @ x - u_s, 0.0)
    grad_norm = np.abs(x + 2.0 * rho_pen * (a_s.T @ r)).max(initial=0.0)
    return x, 2.0 * rho_pen * r, budget, grad_norm <= 1e-6 * (1.0 + np.abs(x).max(initial=0.0))


def solve_minnorm(a_rows, u, settings=None):
    """Solve ``min 0.5 ||theta||^2 s.t. a_rows @ theta <= u``.

    ``a_rows`` must have shape (rows, dim); pass shape (0, dim) for an
    unconstrained problem (whose solution is the origin).
    """
    st = settings or QpSettings()
    a, b = _validate_system(a_rows, u)
    rows, dim = a.shape
    if dim < 1:
        raise ValueError("constraint matrix needs at least one column")
    if rows == 0:
        return QpSolution(np.zeros(dim), QpStatus.SOLVED, 0, 0.0, 0.0, np.zeros(0))

    # row equilibration to unit infinity norm; zero rows pass through unscaled
    rn = np.abs(a).max(axis=1)
    rn[rn == 0.0] = 1.0
    a_s = a / rn[:, None]
    u_s = b / rn

    x = np.zeros(dim)
    z = np.zeros(rows)
    y = np.zeros(rows)
    total = 0
    converged = infeasible = False
    stage1 = True
    for eps in (st.eps_abs, st.fallback_eps):
        x, z, y, it, converged, infeasible = _admm(
            a_s, u_s, x, z, y, eps, st.eps_rel, st, st.max_iter)
        total += it
        if converged or infeasible:
            break
        stage1 = False

    u_scale = 1.0 + np.abs(u_s).max(initial=0.0)

    def viol(theta):
        return float(np.maximum(a_s @ theta - u_s, 0.0).max(initial=0.0))

    if converged:
        v = viol(x)
        if v <= st.eps_abs * u_scale:
            status = QpStatus.SOLVED
        elif v <= st.fallback_eps * u_scale:
            status = QpStatus.SOLVED_LOW_ACCURACY
        else:
            converged = False  # accurate by residuals but not by violation: fall through
        if converged:
            duals = np.maximum(y, 0.0) / rn
            return QpSolution(x, status, total, v, 0.5 * float(x @ x), duals)

    x, duals_s, it, ok = _penalty_newton(a_s, u_s, x, st.penalty_rho)
    total += it
    status = QpStatus.PENALTY_FALLBACK if ok else QpStatus.FAILED
    return QpSolution(x, status, total, viol(x), 0.5 * float(x @ x), duals_s / rn)


def check_kkt(a_rows, u, sol):
    """Independent KKT diagnostics for a :class:`QpSolution`.

    Residuals are recomputed from the raw system: feasibility per unit-norm
    row, stationarity ``||theta + A' mu||_inf`` with the clamped nonnegative
    multipliers, and the largest complementary-slackness product.
    """
    a, b = _validate_system(a_rows, u)
    theta = np.asarray(sol.theta_hat, dtype=np.float64)
    if a.shape[0] == 0:
        stat = float(np.abs(theta).max(initial=0.0))
        return KktReport(0.0, stat, 0.0)
    mu = np.maximum(np.asarray(sol.duals, dtype=np.float64), 0.0)
    rn = np.abs(a).max(axis=1)
    rn[rn == 0.0] = 1.0
    resid = a @ theta - b
    max_violation = float(np.maximum(resid / rn, 0.0).max(initial=0.0))
    stationarity = float(np.abs(theta + a.T @ mu).max(initial=0.0))
    comp = float(np.abs(mu * resid).max(initial=0.0))
    return KktReport(max_violation, stationarity, comp)
