"""Independent reference implementations the tests compare against.

Everything here is deliberately naive — brute force enumeration and direct
dense solves — so it can serve as an oracle for the optimized code paths.
"""

import itertools

import numpy as np


def active_set_minnorm(a_rows, u, tol=1e-9):
    """Brute-force solution of min 0.5||x||^2 s.t. A x <= u.

    Enumerates every subset of rows as a candidate active set, solves the
    equality-constrained problem, and keeps KKT-consistent points.  Returns
    ``(x, objective)`` or ``None`` when no subset certifies a feasible
    optimum (e.g. the system is infeasible).  Exponential in rows — use for
    tiny systems only.
    """
    a = np.asarray(a_rows, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    rows, dim = a.shape
    best = None
    if rows == 0 or (u >= -tol).all():
        return np.zeros(dim), 0.0
    for k in range(1, min(rows, dim) + 1):
        for subset in itertools.combinations(range(rows), k):
            sub = list(subset)
            g = a[sub] @ a[sub].T
            try:
                mu = -np.linalg.solve(g, u[sub])
            except np.linalg.LinAlgError:
                continue
            if (mu < -tol).any():
                continue  # multipliers must be nonnegative
            x = -a[sub].T @ mu
            if (a @ x <= u + tol).all():
                obj = 0.5 * float(x @ x)
                if best is None or obj < best[1]:
                    best = (x, obj)
    return best


def batch_ridge(s_blocks, r_blocks, lam):
    """Direct one-shot ridge over concatenated episode blocks."""
    s = np.concatenate(s_blocks, axis=0)
    r = np.concatenate(r_blocks, axis=0)
    d = s.shape[1]
    return np.linalg.solve(lam * np.eye(d) + s.T @ s, s.T @ r)


def grid_map_direction(log_post, radius_grid, n_angles=360):
    """2-D MAP direction by brute-force polar grid search."""
    best_val, best_dir = -np.inf, None
    for ang in np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False):
        direction = np.array([np.cos(ang), np.sin(ang)])
        for rad in radius_grid:
            val = log_post(rad * direction)
            if val > best_val:
                best_val, best_dir = val, direction
    return best_dir
