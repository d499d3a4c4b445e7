"""Seeded randomness and the small dense SPD operations everything else shares.

All randomness in the package flows through :func:`make_rng`, which hashes an
integer seed together with string keys into independent PCG64 streams.  Keyed
streams are what make replay work: a consumer that knows the seed recorded in
a history file can re-derive exactly the stream a particular phase drew from,
without replaying any other phase.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np
import scipy.linalg as sla

__all__ = [
    "derive_seed",
    "make_rng",
    "NotSpdError",
    "SpdMatrix",
    "spd_solve",
    "quad_form",
    "gaussian",
]


def derive_seed(seed, *keys):
    """Map an integer seed plus string keys to a stable 64-bit child seed."""
    if not keys:
        return int(seed)
    tag = "/".join(str(k) for k in keys)
    digest = hashlib.sha256(f"{int(seed)}/{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed, *keys):
    """Independent PCG64 generator for ``(seed, *keys)``.

    Same arguments always produce the same stream; distinct key tuples give
    streams that are independent for all practical purposes (the key tuple is
    folded into the seed through SHA-256).
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(derive_seed(seed, *keys))))


class NotSpdError(ValueError):
    """Raised when a matrix expected to be SPD fails its Cholesky factorization.

    ``pivot`` is the 1-based index of the leading minor that failed, when the
    underlying routine reports one.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


def _factor(mat):
    try:
        return sla.cho_factor(mat, check_finite=False)
    except sla.LinAlgError as exc:  # extract the failing pivot if present
        m = re.search(r"(\d+)", str(exc))
        pivot = int(m.group(1)) if m else None
        raise NotSpdError(f"matrix is not positive definite: {exc}", pivot=pivot) from exc


class SpdMatrix:
    """Symmetric positive definite matrix with a cached Cholesky factor.

    The factor is computed on first use and reused by every subsequent
    ``solve``, which is the pattern the bandit and constraint code lean on:
    one factorization per episode, many right-hand sides.
    """

    def __init__(self, entries):
        mat = np.array(entries, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {mat.shape}")
        if not np.isfinite(mat).all():
            raise ValueError("matrix entries must be finite")
        asym = np.abs(mat - mat.T).max(initial=0.0)
        if asym > 1e-10 * (1.0 + np.abs(mat).max(initial=0.0)):
            raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
        self._mat = mat
        self._cho = None

    @property
    def dim(self):
        return self._mat.shape[0]

    @property
    def mat(self):
        """The stored matrix (do not mutate)."""
        return self._mat

    @property
    def cho(self):
        """Cached ``scipy.linalg.cho_factor`` result, computed on demand."""
        if self._cho is None:
            self._cho = _factor(self._mat)
        return self._cho

    def solve(self, rhs):
        """Solve ``A x = rhs`` (vector or matrix right-hand side)."""
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.shape[0] != self.dim:
            raise ValueError(f"rhs has leading dimension {rhs.shape[0]}, expected {self.dim}")
        return sla.cho_solve(self.cho, rhs, check_finite=False)

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim})"


def spd_solve(mat, rhs):
    """Solve an SPD system by Cholesky, never by explicit inverse."""
    spd = mat if isinstance(mat, SpdMatrix) else SpdMatrix(mat)
    return spd.solve(rhs)


def quad_form(mat, vec):
    """Quadratic form ``vec' mat^{-1} vec``, clamped at zero.

    The clamp guards the downstream square roots against the tiny negative
    values round-off can produce for nearly singular systems.
    """
    spd = mat if isinstance(mat, SpdMatrix) else SpdMatrix(mat)
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (spd.dim,):
        raise ValueError(f"vector has shape {vec.shape}, expected ({spd.dim},)")
    val = float(vec @ spd.solve(vec))
    return max(val, 0.0)


def gaussian(rng, mean, std):
    """One draw from N(mean, std^2); ``std == 0`` returns ``mean`` exactly."""
    if std < 0:
        raise ValueError(f"std must be nonnegative, got {std}")
    return float(mean) + float(std) * float(rng.standard_normal())
