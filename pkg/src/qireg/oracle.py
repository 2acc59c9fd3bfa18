"""Dense reference linear algebra.

Ground truth for the randomized code paths: exact ridge / least-squares
solutions, gradients, the thresholded projector and the cancellation
constant. Everything here is O(mn min(m, n)) and capped at desk scale.
Matrices are plain 2-D float64 arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DESK_MAX = 2048
ZERO_TOL = 1e-10


class OracleError(ValueError):
    pass


def as_dense(A):
    a = np.asarray(getattr(A, "values", A), dtype=np.float64)
    if a.ndim != 2:
        raise OracleError("expected a two-dimensional matrix")
    if max(a.shape) > DESK_MAX:
        raise OracleError(f"dense oracle is capped at {DESK_MAX} rows/columns, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise OracleError("non-finite entries")
    return a


@dataclass(frozen=True)
class Spectrum:
    """Thin SVD ``A = U diag(s) Vt`` with singular values in descending order."""

    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray

    @property
    def sigma_max(self):
        return float(self.s[0]) if self.s.size else 0.0

    @property
    def rank(self):
        if self.sigma_max == 0.0:
            return 0
        return int(np.sum(self.s > ZERO_TOL * self.sigma_max))

    @property
    def sigma_min(self):
        """Smallest singular value treated as nonzero (0 for the zero matrix)."""
        k = self.rank
        return float(self.s[k - 1]) if k else 0.0


@dataclass(frozen=True)
class SpectralBounds:
    op_norm_upper: float
    sigma_lower: float
    xstar_norm_lower: float
    fro_norm: float

    def __post_init__(self):
        if self.op_norm_upper < self.sigma_lower:
            raise OracleError("operator-norm bound below the singular-value bound")
        if min(self.op_norm_upper, self.sigma_lower, self.fro_norm) <= 0 or self.xstar_norm_lower < 0:
            raise OracleError("spectral bounds must be positive")


def svd(A):
    a = as_dense(A)
    U, s, Vt = np.linalg.svd(a, full_matrices=False)
    return Spectrum(U, s, Vt)


def _vec(x, n, name):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != n:
        raise OracleError(f"{name} has length {x.shape[0]}, expected {n}")
    return x


def solve_exact(A, b, lam, spectrum=None):
    """``(A^T A + lam I)^+ A^T b`` via the SVD."""
    if lam < 0:
        raise OracleError("lambda must be non-negative")
    sp = spectrum if spectrum is not None else svd(A)
    b = _vec(b, sp.U.shape[0], "b")
    k = sp.rank
    s = sp.s[:k]
    coef = s / (s * s + lam) * (sp.U[:, :k].T @ b)
    return sp.Vt[:k].T @ coef


def f_value(A, b, lam, x):
    a = as_dense(A)
    x = _vec(x, a.shape[1], "x")
    r = a @ x - _vec(b, a.shape[0], "b")
    return 0.5 * (r @ r + lam * (x @ x))


def grad_exact(A, b, lam, x):
    a = as_dense(A)
    x = _vec(x, a.shape[1], "x")
    return a.T @ (a @ x) - a.T @ _vec(b, a.shape[0], "b") + lam * x


def projector_weight(sigma, lam):
    """Soft threshold: 0 at 0, ``2 s sqrt(lam) / (s^2 + lam)`` up to sqrt(lam), then 1."""
    s = np.asarray(sigma, dtype=np.float64)
    root = math.sqrt(lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        mid = 2.0 * s * root / (s * s + lam)
    p = np.where(s > root, 1.0, mid)
    p = np.where(s <= 0.0, 0.0, p)
    return p if p.ndim else float(p)


def thresholded_projector(A, lam, spectrum=None):
    sp = spectrum if spectrum is not None else svd(A)
    k = sp.rank
    U = sp.U[:, :k]
    p = projector_weight(sp.s[:k], lam)
    return (U * p) @ U.T


def xstar_lower_bound(A, b, lam, spectrum=None):
    """Lower bound on ``||x*||`` from the norm of the thresholded projection of b.

    Uses ``||A|| / (||A||^2 + lam)`` when ``||A|| >= sqrt(lam)``; otherwise the
    bound ``1 / (2 sqrt(lam))`` is attained exactly.
    """
    sp = spectrum if spectrum is not None else svd(A)
    if sp.rank == 0:
        raise OracleError("zero matrix")
    b = _vec(b, sp.U.shape[0], "b")
    k = sp.rank
    proj = sp.U[:, :k].T @ b * projector_weight(sp.s[:k], lam)
    pb = float(np.linalg.norm(proj))
    top = sp.sigma_max
    if top >= math.sqrt(lam):
        return top / (top * top + lam) * pb
    return pb / (2.0 * math.sqrt(lam))


def delta_exact(A, v, x=None):
    """Cancellation constant ``sum_i ||A_i||^2 v_i^2 / ||x||^2`` with ``x = A^T v``."""
    a = as_dense(A)
    v = _vec(v, a.shape[0], "v")
    if x is None:
        x = a.T @ v
    xx = float(np.dot(x, x))
    if xx == 0.0:
        raise OracleError("x is zero")
    return float(np.sum(np.einsum("ij,ij->i", a, a) * v * v)) / xx


def spectral_bounds(A, b, lam, spectrum=None, xstar="exact"):
    """Fill the hyperparameter bounds from the dense SVD.

    ``xstar="exact"`` uses ``||x*||`` itself; ``"lower_bound"`` uses
    :func:`xstar_lower_bound`.
    """
    a = as_dense(A)
    sp = spectrum if spectrum is not None else svd(a)
    if sp.rank == 0:
        raise OracleError("zero matrix")
    if xstar == "exact":
        xs = float(np.linalg.norm(solve_exact(a, b, lam, sp)))
    elif xstar == "lower_bound":
        xs = xstar_lower_bound(a, b, lam, sp)
    else:
        raise OracleError(f"unknown xstar mode {xstar!r}")
    return SpectralBounds(
        op_norm_upper=sp.sigma_max,
        sigma_lower=sp.sigma_min,
        xstar_norm_lower=xs,
        fro_norm=float(np.linalg.norm(a)),
    )
