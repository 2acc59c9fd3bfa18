"""SQ access to ``x = A^T v`` for a sparse coefficient vector ``v``.

Entry queries cost one matrix query per support element. Length-square
samples come from rejection sampling: propose a support row ``i_k`` with
probability ``||A_{i_k}||^2 v_k^2 / Z``, then a column ``j`` from that row,
and accept with probability ``x_j^2 / (s sum_k A_{i_k j}^2 v_k^2)``. The
expected number of proposals per accepted sample is ``s * Delta`` where
``Delta = Z / ||x||^2``.
"""
from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .sq import SamplingError, build_vector

CHUNK = 1 << 14
NORM_GROUP_CONSTANT = 4.0


class RejectionSamplingError(RuntimeError):
    """Raised when rejection sampling exceeds its trial budget."""


class SparseDescription:
    """``x = A^T v`` with ``v`` supported on ``indices``.

    ``Z`` is ``sum_k ||A_{i_k}||^2 v_k^2``; ``weights`` is a sampled vector
    over ``||A_{i_k}|| |v_k|`` used for proposals.
    """

    def __init__(self, A, indices, coeffs):
        idx = np.asarray(indices, dtype=np.int64)
        cf = np.asarray(coeffs, dtype=np.float64)
        if idx.shape != cf.shape or idx.ndim != 1:
            raise ValueError("indices and coefficients must match")
        if idx.size and (idx[0] < 0 or idx[-1] >= A.shape[0] or np.any(np.diff(idx) <= 0)):
            raise ValueError("indices must be strictly increasing and in range")
        rowsq = A.row_sq[idx]
        if np.any((rowsq == 0.0) & (cf != 0.0)):
            raise ValueError("nonzero coefficient on a zero row")
        self.A = A
        self.indices = idx
        self.coeffs = cf
        self.weights = build_vector(np.sqrt(rowsq) * cf) if idx.size else None
        self.Z = self.weights.sqnorm if idx.size else 0.0

    @property
    def s(self):
        return int(self.indices.size)

    @property
    def n(self):
        return self.A.shape[1]

    def coefficient_vector(self):
        out = np.zeros(self.A.shape[0])
        out[self.indices] = self.coeffs
        return out

    @classmethod
    def from_sparse(cls, A, sv, drop_below=0.0):
        keep = np.abs(sv.values) > drop_below
        return cls(A, sv.indices[keep], sv.values[keep])

    def __repr__(self):
        return f"SparseDescription(s={self.s}, n={self.n}, Z={self.Z:.6g})"


def _ledger(d, ledger):
    return d.A.ledger if ledger is None else ledger


def desc_query(d, j, ledger=None):
    """Exact ``x_j`` with ``s`` matrix queries."""
    if not 0 <= j < d.n:
        raise SamplingError(f"column {j} out of range for {d.n}")
    _ledger(d, ledger).add("query", d.s)
    return float(d.A.values[d.indices, j] @ d.coeffs)


def desc_dense(d, ledger=None):
    """All of ``x``; ``s * n`` queries, for diagnostics."""
    _ledger(d, ledger).add("query", d.s * d.n)
    return d.A.values[d.indices].T @ d.coeffs


def _need_mass(d):
    if d.s == 0 or d.Z <= 0.0:
        raise SamplingError("description has zero mass")


def _run(d, rng, want, max_trials, ledger):
    """Drive the rejection kernel until ``want`` accepts (or budget failure)."""
    out = np.empty(max(want, 0), dtype=np.int64)
    n_out = 0
    carry = 0
    trials = 0
    w = d.weights
    while n_out < want:
        batch = min(CHUNK, max(64, 2 * (want - n_out) * d.s))
        us = rng.random((batch, 3))
        n_out, used, carry, failed = _kernels.reject_run(
            d.A.values, d.A.row_trees, d.A.cap, d.indices, d.coeffs,
            w.tree, w.cap, us, out, n_out, want, carry, max_trials)
        trials += used
        if failed:
            _charge(d, trials, ledger)
            rate = n_out / trials if trials else 0.0
            raise RejectionSamplingError(
                f"no acceptance within {max_trials} trials (measured acceptance rate "
                f"{rate:.3g}, {n_out} accepted in {trials} trials); large cancellation in A^T v")
    _charge(d, trials, ledger)
    return out, trials


def _charge(d, trials, ledger):
    led = _ledger(d, ledger)
    led.add("sample", trials, tree_reads=trials * d.weights.depth)
    led.add("sample2", trials, tree_reads=trials * d.A.depth)
    led.add("query", trials * d.s)


def default_max_trials(d):
    return max(1, math.ceil(100 * d.s * desc_delta(d)))


def desc_sample(d, rng, max_trials=None, ledger=None):
    """One column index ``j`` distributed as ``x_j^2 / ||x||^2``."""
    _need_mass(d)
    if max_trials is None:
        max_trials = default_max_trials(d)
    out, _ = _run(d, rng, 1, int(max_trials), ledger)
    return int(out[0])


def desc_sample_many(d, rng, count, max_trials=None, ledger=None):
    """``count`` independent samples and the total number of proposals used."""
    _need_mass(d)
    if max_trials is None:
        max_trials = default_max_trials(d)
    return _run(d, rng, int(count), int(max_trials), ledger)


def _accepts(d, rng, n, ledger):
    got = 0
    left = n
    w = d.weights
    dummy = np.empty(0, dtype=np.int64)
    while left > 0:
        batch = min(CHUNK, left)
        us = rng.random((batch, 3))
        k, _, _, _ = _kernels.reject_run(
            d.A.values, d.A.row_trees, d.A.cap, d.indices, d.coeffs,
            w.tree, w.cap, us, dummy, 0, -1, 0, 0)
        got += k
        left -= batch
    _charge(d, n, ledger)
    return got


def acceptance_estimate(d, rng, trials, ledger=None):
    """``accept_rate * s * Z`` over a fixed number of trials (unbiased for ``||x||^2``)."""
    _need_mass(d)
    return _accepts(d, rng, int(trials), ledger) / trials * d.s * d.Z


def desc_norm(d, eps_est, delta, rng, c=NORM_GROUP_CONSTANT, ledger=None, max_trials=None):
    """Estimate ``||x||`` within ``(1 +- eps_est)`` with probability about ``1 - delta``.

    A pilot phase doubles its trial count until it has seen a few accepts,
    giving an estimate of ``s * Delta``; the estimate is then the median of
    group means, each over ``ceil(c * s * Delta_hat / eps_est^2)`` trials.
    """
    _need_mass(d)
    if not 0.0 < eps_est < 1.0:
        raise ValueError("eps_est must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if d.s == 1:
        # x is a multiple of one row; acceptance is certain
        return math.sqrt(d.Z)
    pilot, seen, n = 0, 0, 16 * d.s
    while seen < 8:
        if max_trials is not None and pilot + n > max_trials:
            raise RejectionSamplingError(
                f"pilot exceeded {max_trials} trials (measured acceptance rate {seen / max(pilot, 1):.3g})")
        seen += _accepts(d, rng, n, ledger)
        pilot += n
        n *= 2
    s_delta = pilot / seen
    groups = 2 * math.ceil(math.log(1.0 / delta)) + 1
    per_group = math.ceil(c * s_delta / eps_est ** 2)
    means = [_accepts(d, rng, per_group, ledger) / per_group for _ in range(groups)]
    return math.sqrt(float(np.median(means)) * d.s * d.Z)


def desc_delta(d, mode="exact", rng=None, eps_est=0.1, delta=0.05, ledger=None):
    """``Z / ||x||^2``; ``mode="estimate"`` uses :func:`desc_norm` instead of all n entries."""
    _need_mass(d)
    if mode == "exact":
        x = desc_dense(d, ledger)
        xx = float(x @ x)
    elif mode == "estimate":
        if rng is None:
            raise ValueError("estimate mode needs an rng")
        xx = desc_norm(d, eps_est, delta, rng, ledger=ledger) ** 2
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if xx == 0.0:
        raise SamplingError("x is zero")
    return d.Z / xx
