"""Importance-sampling sparsification of the right-hand side.

Rows of A are drawn ``s`` times with probability ``||A_i||^2 / ||A||_F^2``;
the sketched vector keeps ``b_i`` rescaled by ``count_i ||A||_F^2 /
(s ||A_i||^2)``, which is unbiased for b on the nonzero rows.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .sq import SamplingError, SampledVector

log = logging.getLogger(__name__)

S_CONSTANT = 800.0


def ceil_guarded(x):
    """Ceiling that ignores float noise just above an integer."""
    return math.ceil(x * (1.0 - 1e-12))


@dataclass(frozen=True)
class SparseVector:
    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be matching 1-D sequences")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.dim or np.any(np.diff(idx) <= 0)):
            raise ValueError("indices must be strictly increasing and in range")
        if not np.all(np.isfinite(val)):
            raise ValueError("non-finite value")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def nnz(self):
        return int(self.indices.size)

    def to_dense(self):
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    @classmethod
    def from_mapping(cls, dim, mapping, drop_below=0.0):
        items = sorted((i, x) for i, x in mapping.items() if abs(x) > drop_below)
        idx = np.fromiter((i for i, _ in items), dtype=np.int64, count=len(items))
        val = np.fromiter((x for _, x in items), dtype=np.float64, count=len(items))
        return cls(dim, idx, val)

    @classmethod
    def empty(cls, dim):
        return cls(dim, np.empty(0, dtype=np.int64), np.empty(0))


def choose_s(bounds, b_norm, epsilon, lam):
    """Sketch size ``ceil(800 ||A||_F^2 ||b||^2 / ((sigma^2 + lam)^2 eps^2 ||x*||^2))``."""
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if bounds.fro_norm <= 0 or bounds.sigma_lower <= 0:
        raise ValueError("spectral bounds must be positive")
    if b_norm == 0.0:
        return 1
    if bounds.xstar_norm_lower <= 0:
        raise ValueError("a positive lower bound on ||x*|| is required when b != 0")
    gap = bounds.sigma_lower ** 2 + lam
    s = S_CONSTANT * bounds.fro_norm ** 2 * b_norm ** 2 / (gap ** 2 * epsilon ** 2 * bounds.xstar_norm_lower ** 2)
    return max(1, ceil_guarded(s))


def _b_values(b):
    return b.values if isinstance(b, SampledVector) else np.asarray(b, dtype=np.float64)


def sparsify_b(A, b, s, rng, ledger=None):
    """Draw ``s`` rows of A by squared norm and return the rescaled sparse b.

    Only entry queries of ``b`` are used. Duplicate draws are merged.
    """
    ledger = A.ledger if ledger is None else ledger
    if A.fro_sq <= 0.0:
        raise SamplingError("cannot sketch with a zero matrix")
    s = int(s)
    if s < 1:
        raise ValueError("s must be positive")
    bv = _b_values(b)
    m = A.shape[0]
    if bv.shape[0] != m:
        raise ValueError(f"b has length {bv.shape[0]}, expected {m}")
    tree = A.rownorms
    rows = _kernels.descend_many(tree.tree, tree.cap, rng.random(s))
    ledger.add("sample1", s, tree_reads=s * tree.depth)
    uniq, counts = np.unique(rows, return_counts=True)
    ledger.add("query", uniq.size)
    ledger.add("norm", uniq.size + 1)
    vals = counts * (A.fro_sq / (s * A.row_sq[uniq])) * bv[uniq]
    keep = vals != 0.0
    return SparseVector(m, uniq[keep], vals[keep])


def exact_rhs(A, b, ledger=None):
    """``b`` restricted to rows of nonzero norm, the zero-error limit of the sketch.

    Rows with zero norm are dropped; they are invisible to ``A^T``.
    """
    ledger = A.ledger if ledger is None else ledger
    bv = _b_values(b)
    m = A.shape[0]
    ledger.add("norm", m)
    live = np.flatnonzero(A.row_sq > 0.0)
    ledger.add("query", live.size)
    vals = bv[live]
    keep = vals != 0.0
    return SparseVector(m, live[keep], vals[keep])
