"""Length-square sample-and-query (SQ) access for vectors and matrices.

A :class:`SampledVector` keeps the entries of a vector next to a complete
binary sum tree over their squares, so that drawing index ``i`` with
probability ``v_i**2 / ||v||**2`` is a root-to-leaf walk. A
:class:`SampledMatrix` stacks one such tree per row plus a tree over the
squared row norms.

Structures are immutable once built. Every access can be charged to a
:class:`QueryLedger`.
"""
from __future__ import annotations

import math
import threading

import numpy as np

from . import _kernels

KINDS = ("sample", "sample1", "sample2", "query", "norm")


class SamplingError(ValueError):
    """Raised when a length-square distribution is undefined or an index is bad."""


def make_rng(seed):
    """Seeded Philox (counter-based) generator used throughout the package."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


class QueryLedger:
    """Thread-safe counters, one per access kind.

    ``tree_reads`` counts sibling-pair reads during tree descent; it is kept
    apart from the five kinds and is not part of :attr:`total`.
    """

    def __init__(self, **counts):
        self._lock = threading.Lock()
        self._counts = dict.fromkeys(KINDS, 0)
        self.tree_reads = 0
        for kind, k in counts.items():
            self.add(kind, k)

    def add(self, kind, k=1, tree_reads=0):
        if kind not in self._counts:
            raise KeyError(f"unknown query kind {kind!r}")
        if k < 0 or tree_reads < 0:
            raise ValueError("ledger counts only increase")
        with self._lock:
            self._counts[kind] += int(k)
            self.tree_reads += int(tree_reads)

    def merge(self, other):
        snap = other.as_dict()
        with self._lock:
            for kind in KINDS:
                self._counts[kind] += snap[kind]
            self.tree_reads += other.tree_reads

    def __getitem__(self, kind):
        return self._counts[kind]

    @property
    def total(self):
        with self._lock:
            return sum(self._counts.values())

    def as_dict(self):
        with self._lock:
            return dict(self._counts)

    def __repr__(self):
        body = ", ".join(f"{k}={v}" for k, v in self.as_dict().items())
        return f"QueryLedger({body})"


def _capacity(n):
    return 1 << max(0, (n - 1).bit_length())


def _fill_tree(tree, cap):
    # tree[..., cap:] already holds the leaves
    lo = cap // 2
    while lo >= 1:
        tree[..., lo:2 * lo] = tree[..., 2 * lo:4 * lo:2] + tree[..., 2 * lo + 1:4 * lo:2]
        lo //= 2


def _frozen(a):
    a.setflags(write=False)
    return a


def _check_finite(a):
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise SamplingError(f"non-finite entry at index {tuple(int(i) for i in bad)}")


class SampledVector:
    """A real vector with a length-square sum tree.

    Leaf ``i`` of ``tree`` (stored at ``cap + i``) holds ``values[i]**2``;
    padding leaves are zero. ``sqnorm`` is the root.
    """

    def __init__(self, values, tree, cap, ledger=None):
        self.values = values
        self.tree = tree
        self.cap = cap
        self.depth = cap.bit_length() - 1
        self.ledger = ledger if ledger is not None else QueryLedger()

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def sqnorm(self):
        return float(self.tree[1])

    def norm(self):
        return math.sqrt(self.sqnorm)

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"SampledVector(n={self.n}, norm={self.norm():.6g})"


def build_vector(values, ledger=None):
    v = np.array(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise SamplingError("empty vector")
    _check_finite(v)
    cap = _capacity(v.size)
    tree = np.zeros(2 * cap)
    tree[cap:cap + v.size] = v * v
    _fill_tree(tree, cap)
    return SampledVector(_frozen(v), _frozen(tree), cap, ledger)


def _vector_from_squares(sq, ledger=None):
    cap = _capacity(sq.size)
    tree = np.zeros(2 * cap)
    tree[cap:cap + sq.size] = sq
    _fill_tree(tree, cap)
    return SampledVector(_frozen(np.sqrt(sq)), _frozen(tree), cap, ledger)


def _ledger(obj, ledger):
    return obj.ledger if ledger is None else ledger


def vec_sample(sv, rng, ledger=None):
    """Index ``i`` with probability ``v_i**2 / ||v||**2``."""
    if sv.sqnorm <= 0.0:
        raise SamplingError("cannot sample zero vector")
    i = _kernels.descend(sv.tree, sv.cap, rng.random())
    _ledger(sv, ledger).add("sample", 1, tree_reads=sv.depth)
    return int(i)


def vec_sample_many(sv, rng, k, ledger=None):
    if sv.sqnorm <= 0.0:
        raise SamplingError("cannot sample zero vector")
    out = _kernels.descend_many(sv.tree, sv.cap, rng.random(int(k)))
    _ledger(sv, ledger).add("sample", k, tree_reads=k * sv.depth)
    return out


def vec_query(sv, i, ledger=None):
    if not 0 <= i < sv.n:
        raise SamplingError(f"index {i} out of range for length {sv.n}")
    _ledger(sv, ledger).add("query")
    return float(sv.values[i])


def vec_norm(sv, ledger=None):
    _ledger(sv, ledger).add("norm")
    return sv.norm()


class SampledMatrix:
    """Row-wise SQ access to a dense real m x n matrix.

    ``row_trees[i]`` is the sum tree of row ``i``; ``rownorms`` is a
    :class:`SampledVector` whose tree leaves are the row roots, so
    ``rownorms.tree[rownorms.cap + i] == row_trees[i, 1]`` exactly.
    """

    def __init__(self, values, row_trees, cap, rownorms, ledger=None):
        self.values = values
        self.row_trees = row_trees
        self.cap = cap
        self.depth = cap.bit_length() - 1
        self.rownorms = rownorms
        self.ledger = ledger if ledger is not None else QueryLedger()

    @property
    def shape(self):
        return self.values.shape

    @property
    def fro_sq(self):
        return self.rownorms.sqnorm

    @property
    def row_sq(self):
        """Squared row norms (leaves of the row-norm tree)."""
        m = self.shape[0]
        return self.rownorms.tree[self.rownorms.cap:self.rownorms.cap + m]

    def row(self, i):
        """Row ``i`` as a :class:`SampledVector` view sharing this ledger."""
        return SampledVector(self.values[i], self.row_trees[i], self.cap, self.ledger)

    @property
    def rows(self):
        return [self.row(i) for i in range(self.shape[0])]

    def __repr__(self):
        m, n = self.shape
        return f"SampledMatrix({m}x{n}, fro={math.sqrt(self.fro_sq):.6g})"


def build_matrix(rows, ledger=None):
    try:
        a = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise SamplingError("ragged rows") from exc
    if a.ndim != 2:
        raise SamplingError("ragged rows" if a.dtype == object else "matrix must be two-dimensional")
    if a.size == 0:
        raise SamplingError("empty matrix")
    _check_finite(a)
    m, n = a.shape
    cap = _capacity(n)
    trees = np.zeros((m, 2 * cap))
    trees[:, cap:cap + n] = a * a
    _fill_tree(trees, cap)
    rownorms = _vector_from_squares(trees[:, 1].copy())
    return SampledMatrix(_frozen(a), _frozen(trees), cap, rownorms, ledger)


def _check_row(sm, i):
    if not 0 <= i < sm.shape[0]:
        raise SamplingError(f"row {i} out of range for {sm.shape[0]} rows")


def mat_sample1(sm, rng, ledger=None):
    """Row ``i`` with probability ``||A_i||**2 / ||A||_F**2``."""
    if sm.fro_sq <= 0.0:
        raise SamplingError("cannot sample zero matrix")
    i = _kernels.descend(sm.rownorms.tree, sm.rownorms.cap, rng.random())
    _ledger(sm, ledger).add("sample1", 1, tree_reads=sm.rownorms.depth)
    return int(i)


def mat_sample1_many(sm, rng, k, ledger=None):
    if sm.fro_sq <= 0.0:
        raise SamplingError("cannot sample zero matrix")
    out = _kernels.descend_many(sm.rownorms.tree, sm.rownorms.cap, rng.random(int(k)))
    _ledger(sm, ledger).add("sample1", k, tree_reads=k * sm.rownorms.depth)
    return out


def mat_sample2(sm, i, rng, ledger=None):
    """Column ``j`` with probability ``A_ij**2 / ||A_i||**2``."""
    _check_row(sm, i)
    if sm.row_trees[i, 1] <= 0.0:
        raise SamplingError(f"zero row {i}")
    j = _kernels.descend(sm.row_trees[i], sm.cap, rng.random())
    _ledger(sm, ledger).add("sample2", 1, tree_reads=sm.depth)
    return int(j)


def mat_sample2_many(sm, i, rng, k, ledger=None):
    _check_row(sm, i)
    if sm.row_trees[i, 1] <= 0.0:
        raise SamplingError(f"zero row {i}")
    out = _kernels.descend_many(sm.row_trees[i], sm.cap, rng.random(int(k)))
    _ledger(sm, ledger).add("sample2", k, tree_reads=k * sm.depth)
    return out


def mat_query(sm, i, j, ledger=None):
    m, n = sm.shape
    if not (0 <= i < m and 0 <= j < n):
        raise SamplingError(f"entry ({i}, {j}) out of range for {m}x{n}")
    _ledger(sm, ledger).add("query")
    return float(sm.values[i, j])


def mat_row_norm(sm, i, ledger=None):
    _check_row(sm, i)
    _ledger(sm, ledger).add("norm")
    return math.sqrt(sm.row_trees[i, 1])


def mat_fro_norm(sm, ledger=None):
    _ledger(sm, ledger).add("norm")
    return math.sqrt(sm.fro_sq)


def tree_discrepancy(tree, cap):
    """Largest relative gap between an internal node and its children's sum."""
    tree = np.asarray(tree)
    worst = 0.0
    lo = 1
    while lo < cap:
        node = tree[..., lo:2 * lo]
        kids = tree[..., 2 * lo:4 * lo:2] + tree[..., 2 * lo + 1:4 * lo:2]
        scale = np.maximum(np.abs(kids), np.finfo(float).tiny)
        gap = np.abs(node - kids) / scale
        gap = np.where(kids == 0.0, np.abs(node), gap)
        worst = max(worst, float(np.max(gap)))
        lo *= 2
    return worst
