"""Stochastic gradient descent over the coefficient vector ``v`` with ``x = A^T v``.

One iteration samples a row ``r`` by squared row norm and ``C`` columns of
that row by squared entry, then updates

    v <- (1 - eta lam) v + eta b_hat - eta (||A||_F^2 / C) sum_j <A_{:,c_j}, v> / A_{r,c_j} e_r

so the support of ``v`` grows by at most one element per step. The
``kaczmarz`` mode replaces ``b_hat`` by ``(||A||_F^2 / ||A_r||^2) b_r e_r``.

The second half of the module holds test-side instruments: single
realizations of the stochastic gradient and exact moments by enumeration.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .output import SparseDescription
from .sketch import SparseVector, ceil_guarded, choose_s, exact_rhs, sparsify_b
from .sq import QueryLedger, SamplingError, mat_query, mat_sample1, mat_sample2_many

log = logging.getLogger(__name__)

KAPPA = 10.0
CHUNK = 1 << 16
DROP_BELOW = 1e-300
MODES = ("standard", "kaczmarz")


@dataclass(frozen=True)
class HyperParams:
    eta: float
    T: int
    C: int
    s: int
    lam: float
    epsilon: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if min(self.T, self.C, self.s) < 1:
            raise ValueError("T, C and s must be at least 1")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")

    def as_dict(self):
        return {"eta": self.eta, "T": self.T, "C": self.C, "s": self.s,
                "lambda": self.lam, "epsilon": self.epsilon}


def derive_hyperparams(bounds, epsilon, lam, b_norm, kappa=KAPPA):
    """Step size, iteration count, column batch and sketch size from spectral bounds.

    Looser bounds (larger ``op_norm_upper``, smaller ``sigma_lower`` or
    ``xstar_norm_lower``) only shrink ``eta`` and grow ``T``, ``C``, ``s``.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    fro2 = bounds.fro_norm ** 2
    op2 = bounds.op_norm_upper ** 2
    if lam > kappa * bounds.fro_norm * bounds.op_norm_upper:
        raise ValueError(f"lambda={lam} exceeds {kappa} * ||A||_F * ||A||")
    gap = bounds.sigma_lower ** 2 + lam
    eta = epsilon ** 2 * gap / (32.0 * fro2 * op2 + 16.0 * lam ** 2)
    T = 32.0 * math.log(math.sqrt(8.0) / epsilon) * (2.0 * fro2 * op2 + lam ** 2) / (epsilon ** 2 * gap ** 2)
    C = fro2 / op2
    return HyperParams(
        eta=eta,
        T=max(1, ceil_guarded(T)),
        C=max(1, ceil_guarded(C)),
        s=choose_s(bounds, b_norm, epsilon, lam),
        lam=float(lam),
        epsilon=float(epsilon),
    )


@dataclass
class SolverState:
    """Coefficients as an index -> value map, plus the iteration counter."""

    v: dict = field(default_factory=dict)
    t: int = 0
    error_trace: list = field(default_factory=list)

    @property
    def nnz(self):
        return len(self.v)

    def to_sparse(self, dim, drop_below=DROP_BELOW):
        return SparseVector.from_mapping(dim, self.v, drop_below)


def sample_gradient_support(A, C, rng, ledger=None):
    """Row ``r`` by squared row norm, then ``C`` i.i.d. columns of row ``r``."""
    r = mat_sample1(A, rng, ledger)
    cols = mat_sample2_many(A, r, rng, C, ledger)
    return r, cols


def apply_update(state, r, cols, b_hat, hp, A, ledger=None, b=None, mode="standard"):
    """One iteration with fixed ``(r, cols)``; returns a new state.

    Reference implementation of the kernel step, with an explicit map for
    ``v``. In ``kaczmarz`` mode ``b`` (dense) supplies ``b_r``.
    """
    ledger = A.ledger if ledger is None else ledger
    vals = A.values
    acc = 0.0
    for c in cols:
        arc = mat_query(A, r, int(c), ledger)
        if arc == 0.0:
            raise SamplingError(f"sampled zero entry ({r}, {int(c)})")
        ip = 0.0
        for i, vi in state.v.items():
            ip += vals[i, c] * vi
        ledger.add("query", len(state.v))
        acc += ip / arc
    fro_sq = A.fro_sq
    grad_r = fro_sq * acc / len(cols)
    decay = 1.0 - hp.eta * hp.lam
    new = {i: vi * decay for i, vi in state.v.items()} if decay != 1.0 else dict(state.v)
    if mode == "kaczmarz":
        ledger.add("query")
        ledger.add("norm")
        grad_r -= fro_sq / A.row_sq[r] * b[r]
    else:
        for i, bi in zip(b_hat.indices.tolist(), b_hat.values.tolist()):
            new[i] = new.get(i, 0.0) + hp.eta * bi
    new[r] = new.get(r, 0.0) - hp.eta * grad_r
    return SolverState(new, state.t + 1, list(state.error_trace))


@dataclass
class SolveResult:
    description: SparseDescription
    coefficients: SparseVector
    b_hat: SparseVector
    hp: HyperParams
    mode: str
    sketch: str
    ledgers: dict
    nnz_trace: np.ndarray
    error_trace: list
    elapsed: float
    rows: np.ndarray | None = None
    cols: np.ndarray | None = None

    @property
    def sparsity_law_holds(self):
        t = np.arange(self.nnz_trace.size)
        return bool(np.all(self.nnz_trace <= t + self.b_hat.nnz)) and \
            self.coefficients.nnz <= self.hp.T + self.b_hat.nnz


def _dense_b(b):
    return np.asarray(getattr(b, "values", b), dtype=np.float64)


def solve(A, b, hp, rng, mode="standard", xstar=None, log_points=5, sketch_cap=True, record=False):
    """Run ``hp.T`` iterations from ``v = 0`` and return the final sparse description.

    ``b`` needs only entry queries. With ``sketch_cap`` a sketch size at
    least the number of rows is replaced by ``b`` itself on the nonzero
    rows. Supplying ``xstar`` records ``||x^(t) - x*||^2`` at ``log_points``
    evenly spaced iterations; that instrumentation is not charged to any
    ledger.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if A.fro_sq <= 0.0:
        raise SamplingError("cannot solve with a zero matrix")
    start = time.perf_counter()
    m, n = A.shape
    bv = _dense_b(b)
    if bv.shape[0] != m:
        raise ValueError(f"b has length {bv.shape[0]}, expected {m}")
    ledgers = {"sketch": QueryLedger(), "solve": QueryLedger()}
    if mode == "kaczmarz":
        if hp.lam != 0.0:
            raise ValueError("kaczmarz mode requires lambda = 0")
        b_hat = SparseVector.empty(m)
        sketch = "none"
    elif sketch_cap and hp.s >= m:
        log.info("sketch size %d >= %d rows; using b on the nonzero rows directly", hp.s, m)
        b_hat = exact_rhs(A, b, ledgers["sketch"])
        sketch = "exact"
    else:
        b_hat = sparsify_b(A, b, hp.s, rng, ledgers["sketch"])
        sketch = "sampled"

    row_rng, col_rng = rng.spawn(2)
    T, C = hp.T, hp.C
    v = np.zeros(m)
    supp = np.empty(m, dtype=np.int64)
    in_supp = np.zeros(m, dtype=np.bool_)
    nnz = b_hat.nnz
    supp[:nnz] = b_hat.indices
    in_supp[b_hat.indices] = True
    nnz_trace = np.empty(T + 1, dtype=np.int64)
    nnz_trace[0] = nnz

    if xstar is not None:
        xs = np.asarray(xstar, dtype=np.float64)
        log_times = np.unique(np.round(np.linspace(0, T, max(2, log_points))).astype(np.int64))
        err = np.zeros(log_times.size)
        err[0] = float(xs @ xs)
        log_pos = 1
    else:
        xs = np.zeros(n)
        log_times = np.empty(0, dtype=np.int64)
        err = np.empty(0)
        log_pos = 0
    scratch = np.zeros(n)
    rec_r = np.empty(T if record else 0, dtype=np.int64)
    rec_c = np.empty((T, C) if record else (0, C), dtype=np.int64)

    queries = 0
    t = 0
    while t < T:
        k = min(CHUNK, T - t)
        u_rows = row_rng.random(k)
        u_cols = col_rng.random((k, C))
        nnz, q, log_pos = _kernels.sgd_chunk(
            A.values, A.row_trees, A.cap, A.rownorms.tree, A.rownorms.cap, A.fro_sq, A.row_sq,
            v, supp, in_supp, nnz, b_hat.indices, b_hat.values, bv, mode == "kaczmarz",
            hp.eta, hp.lam, C, u_rows, u_cols, t,
            nnz_trace, log_times, log_pos, xs, err, scratch,
            rec_r[t:t + k] if record else rec_r, rec_c[t:t + k] if record else rec_c, record)
        queries += q
        t += k

    solve_ledger = ledgers["solve"]
    solve_ledger.add("norm", 1)
    solve_ledger.add("sample1", T, tree_reads=T * A.rownorms.depth)
    solve_ledger.add("sample2", T * C, tree_reads=T * C * A.depth)
    solve_ledger.add("query", queries)
    if mode == "kaczmarz":
        solve_ledger.add("query", T)
        solve_ledger.add("norm", T)

    idx = np.sort(supp[:nnz])
    coeffs = SparseVector(m, idx, v[idx])
    desc = SparseDescription.from_sparse(A, coeffs, DROP_BELOW)
    elapsed = time.perf_counter() - start
    return SolveResult(
        description=desc,
        coefficients=SparseVector(m, desc.indices, desc.coeffs),
        b_hat=b_hat,
        hp=hp,
        mode=mode,
        sketch=sketch,
        ledgers=ledgers,
        nnz_trace=nnz_trace,
        error_trace=[(int(a), float(e)) for a, e in zip(log_times, err)],
        elapsed=elapsed,
        rows=rec_r if record else None,
        cols=rec_c if record else None,
    )


# --- test-side instruments ------------------------------------------------

def _dense(A):
    return np.asarray(getattr(A, "values", A), dtype=np.float64)


def stochastic_gradient_x(A, b, lam, x, C, rng):
    """One draw of the stochastic gradient at a dense point ``x``."""
    r, cols = sample_gradient_support(A, C, rng)
    a = A.values
    arc = a[r, cols]
    scale = A.fro_sq * np.mean(x[cols] / arc)
    return scale * a[r] - a.T @ _dense_b(b) + lam * np.asarray(x, dtype=np.float64)


def _pairs(a):
    fro_sq = float(np.sum(a * a))
    if fro_sq == 0.0:
        raise SamplingError("zero matrix")
    r, c = np.nonzero(a)
    return fro_sq, r, c, a[r, c] ** 2 / fro_sq


def enumerate_gradient_x(A, b, lam, x):
    """All single-column (C = 1) realizations and their probabilities."""
    a = _dense(A)
    x = np.asarray(x, dtype=np.float64)
    fro_sq, r, c, p = _pairs(a)
    const = -a.T @ _dense_b(b) + lam * x
    g = (fro_sq * x[c] / a[r, c])[:, None] * a[r] + const
    return p, g


def gradient_moments_x(A, b, lam, x, C=1):
    """Exact mean and variance ``E||g - E g||^2`` of the stochastic gradient.

    C = 1 is a plain weighted sum over all realizations. Larger C uses the
    per-row conditional moments of a single column draw: given the row,
    the batch average has variance ``1/C`` of one draw.
    """
    if C == 1:
        p, g = enumerate_gradient_x(A, b, lam, x)
        mean = p @ g
        dev = g - mean
        return mean, float(p @ np.einsum("ij,ij->i", dev, dev))
    a = _dense(A)
    x = np.asarray(x, dtype=np.float64)
    fro_sq = float(np.sum(a * a))
    rowsq = np.einsum("ij,ij->i", a, a)
    rand_mean = np.zeros(a.shape[1])
    second = 0.0
    for r in np.flatnonzero(rowsq):
        nz = a[r] != 0.0
        pc = a[r, nz] ** 2 / rowsq[r]
        mult = fro_sq * x[nz] / a[r, nz]
        m1, m2 = pc @ mult, pc @ (mult * mult)
        pr = rowsq[r] / fro_sq
        rand_mean += pr * m1 * a[r]
        second += pr * rowsq[r] * (m2 / C + (1.0 - 1.0 / C) * m1 * m1)
    mean = rand_mean - a.T @ _dense_b(b) + lam * x
    return mean, float(second - rand_mean @ rand_mean)


def gradient_difference_moment(A, b, lam, x, y):
    """``E||g(x) - g(y)||^2`` with both evaluated on the same draw (C = 1)."""
    p, gx = enumerate_gradient_x(A, b, lam, x)
    _, gy = enumerate_gradient_x(A, b, lam, y)
    d = gx - gy
    return float(p @ np.einsum("ij,ij->i", d, d))


def enumerate_gradient_v(A, b, lam, v):
    """All C = 1 realizations of the coefficient-space gradient (rows of an m-column array)."""
    a = _dense(A)
    v = np.asarray(v, dtype=np.float64)
    fro_sq, r, c, p = _pairs(a)
    x = a.T @ v
    g = np.tile(-_dense_b(b) + lam * v, (p.size, 1))
    g[np.arange(p.size), r] += fro_sq * x[c] / a[r, c]
    return p, g


def v_space_gradient_moments(A, b, lam, v, C=1):
    """Exact mean of the coefficient-space gradient and its variance in the D norm.

    ``D = diag(||A_i||)``. The realization at ``(r, c)`` is
    ``||A||_F^2 (A^T v)_c / A_rc e_r - b + lam v``.
    """
    a = _dense(A)
    v = np.asarray(v, dtype=np.float64)
    bv = _dense_b(b)
    if C == 1:
        p, g = enumerate_gradient_v(a, bv, lam, v)
        mean = p @ g
        dev = g - mean
        rowsq = np.einsum("ij,ij->i", a, a)
        return mean, float(p @ (dev * dev @ rowsq))
    fro_sq = float(np.sum(a * a))
    if fro_sq == 0.0:
        raise SamplingError("zero matrix")
    rowsq = np.einsum("ij,ij->i", a, a)
    x = a.T @ v
    # per-row conditional moments of the scalar multiplier on e_r
    m1 = np.zeros(a.shape[0])
    m2 = np.zeros(a.shape[0])
    for r in np.flatnonzero(rowsq):
        nz = a[r] != 0.0
        pc = a[r, nz] ** 2 / rowsq[r]
        mult = fro_sq * x[nz] / a[r, nz]
        m1[r] = pc @ mult
        m2[r] = pc @ (mult * mult)
    pr = rowsq / fro_sq
    w = pr * m1  # E[multiplier * e_r]
    mean = w - bv + lam * v
    second = m2 / C + (1.0 - 1.0 / C) * m1 * m1
    # E||D(mult e_r - w)||^2 = E[rowsq_r mult^2] - 2 E[mult rowsq_r w_r] + ||D w||^2
    dvar = float(pr @ (rowsq * second) - 2.0 * pr @ (m1 * rowsq * w) + rowsq @ (w * w))
    return mean, dvar
