"""Instances, seeded trial runs, the dimension-scaling experiment and self-checks.

The dense oracle is used here (and only here) to fill spectral bounds, to
compute the reference solution and to score runs. Scoring never touches a
query ledger.
"""
from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import oracle
from .io import read_matrix, read_vector
from .output import SparseDescription, desc_norm, desc_sample_many
from .sgd import (MODES, derive_hyperparams, gradient_difference_moment, gradient_moments_x,
                  solve, v_space_gradient_moments)
from .sketch import sparsify_b
from .sq import (KINDS, QueryLedger, build_matrix, build_vector, make_rng, mat_sample1_many,
                 mat_sample2_many, vec_sample_many)

log = logging.getLogger(__name__)

PHASES = ("sketch", "solve", "output")
OUTPUT_SAMPLES = 8


class InstanceError(ValueError):
    pass


# --- instances ------------------------------------------------------------

@dataclass(frozen=True)
class InstanceSpec:
    """Recipe for a synthetic instance ``A = U diag(sigma) V^T``.

    ``sigmas`` fixes the singular values; otherwise they are log-uniform in
    ``[sigma_min, sigma_max]``. ``noise`` is the planted residual norm as a
    fraction of ``||A x_planted||``.
    """

    m: int
    n: int
    rank: int
    sigmas: tuple | None = None
    sigma_min: float = 1.0
    sigma_max: float = 2.0
    rhs: str = "planted"
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.m, self.n, self.rank) < 1:
            raise InstanceError("m, n and rank must be positive")
        if self.rank > min(self.m, self.n):
            raise InstanceError(f"rank {self.rank} exceeds min(m, n) = {min(self.m, self.n)}")
        if self.sigmas is not None:
            sig = tuple(float(x) for x in self.sigmas)
            if len(sig) != self.rank:
                raise InstanceError(f"{len(sig)} singular values given for rank {self.rank}")
            if min(sig) <= 0:
                raise InstanceError("singular values must be positive")
            object.__setattr__(self, "sigmas", sig)
        elif not 0 < self.sigma_min <= self.sigma_max:
            raise InstanceError("need 0 < sigma_min <= sigma_max")
        if self.rhs not in ("planted", "random"):
            raise InstanceError(f"unknown rhs mode {self.rhs!r}")
        if self.noise < 0:
            raise InstanceError("noise must be non-negative")
        if self.rhs == "planted" and self.noise > 0 and self.m == self.rank:
            raise InstanceError("orthogonal noise needs m > rank")

    _KEYS = {"m": int, "n": int, "rank": int, "k": int, "smin": float, "smax": float,
             "sigma_min": float, "sigma_max": float, "rhs": str, "noise": float, "seed": int}

    @classmethod
    def parse(cls, text):
        """Parse ``m=50,n=40,rank=5,smin=1,smax=2,noise=0.1,seed=7`` (``sigmas=2;1`` also allowed)."""
        kw = {}
        for item in filter(None, (p.strip() for p in text.split(","))):
            key, sep, val = item.partition("=")
            key = key.strip()
            if not sep:
                raise InstanceError(f"expected key=value, got {item!r}")
            if key == "sigmas":
                kw["sigmas"] = tuple(float(x) for x in val.split(";"))
                continue
            if key not in cls._KEYS:
                raise InstanceError(f"unknown key {key!r}")
            try:
                value = cls._KEYS[key](val)
            except ValueError as exc:
                raise InstanceError(f"bad value for {key}: {val!r}") from exc
            key = {"k": "rank", "smin": "sigma_min", "smax": "sigma_max"}.get(key, key)
            kw[key] = value
        if "rank" not in kw and "sigmas" in kw:
            kw["rank"] = len(kw["sigmas"])
        missing = {"m", "n", "rank"} - kw.keys()
        if missing:
            raise InstanceError(f"missing keys: {', '.join(sorted(missing))}")
        return cls(**kw)


@dataclass
class Instance:
    A: np.ndarray
    b: np.ndarray
    sm: object
    sigmas: np.ndarray | None = None
    x_planted: np.ndarray | None = None
    label: str = ""
    noise_norm: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self):
        return self.A.shape

    def spectrum(self):
        if "svd" not in self._cache:
            self._cache["svd"] = oracle.svd(self.A)
        return self._cache["svd"]

    def xstar(self, lam):
        key = ("xstar", float(lam))
        if key not in self._cache:
            self._cache[key] = oracle.solve_exact(self.A, self.b, lam, self.spectrum())
        return self._cache[key]

    def bounds(self, lam):
        key = ("bounds", float(lam))
        if key not in self._cache:
            self._cache[key] = oracle.spectral_bounds(self.A, self.b, lam, self.spectrum())
        return self._cache[key]


def _orthonormal(rng, rows, cols):
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diag(r))


def generate_instance(spec):
    """Dense A, b and the SQ structure for an instance spec."""
    rng = make_rng(spec.seed)
    k = spec.rank
    if spec.sigmas is not None:
        sig = np.sort(np.array(spec.sigmas))[::-1]
    else:
        sig = np.sort(np.exp(rng.uniform(math.log(spec.sigma_min), math.log(spec.sigma_max), k)))[::-1]
        if k > 1:
            # pin the extremes so the requested range is attained
            sig[0], sig[-1] = spec.sigma_max, spec.sigma_min
    U = _orthonormal(rng, spec.m, k)
    V = _orthonormal(rng, spec.n, k)
    A = (U * sig) @ V.T
    x_planted = None
    noise_norm = 0.0
    if spec.rhs == "planted":
        x_planted = V @ rng.standard_normal(k)
        clean = A @ x_planted
        b = clean
        if spec.noise > 0:
            g = rng.standard_normal(spec.m)
            g -= U @ (U.T @ g)
            g -= U @ (U.T @ g)
            noise_norm = spec.noise * float(np.linalg.norm(clean))
            b = clean + g * (noise_norm / np.linalg.norm(g))
    else:
        b = rng.standard_normal(spec.m)
    return Instance(A, b, build_matrix(A), sig, x_planted, label=_spec_label(spec), noise_norm=noise_norm)


def _spec_label(spec):
    return ",".join(f"{k}={v}" for k, v in asdict(spec).items() if v is not None)


def load_instance(matrix_path, rhs="random", seed=0, noise=0.0):
    """Instance from a matrix file; ``rhs`` is a vector file, ``planted`` or ``random``."""
    A = read_matrix(matrix_path)
    rng = make_rng(seed)
    m, n = A.shape
    x_planted = None
    noise_norm = 0.0
    if rhs == "random":
        b = rng.standard_normal(m)
    elif rhs == "planted":
        sp = oracle.svd(A)
        k = sp.rank
        if k == 0:
            raise InstanceError("planted rhs needs a nonzero matrix")
        x_planted = sp.Vt[:k].T @ rng.standard_normal(k)
        b = A @ x_planted
        if noise > 0:
            if k == m:
                raise InstanceError("orthogonal noise needs rank < m")
            g = rng.standard_normal(m)
            Uk = sp.U[:, :k]
            g -= Uk @ (Uk.T @ g)
            noise_norm = noise * float(np.linalg.norm(b))
            b = b + g * (noise_norm / np.linalg.norm(g))
    else:
        b = read_vector(rhs)
        if b.shape[0] != m:
            raise InstanceError(f"rhs has length {b.shape[0]}, matrix has {m} rows")
    return Instance(A, b, build_matrix(A), None, x_planted, label=str(matrix_path), noise_norm=noise_norm)


# --- trials ---------------------------------------------------------------

@dataclass
class RunReport:
    """Outcome of one seeded solve. Field names are part of the report format."""

    seed: int
    mode: str
    hyperparams: dict
    sketch: str
    relative_error: float
    sq_error: float
    xstar_norm: float
    success: bool
    measured_delta: float | None
    output_nnz: int
    bhat_nnz: int
    sparsity_law: bool
    queries: dict
    error_trace: list
    wall_time_s: float | None = None

    def as_dict(self, timings=True):
        d = {"kind": "trial", **asdict(self)}
        if not timings:
            d.pop("wall_time_s")
        return d

    def to_json(self, timings=True):
        return json.dumps(self.as_dict(timings))


def _ledger_totals(ledgers):
    out = {p: ledgers[p].as_dict() for p in PHASES}
    total = {k: sum(out[p][k] for p in PHASES) for k in KINDS}
    total["all"] = sum(total.values())
    out["total"] = total
    return out


def run_trial(inst, epsilon, lam, seed, mode="standard", output_samples=OUTPUT_SAMPLES,
              log_points=5, bounds=None, keep_result=False):
    """One solve from ``seed``, scored against the oracle solution.

    After solving, ``output_samples`` length-square samples of ``x`` are drawn
    through the sparse description and charged to the output phase. With
    ``keep_result`` the solver result is returned alongside the report.
    """
    start = time.perf_counter()
    xs = inst.xstar(lam)
    bounds = bounds if bounds is not None else inst.bounds(lam)
    b_norm = float(np.linalg.norm(inst.b))
    hp = derive_hyperparams(bounds, epsilon, lam, b_norm)
    rng = make_rng(seed)
    res = solve(inst.sm, inst.b, hp, rng, mode=mode, xstar=xs, log_points=log_points)
    d = res.description
    x = inst.A[d.indices].T @ d.coeffs if d.s else np.zeros(inst.shape[1])
    xs_norm = float(np.linalg.norm(xs))
    err = float(np.linalg.norm(x - xs))
    rel = err / xs_norm if xs_norm > 0 else float(np.linalg.norm(x))
    xx = float(x @ x)
    delta = d.Z / xx if xx > 0 and d.s else None
    ledgers = dict(res.ledgers)
    ledgers["output"] = QueryLedger()
    if delta is not None and output_samples > 0:
        budget = max(1000, math.ceil(100 * d.s * delta))
        desc_sample_many(d, rng, output_samples, budget, ledgers["output"])
    report = RunReport(
        seed=int(seed),
        mode=mode,
        hyperparams={**hp.as_dict(), "s_formula": hp.s},
        sketch=res.sketch,
        relative_error=rel,
        sq_error=err * err,
        xstar_norm=xs_norm,
        success=bool(err <= epsilon * xs_norm),
        measured_delta=delta,
        output_nnz=d.s,
        bhat_nnz=res.b_hat.nnz,
        sparsity_law=res.sparsity_law_holds,
        queries=_ledger_totals(ledgers),
        error_trace=[[t, e] for t, e in res.error_trace],
        wall_time_s=time.perf_counter() - start,
    )
    return (report, res) if keep_result else report


def worker_count():
    raw = os.environ.get("QIREG_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring QIREG_THREADS=%r", raw)
    return min(8, os.cpu_count() or 1)


def run_trials(inst, epsilon, lam, trials, mode="standard", master_seed=0, threads=None,
               output_samples=OUTPUT_SAMPLES):
    """``trials`` seeded runs (seed of trial i is ``master_seed ^ i``) and a summary.

    The summary excludes wall time so equal inputs give identical bytes.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if trials < 1:
        raise ValueError("need at least one trial")
    bounds = inst.bounds(lam)
    inst.xstar(lam)
    seeds = [master_seed ^ i for i in range(trials)]
    threads = threads or worker_count()

    def one(seed):
        return run_trial(inst, epsilon, lam, seed, mode, output_samples, bounds=bounds)

    if threads == 1:
        reports = [one(s) for s in seeds]
    else:
        with ThreadPoolExecutor(threads) as pool:
            reports = list(pool.map(one, seeds))
    return reports, summarize(reports, epsilon, lam, mode, master_seed)


def summarize(reports, epsilon, lam, mode, master_seed):
    xs_norm = reports[0].xstar_norm
    sq = np.array([r.sq_error for r in reports])
    deltas = [r.measured_delta for r in reports if r.measured_delta is not None]
    target = epsilon ** 2 * xs_norm ** 2
    mean_q = {}
    for phase in (*PHASES, "total"):
        keys = reports[0].queries[phase].keys()
        mean_q[phase] = {k: float(np.mean([r.queries[phase][k] for r in reports])) for k in keys}
    ok = sum(r.success for r in reports)
    return {
        "kind": "summary",
        "master_seed": int(master_seed),
        "trials": len(reports),
        "mode": mode,
        "epsilon": epsilon,
        "lambda": lam,
        "hyperparams": reports[0].hyperparams,
        "xstar_norm": xs_norm,
        "successes": ok,
        "success_fraction": ok / len(reports),
        "mean_sq_error": float(sq.mean()),
        "target_sq_error": target,
        "mean_sq_error_ratio": float(sq.mean() / target) if target > 0 else None,
        "mean_relative_error": float(np.mean([r.relative_error for r in reports])),
        "mean_delta": float(np.mean(deltas)) if deltas else None,
        "mean_output_nnz": float(np.mean([r.output_nnz for r in reports])),
        "sparsity_law_all": all(r.sparsity_law for r in reports),
        "mean_queries": mean_q,
    }


# --- dimension scaling ----------------------------------------------------

def embed(inst, N, rng):
    """``A' = [A Q; 0]`` of size ``N x N`` with ``Q`` having orthonormal rows.

    Singular values, ``||b||`` and ``||x*||`` are unchanged; ``x*' = Q^T x*``.
    """
    m0, n0 = inst.shape
    if N < max(m0, n0):
        raise InstanceError(f"embedding dimension {N} below {max(m0, n0)}")
    Q = _orthonormal(rng, N, n0).T
    A = np.zeros((N, N))
    A[:m0] = inst.A @ Q
    b = np.zeros(N)
    b[:m0] = inst.b
    return Instance(A, b, build_matrix(A), inst.sigmas, None, label=f"{inst.label} embedded in {N}")


def _best_time(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def scaling_experiment(base, dims, epsilon, lam=0.0, seeds=(0, 1, 2), seed=0, mode="standard",
                       oracle_repeats=3):
    """Run the same solve on ``base`` embedded in each ambient dimension.

    Returns one row per dimension: hyperparameters, spectrum drift, the
    mean solve-phase query count over ``seeds``, the count predicted by the
    per-step formula ``sum_t C (1 + nnz_t)`` and the dense oracle solve time.
    """
    rng = make_rng(seed)
    ref = base.spectrum()
    k = ref.rank
    rows = []
    for N in dims:
        inst = embed(base, N, rng)
        sp = inst.spectrum()
        drift = float(np.max(np.abs(sp.s[:k] - ref.s[:k]))) if k else 0.0
        tail = float(sp.s[k]) if sp.s.size > k else 0.0
        bounds = inst.bounds(lam)
        hp = derive_hyperparams(bounds, epsilon, lam, float(np.linalg.norm(inst.b)))
        xs = inst.xstar(lam)
        q, formula, rel = [], [], []
        for sd in seeds:
            res = solve(inst.sm, inst.b, hp, make_rng(sd), mode=mode)
            q.append(res.ledgers["solve"]["query"])
            kq = hp.T if mode == "kaczmarz" else 0
            formula.append(int(hp.C * np.sum(1 + res.nnz_trace[:-1])) + kq)
            d = res.description
            x = inst.A[d.indices].T @ d.coeffs
            rel.append(float(np.linalg.norm(x - xs) / np.linalg.norm(xs)))
        t_oracle = _best_time(lambda: oracle.solve_exact(inst.A, inst.b, lam), oracle_repeats)
        rows.append({
            "n": N, "m": N,
            "eta": hp.eta, "T": hp.T, "C": hp.C, "s": hp.s,
            "spectrum_drift": drift, "spectrum_tail": tail,
            "solve_queries": float(np.mean(q)),
            "formula_match": q == formula,
            "desc_query_cost": float(np.mean([res.description.s])),
            "mean_relative_error": float(np.mean(rel)),
            "oracle_time_s": t_oracle,
        })
    return rows


def scaling_verdict(rows, rel_tol=0.10, spectrum_tol=1e-10, eta_tol=1e-9):
    """Pass/fail statistics for a scaling table.

    ``T``, ``C`` and ``s`` must agree exactly; ``eta`` up to ``eta_tol``
    relative, since the spectral data comes from a fresh SVD per dimension.
    """
    eta = np.array([r["eta"] for r in rows])
    hp_same = bool(len({(r["T"], r["C"], r["s"]) for r in rows}) == 1
                   and np.ptp(eta) / eta.min() <= eta_tol)
    q = np.array([r["solve_queries"] for r in rows])
    spread = float((q.max() - q.min()) / q.min())
    spec_ok = all(r["spectrum_drift"] <= spectrum_tol and r["spectrum_tail"] <= spectrum_tol for r in rows)
    n = np.array([r["n"] for r in rows], dtype=float)
    t = np.array([r["oracle_time_s"] for r in rows])
    slope = float(np.polyfit(np.log(n), np.log(t), 1)[0]) if len(rows) > 1 else float("nan")
    return {
        "hyperparams_identical": hp_same,
        "query_spread": spread,
        "spectrum_preserved": spec_ok,
        "formula_exact": all(r["formula_match"] for r in rows),
        "oracle_time_slope": slope,
        "passed": bool(hp_same and spec_ok and spread <= rel_tol and slope > 1.0),
    }


def format_table(rows):
    cols = ["n", "eta", "T", "C", "s", "solve_queries", "desc_query_cost",
            "mean_relative_error", "spectrum_drift", "oracle_time_s"]
    fmt = {"eta": "{:.4g}", "solve_queries": "{:.0f}", "desc_query_cost": "{:.1f}",
           "mean_relative_error": "{:.4f}", "spectrum_drift": "{:.1e}", "oracle_time_s": "{:.4f}"}
    cells = [[fmt.get(c, "{}").format(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(x.rjust(w) for x, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


# --- self-checks ----------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    stats: dict

    def as_dict(self):
        return {"kind": "check", "name": self.name, "passed": self.passed, **self.stats}


def _rel(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.linalg.norm(b)), 1e-300)
    return float(np.linalg.norm(a - b)) / scale


def _random_small(rng, max_dim):
    # Gaussian entries: the closed-form variance assumes no zero entries
    m = int(rng.integers(2, max_dim + 1))
    n = int(rng.integers(2, max_dim + 1))
    return rng.standard_normal((m, n))


def moment_check(seed=0, instances=100, max_dim=8, tol=1e-10):
    """Enumerated gradient moments against their closed forms.

    Per instance (C = 1): unbiasedness, the variance identity
    ``E||g - grad f||^2 = ||A||_F^4 ||x||^2 - ||A^T A x||^2``, the
    paired-difference identity, and the coefficient-space mean. The D-norm
    variance is checked against its bound at ``C = ceil(||A||_F^2 / ||A||^2)``.
    """
    rng = make_rng(seed)
    worst = dict.fromkeys(("mean", "variance", "difference", "v_mean"), 0.0)
    vbound_ratio = 0.0
    for _ in range(instances):
        A = _random_small(rng, max_dim)
        m, n = A.shape
        b = rng.standard_normal(m)
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        v = rng.standard_normal(m)
        lam = float(rng.uniform(0.0, 1.0))
        fro2 = float(np.sum(A * A))
        mean, var = gradient_moments_x(A, b, lam, x, C=1)
        worst["mean"] = max(worst["mean"], _rel(mean, oracle.grad_exact(A, b, lam, x)))
        ata = A.T @ A
        var_formula = fro2 ** 2 * float(x @ x) - float(np.sum((ata @ x) ** 2))
        worst["variance"] = max(worst["variance"], abs(var - var_formula) / max(abs(var_formula), 1e-300))
        h = x - y
        diff = gradient_difference_moment(A, b, lam, x, y)
        hvar = fro2 ** 2 * float(h @ h) - float(np.sum((ata @ h) ** 2))
        diff_formula = float(np.sum(((ata + lam * np.eye(n)) @ h) ** 2)) + hvar
        worst["difference"] = max(worst["difference"], abs(diff - diff_formula) / diff_formula)
        op2 = float(np.linalg.norm(A, 2)) ** 2
        C = max(1, math.ceil(fro2 / op2 * (1 - 1e-12)))
        vmean, _ = v_space_gradient_moments(A, b, lam, v, C=1)
        worst["v_mean"] = max(worst["v_mean"], _rel(vmean, A @ (A.T @ v) - b + lam * v))
        _, dvar = v_space_gradient_moments(A, b, lam, v, C=C)
        atv = A.T @ v
        bound = 2.0 * fro2 * op2 * float(atv @ atv)
        vbound_ratio = max(vbound_ratio, dvar / bound if bound > 0 else (0.0 if dvar <= 0 else math.inf))
    passed = bool(max(worst.values()) <= tol and vbound_ratio <= 1.0)
    return CheckResult("moments", passed, {
        "instances": instances, "tolerance": tol,
        **{f"max_rel_err_{k}": v for k, v in worst.items()},
        "max_dvar_over_bound": vbound_ratio,
    })


def _freq_test(counts, probs, alpha):
    """Chi-square over the positive-probability cells, TV and zero-cell leakage."""
    counts = np.asarray(counts, dtype=np.float64)
    pos = probs > 0
    draws = counts.sum()
    leak = int(counts[~pos].sum())
    exp = probs[pos] * draws
    chi2 = float(np.sum((counts[pos] - exp) ** 2 / exp))
    df = int(pos.sum()) - 1
    crit = float(stats.chi2.ppf(1.0 - alpha, df)) if df > 0 else 0.0
    tv = 0.5 * float(np.abs(counts / draws - probs).sum())
    return {"chi2": chi2, "df": df, "critical": crit, "tv": tv, "zero_cell_draws": leak,
            "passed": bool(leak == 0 and (df == 0 or chi2 <= crit) and tv < 0.02)}


def _signed_magnitudes(rng, shape, zero_frac=0.2):
    a = rng.uniform(0.5, 2.0, shape) * rng.choice([-1.0, 1.0], shape)
    a[rng.random(shape) < zero_frac] = 0.0
    return a


def distribution_check(seed=0, draws=100_000, alpha=1e-3):
    """Frequency tests for vector, row and within-row sampling."""
    rng = make_rng(seed)
    results = {}
    vec = _signed_magnitudes(rng, 16)
    vec[0] = 1.5
    sv = build_vector(vec)
    counts = np.bincount(vec_sample_many(sv, rng, draws), minlength=16)
    results["sample"] = _freq_test(counts, vec * vec / sv.sqnorm, alpha)
    A = _signed_magnitudes(rng, (8, 10))
    A[:, 0] = 1.0
    A[3] = 0.0
    sm = build_matrix(A)
    rowsq = np.sum(A * A, axis=1)
    counts = np.bincount(mat_sample1_many(sm, rng, draws), minlength=8)
    results["sample1"] = _freq_test(counts, rowsq / rowsq.sum(), alpha)
    counts = np.bincount(mat_sample2_many(sm, 5, rng, draws), minlength=10)
    results["sample2"] = _freq_test(counts, A[5] ** 2 / rowsq[5], alpha)
    passed = all(r["passed"] for r in results.values())
    return CheckResult("distribution", passed, {"draws": draws, "alpha": alpha, **results})


def sketch_check(seed=0, m=30, n=20, s=200, sketches=10_000, slack=1.1):
    """Monte-Carlo sketch error against ``||A||_F^2 ||b||^2 / s`` in both norms."""
    rng = make_rng(seed)
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    sm = build_matrix(A)
    fro2 = sm.fro_sq
    rownorm = np.sqrt(sm.row_sq)
    atb = A.T @ b
    err_x = np.empty(sketches)
    err_d = np.empty(sketches)
    for k in range(sketches):
        bh = sparsify_b(sm, b, s, rng, QueryLedger()).to_dense()
        err_x[k] = float(np.sum((A.T @ bh - atb) ** 2))
        err_d[k] = float(np.sum((rownorm * (bh - b)) ** 2))
    bound = fro2 * float(b @ b) / s
    passed = bool(err_x.mean() <= slack * bound and err_d.mean() <= slack * bound)
    return CheckResult("sketch", passed, {
        "m": m, "n": n, "s": s, "sketches": sketches, "bound": bound,
        "mean_err_x": float(err_x.mean()), "mean_err_d": float(err_d.mean()),
        "ratio_x": float(err_x.mean() / bound), "ratio_d": float(err_d.mean() / bound),
    })


def output_check(seed=0, m=20, n=15, s=10, draws=100_000, reps=100, eps_est=0.1, delta=0.05):
    """Rejection sampling on a random sparse description: law, trial count and norm estimate."""
    rng = make_rng(seed)
    A = rng.standard_normal((m, n))
    sm = build_matrix(A)
    idx = np.sort(rng.choice(m, s, replace=False))
    coef = rng.standard_normal(s)
    d = SparseDescription(sm, idx, coef)
    x = A[idx].T @ coef
    xx = float(x @ x)
    sdelta = d.s * d.Z / xx
    out, trials = desc_sample_many(d, rng, draws, ledger=QueryLedger())
    law = _freq_test(np.bincount(out, minlength=n), x * x / xx, 1e-3)
    trial_ratio = trials / draws / sdelta
    est = np.array([desc_norm(d, eps_est, delta, rng, ledger=QueryLedger()) for _ in range(reps)])
    within = int(np.sum(np.abs(est / math.sqrt(xx) - 1.0) <= 0.1))
    passed = bool(law["tv"] < 0.02 and 0.5 <= trial_ratio <= 2.0 and within >= math.ceil(0.93 * reps))
    return CheckResult("output", passed, {
        "s": s, "delta": d.Z / xx, "tv": law["tv"], "chi2": law["chi2"], "df": law["df"],
        "trials_over_s_delta": trial_ratio, "norm_within_10pct": within, "reps": reps,
    })


def xstar_bound_check(seed=0, triples=200, max_dim=12):
    """``||x*||`` lower bound on random triples; equality when ``||A|| <= sqrt(lam)``.

    Half of the triples draw ``lam`` above ``||A||^2`` so the equality branch
    is exercised.
    """
    rng = make_rng(seed)
    worst_gap = -math.inf
    worst_eq = 0.0
    n_eq = 0
    for t in range(triples):
        m = int(rng.integers(1, max_dim + 1))
        n = int(rng.integers(1, max_dim + 1))
        k = int(rng.integers(1, min(m, n) + 1))
        A = rng.standard_normal((m, k)) @ rng.standard_normal((k, n))
        b = rng.standard_normal(m)
        op = float(np.linalg.norm(A, 2))
        lam = float(op * op * (rng.uniform(0.0, 1.0) if t % 2 == 0 else rng.uniform(1.0, 4.0)))
        sp = oracle.svd(A)
        xs = float(np.linalg.norm(oracle.solve_exact(A, b, lam, sp)))
        lb = oracle.xstar_lower_bound(A, b, lam, sp)
        worst_gap = max(worst_gap, lb - xs)
        if op <= math.sqrt(lam):
            n_eq += 1
            worst_eq = max(worst_eq, abs(lb - xs) / xs)
    passed = bool(worst_gap <= 1e-10 and worst_eq <= 1e-8)
    return CheckResult("xstar_bound", passed, {
        "triples": triples, "max_bound_minus_norm": worst_gap,
        "equality_cases": n_eq, "max_equality_rel_err": worst_eq,
    })


CHECKS = {
    "moments": moment_check,
    "distribution": distribution_check,
    "sketch": sketch_check,
    "output": output_check,
    "xstar_bound": xstar_bound_check,
}
