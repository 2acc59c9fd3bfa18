import math

import numpy as np
import pytest

from qireg import oracle
from qireg.sq import make_rng


def low_rank(rng, m, n, k):
    return rng.standard_normal((m, k)) @ rng.standard_normal((k, n))


def test_svd_diag_and_zero():
    assert np.allclose(oracle.svd(np.diag([2.0, 1.0])).s, [2, 1])
    sp = oracle.svd(np.zeros((3, 2)))
    assert np.all(sp.s == 0) and sp.rank == 0 and sp.sigma_min == 0


def test_svd_rank_of_product():
    A = low_rank(make_rng(0), 20, 15, 5)
    sp = oracle.svd(A)
    assert int(np.sum(sp.s > 1e-8 * sp.s[0])) == 5
    assert sp.rank == 5
    assert np.allclose((sp.U * sp.s) @ sp.Vt, A, atol=1e-12)
    assert np.allclose(sp.U.T @ sp.U, np.eye(sp.s.size), atol=1e-12)


def test_desk_cap_and_non_finite():
    with pytest.raises(oracle.OracleError, match="capped"):
        oracle.as_dense(np.zeros((oracle.DESK_MAX + 1, 2)))
    with pytest.raises(oracle.OracleError):
        oracle.as_dense(np.array([[np.inf]]))


@pytest.mark.parametrize("A,b,lam,want", [
    (np.eye(2), [1, 2], 0.0, [1, 2]),
    (np.eye(2), [1, 1], 1.0, [0.5, 0.5]),
    (np.array([[1.0, 0], [0, 0]]), [3, 7], 0.0, [3, 0]),
])
def test_solve_exact_examples(A, b, lam, want):
    assert np.allclose(oracle.solve_exact(A, b, lam), want, atol=1e-14)


def test_solve_exact_optimality():
    rng = make_rng(1)
    for _ in range(20):
        A = low_rank(rng, 12, 9, 4)
        b = rng.standard_normal(12)
        lam = float(rng.uniform(0, 2))
        x = oracle.solve_exact(A, b, lam)
        g = oracle.grad_exact(A, b, lam, x)
        assert np.linalg.norm(g) <= 1e-8 * (np.linalg.norm(A, 2) ** 2 + lam) * np.linalg.norm(x)


def test_grad_examples_and_finite_differences():
    assert np.allclose(oracle.grad_exact(np.eye(3), np.zeros(3), 0.0, [1, 2, 3]), [1, 2, 3])
    rng = make_rng(2)
    A = rng.standard_normal((8, 6))
    b = rng.standard_normal(8)
    x = rng.standard_normal(6)
    lam = 0.3
    g = oracle.grad_exact(A, b, lam, x)
    h = 1e-5
    fd = np.array([(oracle.f_value(A, b, lam, x + h * e) - oracle.f_value(A, b, lam, x - h * e)) / (2 * h)
                   for e in np.eye(6)])
    assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(g)


def test_projector_weight():
    assert oracle.projector_weight(1.0, 4.0) == pytest.approx(0.8)
    assert oracle.projector_weight(2.0, 4.0) == pytest.approx(1.0)
    assert oracle.projector_weight(0.0, 4.0) == 0.0
    sig = np.linspace(1e-3, 1.0, 200)
    p = oracle.projector_weight(sig, 1.0)
    assert np.all(p >= sig - 1e-15) and np.all(p <= 1 + 1e-15)


def test_projector_lambda_zero_is_range_projector():
    A = low_rank(make_rng(3), 7, 5, 3)
    P = oracle.thresholded_projector(A, 0.0)
    U = oracle.svd(A).U[:, :3]
    assert np.allclose(P, U @ U.T, atol=1e-12)


def test_xstar_bound_examples():
    assert oracle.xstar_lower_bound(np.eye(2), [3, 4], 0.0) == pytest.approx(5.0)
    b = np.array([1.0, -2.0, 0.5])
    bound = oracle.xstar_lower_bound(0.5 * np.eye(3), b, 1.0)
    assert bound == pytest.approx(0.8 * np.linalg.norm(b) / 2)
    assert bound == pytest.approx(np.linalg.norm(oracle.solve_exact(0.5 * np.eye(3), b, 1.0)))


def test_projector_chain():
    # the ||x*|| lower bound gives ||A|| ||x*|| >= ||Pi b|| / 2 for lambda <= ||A||^2
    rng = make_rng(4)
    for _ in range(200):
        A = low_rank(rng, 9, 7, 3)
        b = rng.standard_normal(9)
        op2 = np.linalg.norm(A, 2) ** 2
        lam = float(rng.uniform(0, op2))
        xs = oracle.solve_exact(A, b, lam)
        pb = oracle.thresholded_projector(A, lam) @ b
        lhs = op2 * (xs @ xs) / (b @ b)
        assert lhs >= (pb @ pb) / (4 * (b @ b)) - 1e-12


def test_delta_examples():
    v = np.array([1.0, -2.0, 3.0])
    assert oracle.delta_exact(np.eye(3), v) == pytest.approx(1.0)
    A = np.array([[2.0, 0.0], [1.0, 1.0]])
    assert oracle.delta_exact(A, [1.0, 0.0]) == pytest.approx(1.0)
    with pytest.raises(oracle.OracleError):
        oracle.delta_exact(A, [0.0, 0.0])


def test_spectral_bounds_modes():
    rng = make_rng(5)
    A = low_rank(rng, 10, 8, 3)
    b = rng.standard_normal(10)
    exact = oracle.spectral_bounds(A, b, 0.0)
    lower = oracle.spectral_bounds(A, b, 0.0, xstar="lower_bound")
    assert lower.xstar_norm_lower <= exact.xstar_norm_lower + 1e-12
    assert exact.fro_norm == pytest.approx(np.linalg.norm(A))
    assert exact.op_norm_upper == pytest.approx(np.linalg.norm(A, 2))
    with pytest.raises(oracle.OracleError):
        oracle.spectral_bounds(np.zeros((2, 2)), [1, 1], 0.0)
    with pytest.raises(oracle.OracleError):
        oracle.SpectralBounds(1.0, 2.0, 1.0, 1.0)
