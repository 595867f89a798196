import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swipt_diplexer.sdp import (
    SdpProblem,
    SolverOptions,
    complex_restore,
    eig_decompose,
    is_psd,
    real_embed,
    solve,
    write_sdpa,
)

from conftest import crandn


def random_hermitian(rng, n):
    a = crandn(rng, n, n)
    return (a + a.conj().T) / 2


def random_psd(rng, n, rank=None):
    a = crandn(rng, n, rank or n)
    return a @ a.conj().T


def random_feasible_problem(rng, k=2, n=3, m=4):
    """Random problem with identity costs, PSD constraint matrices and positive
    right-hand sides (always strictly feasible and bounded)."""
    coeffs = np.stack([np.stack([random_psd(rng, n, 1) for _ in range(k)]) for _ in range(m)])
    rhs = rng.uniform(0.5, 2.0, m)
    costs = np.stack([np.eye(n)] * k)
    return SdpProblem(costs, coeffs, rhs)


def cvxpy_value(problem: SdpProblem):
    """Reference optimum from an independent modeling layer and solver."""
    k, n = problem.num_blocks, problem.order
    ws = [cp.Variable((n, n), hermitian=True) for _ in range(k)]
    cons = [w >> 0 for w in ws]
    for i in range(problem.num_constraints):
        expr = sum(cp.real(cp.trace(problem.coeffs[i, j] @ ws[j])) for j in range(k))
        cons.append(expr >= problem.rhs[i])
    obj = sum(cp.real(cp.trace(problem.costs[j] @ ws[j])) for j in range(k))
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-9, tol_gap_rel=1e-9, tol_feas=1e-9)
    return prob.value


# --- utilities -------------------------------------------------------------

def test_eig_identity():
    vals, vecs = eig_decompose(np.eye(3))
    np.testing.assert_allclose(vals, 1.0)
    np.testing.assert_allclose(vecs.conj().T @ vecs, np.eye(3), atol=1e-12)


def test_eig_rank_one_outer_product():
    w = np.array([1, 1j])
    vals, vecs = eig_decompose(np.outer(w, w.conj()))
    np.testing.assert_allclose(vals, [2.0, 0.0], atol=1e-12)
    top = vecs[:, 0] * np.conj(vecs[0, 0]) / abs(vecs[0, 0])
    np.testing.assert_allclose(top, w / math.sqrt(2), atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_eig_2x2_quadratic_formula(seed):
    rng = np.random.default_rng(seed)
    m = random_hermitian(rng, 2)
    a, d, b = m[0, 0].real, m[1, 1].real, m[0, 1]
    # characteristic polynomial x^2 - (a + d) x + (a d - |b|^2)
    mean = (a + d) / 2
    radius = math.sqrt(((a - d) / 2) ** 2 + abs(b) ** 2)
    vals, _ = eig_decompose(m)
    np.testing.assert_allclose(vals, [mean + radius, mean - radius], atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_eig_reconstruction(seed):
    rng = np.random.default_rng(seed)
    m = random_hermitian(rng, 5)
    vals, vecs = eig_decompose(m)
    assert np.all(np.diff(vals) <= 0)
    recon = vecs @ np.diag(vals) @ vecs.conj().T
    assert np.linalg.norm(m - recon) <= 1e-10 * np.linalg.norm(m)


def test_is_psd():
    assert is_psd(np.eye(3))
    assert not is_psd(np.diag([1.0, -1e-3]), tol=1e-9)
    assert is_psd(np.diag([1.0, -1e-12]), tol=1e-9)


def test_real_embedding_round_trip_and_spectrum(rng):
    w = np.array([1, 1j])
    emb = real_embed(np.outer(w, w.conj()))
    np.testing.assert_allclose(emb, emb.T)
    emb_vals = np.sort(np.linalg.eigvalsh(emb))[::-1]
    np.testing.assert_allclose(emb_vals, [2, 2, 0, 0], atol=1e-12)
    m = random_hermitian(rng, 4)
    np.testing.assert_allclose(complex_restore(real_embed(m)), m, atol=1e-15)
    doubled = np.repeat(eig_decompose(m)[0], 2)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(real_embed(m)))[::-1], doubled, atol=1e-12)


def test_complex_restore_rejects_unstructured(rng):
    r = rng.standard_normal((4, 4))
    with pytest.raises(ValueError):
        complex_restore(r + r.T)
    with pytest.raises(ValueError):
        complex_restore(np.eye(3))


def test_problem_validation():
    with pytest.raises(ValueError):
        SdpProblem(np.eye(2)[None], np.array([[[[0, 1], [0, 0]]]]), [1.0])
    with pytest.raises(ValueError):
        SdpProblem(np.eye(2)[None], np.eye(3)[None, None], [1.0])
    with pytest.raises(ValueError):
        SdpProblem(np.eye(2)[None], np.eye(2)[None, None], [1.0, 2.0])


# --- solve -------------------------------------------------------------------

def test_trace_constraint_objective_one():
    sol = solve(SdpProblem(np.eye(2)[None], np.eye(2)[None, None], [1.0]))
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-8)
    assert sol.gap <= 1e-8


def test_diagonal_constraint_analytic_optimum():
    c = np.diag([2.0, 1.0])
    sol = solve(SdpProblem(np.eye(2)[None], c[None, None], [1.0]))
    lam_max = eig_decompose(c)[0][0]
    assert sol.objective == pytest.approx(1 / lam_max, abs=1e-8)
    np.testing.assert_allclose(sol.blocks[0], np.diag([0.5, 0.0]), atol=1e-7)


@pytest.mark.parametrize("seed", range(6))
def test_matches_independent_solver(seed):
    rng = np.random.default_rng(seed)
    problem = random_feasible_problem(rng, k=int(rng.integers(1, 4)), n=int(rng.integers(1, 4)),
                                      m=int(rng.integers(1, 6)))
    sol = solve(problem)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(cvxpy_value(problem), rel=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_solution_invariants(seed):
    rng = np.random.default_rng(100 + seed)
    problem = random_feasible_problem(rng, k=3, n=3, m=5)
    sol = solve(problem)
    assert sol.status == "optimal"
    assert sol.gap <= 1e-8
    assert sol.objective >= sol.dual_objective - 1e-8 * (1 + abs(sol.objective))
    for blk in sol.blocks:
        assert np.linalg.eigvalsh(blk)[0] >= -1e-8 * (1 + np.linalg.norm(blk))
        np.testing.assert_allclose(blk, blk.conj().T, atol=1e-12)
    values = problem.constraint_values(sol.blocks)
    assert np.all(values - problem.rhs >= -1e-7 * (1 + np.abs(problem.rhs)))
    assert np.all(sol.duals >= 0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31), log_t=st.floats(-6, 6))
def test_scale_invariance(seed, log_t):
    rng = np.random.default_rng(seed)
    problem = random_feasible_problem(rng, k=2, n=2, m=3)
    base = solve(problem)
    scaled = solve(problem.scaled(10 ** log_t))
    assert base.status == scaled.status == "optimal"
    assert scaled.objective == pytest.approx(base.objective, rel=1e-7)


def test_general_cost_and_indefinite_constraints(rng):
    n, k = 3, 2
    costs = np.stack([random_psd(rng, n) + np.eye(n) for _ in range(k)])
    coeffs = np.stack([np.stack([random_hermitian(rng, n) for _ in range(k)]) for _ in range(3)])
    coeffs[0] = np.stack([np.eye(n)] * k)
    problem = SdpProblem(costs, coeffs, [1.0, -2.0, -2.0])
    sol = solve(problem)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(cvxpy_value(problem), rel=1e-6)


def test_certifies_infeasibility():
    h = np.outer([1, 1j], [1, -1j])
    coeffs = np.zeros((4, 4, 2, 2), complex)
    for i in range(4):
        for j in range(4):
            coeffs[i, j] = h if i == j else -h
    problem = SdpProblem(np.stack([np.eye(2)] * 4), coeffs, np.ones(4))
    sol = solve(problem)
    assert sol.status == "infeasible"
    # the returned duals form an improving ray
    y = sol.duals
    by = float(problem.rhs @ y)
    assert np.all(y >= 0) and by > 0
    ray = np.einsum("i,ijab->jab", y, coeffs)
    assert max(np.linalg.eigvalsh(r)[-1] for r in ray) <= 1e-8 * by


def test_zero_row_with_positive_rhs_is_infeasible():
    sol = solve(SdpProblem(np.eye(2)[None], np.zeros((1, 1, 2, 2)), [1.0]))
    assert sol.status == "infeasible"


def test_zero_row_with_nonpositive_rhs_is_dropped():
    coeffs = np.stack([np.zeros((1, 2, 2)), np.eye(2)[None]])
    sol = solve(SdpProblem(np.eye(2)[None], coeffs, [-1.0, 1.0]))
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-8)


def test_max_iter_status(rng):
    problem = random_feasible_problem(rng)
    sol = solve(problem, SolverOptions(max_iter=2))
    assert sol.status == "max_iter"
    assert sol.iterations == 2


def test_sdpa_dump(tmp_path, rng):
    problem = random_feasible_problem(rng, k=2, n=2, m=3)
    path = tmp_path / "p.dat-s"
    write_sdpa(path, problem)
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("*")]
    assert lines[0] == "3" and lines[1] == "3"
    assert lines[2].split() == ["4", "4", "-3"]
    np.testing.assert_allclose([float(v) for v in lines[3].split()], problem.rhs)
    # rebuild the real embedded data and compare constraint values at a point
    mats = {}
    for ln in lines[4:]:
        mat, blk, r, c, v = ln.split()
        mats.setdefault((int(mat), int(blk)), []).append((int(r), int(c), float(v)))
    w = np.stack([random_psd(rng, 2) for _ in range(2)])
    for i in range(3):
        total = 0.0
        for j in range(2):
            dense = np.zeros((4, 4))
            for r, c, v in mats.get((i + 1, j + 1), []):
                dense[r - 1, c - 1] = dense[c - 1, r - 1] = v
            total += np.sum(dense * real_embed(w[j]))
        assert total == pytest.approx(problem.constraint_values(w)[i], rel=1e-12)
