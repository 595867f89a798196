"""Dense primal-dual interior-point solver for small block-Hermitian SDPs.

Problems have the form::

    minimize    sum_j Tr(C_j W_j)
    subject to  sum_j Tr(A_ij W_j) >= b_i,   i = 1..m
                W_j >= 0 (Hermitian PSD),    j = 1..K

Each complex block of order n is handled through its real symmetric
embedding of order 2n, and the inequalities get nonnegative slacks.  The
iteration is an infeasible-start path-following method with Nesterov-Todd
scaling and a Mehrotra-type adaptive centering parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

__all__ = [
    "SdpProblem",
    "SdpSolution",
    "SolverOptions",
    "solve",
    "hermitian",
    "eig_decompose",
    "is_psd",
    "real_embed",
    "complex_restore",
    "write_sdpa",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"
NUMERICAL_ERROR = "numerical_error"


def hermitian(m) -> np.ndarray:
    """Return the Hermitian part of ``m`` as a complex array."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    return (m + m.conj().T) / 2


def eig_decompose(m):
    """Eigenvalues in descending order and matching orthonormal eigenvectors
    (as columns) of a Hermitian matrix."""
    w, v = np.linalg.eigh(hermitian(m))
    return w[::-1], v[:, ::-1]


def is_psd(m, tol=1e-9) -> bool:
    m = hermitian(m)
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    return bool(np.linalg.eigvalsh(m)[0] >= -tol * scale)


def real_embed(m) -> np.ndarray:
    """Map a complex n x n matrix to the real 2n x 2n matrix [[Re, -Im], [Im, Re]]."""
    m = np.asarray(m, dtype=complex)
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def complex_restore(r, tol=1e-10) -> np.ndarray:
    """Inverse of :func:`real_embed`; rejects inputs without the block structure."""
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] % 2:
        raise ValueError("expected a square matrix of even order")
    n = r.shape[0] // 2
    a, b = r[:n, :n], r[:n, n:]
    c, d = r[n:, :n], r[n:, n:]
    scale = max(1.0, float(np.abs(r).max(initial=0.0)))
    if np.abs(a - d).max() > tol * scale or np.abs(b + c).max() > tol * scale:
        raise ValueError("matrix does not have the [[Re, -Im], [Im, Re]] structure")
    return ((a + d) + 1j * (c - b)) / 2


@dataclass
class SdpProblem:
    """Cost blocks ``costs`` of shape (K, n, n), constraint coefficients
    ``coeffs`` of shape (m, K, n, n) and right-hand sides ``rhs`` of shape (m,).
    All constraints have sense ``>=``."""

    costs: np.ndarray
    coeffs: np.ndarray
    rhs: np.ndarray
    labels: list = field(default_factory=list)

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=complex)
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        if self.costs.ndim != 3 or self.costs.shape[1] != self.costs.shape[2]:
            raise ValueError("costs must have shape (K, n, n)")
        k, n, _ = self.costs.shape
        if self.coeffs.ndim != 4 or self.coeffs.shape[1:] != (k, n, n):
            raise ValueError(f"coeffs must have shape (m, {k}, {n}, {n})")
        if self.coeffs.shape[0] != self.rhs.size:
            raise ValueError("one right-hand side per constraint")
        if not (np.all(np.isfinite(self.costs)) and np.all(np.isfinite(self.coeffs))
                and np.all(np.isfinite(self.rhs))):
            raise ValueError("problem data must be finite")
        herm_err = max(_herm_error(self.costs), _herm_error(self.coeffs))
        if herm_err > 1e-10:
            raise ValueError("cost and constraint matrices must be Hermitian")
        self.costs = (self.costs + np.swapaxes(self.costs, -1, -2).conj()) / 2
        self.coeffs = (self.coeffs + np.swapaxes(self.coeffs, -1, -2).conj()) / 2

    @property
    def num_blocks(self) -> int:
        return self.costs.shape[0]

    @property
    def order(self) -> int:
        return self.costs.shape[1]

    @property
    def num_constraints(self) -> int:
        return self.rhs.size

    def constraint_values(self, blocks) -> np.ndarray:
        """``sum_j Tr(A_ij W_j)`` for every constraint ``i``."""
        return np.einsum("ijab,jba->i", self.coeffs, np.asarray(blocks)).real

    def objective(self, blocks) -> float:
        return float(np.einsum("jab,jba->", self.costs, np.asarray(blocks)).real)

    def scaled(self, t):
        """The same feasible set with every constraint multiplied by ``t``."""
        return SdpProblem(self.costs, self.coeffs * t, self.rhs * t, list(self.labels))


def _herm_error(a):
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    return float(np.abs(a - np.swapaxes(a, -1, -2).conj()).max(initial=0.0)) / scale


@dataclass
class SolverOptions:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-9
    psd_tol: float = 1e-8
    infeas_tol: float = 1e-8
    max_iter: int = 200
    step_fraction: float = 0.98


@dataclass
class SdpSolution:
    status: str
    blocks: np.ndarray
    objective: float
    dual_objective: float
    gap: float
    iterations: int
    duals: np.ndarray
    primal_infeasibility: float = math.nan
    dual_infeasibility: float = math.nan

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _max_step(x, dx, chol=None):
    """Largest step ``a <= 1/0`` keeping ``x + a dx`` PSD (inf if unbounded)."""
    if chol is None:
        chol = np.linalg.cholesky(x)
    tmp = linalg.solve_triangular(chol, dx, lower=True)
    tmp = linalg.solve_triangular(chol, tmp.T, lower=True)
    lam = np.linalg.eigvalsh((tmp + tmp.T) / 2)[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _nt_scaling(x, z):
    lx = np.linalg.cholesky(x)
    lz = np.linalg.cholesky(z)
    u, s, vt = np.linalg.svd(lz.T @ lx)
    g = lx @ vt.T / np.sqrt(s)
    return g @ g.T, lx, lz


def solve(problem: SdpProblem, opts: SolverOptions | None = None, **kwargs) -> SdpSolution:
    """Solve ``problem`` and return primal blocks, duals and diagnostics.

    Status ``infeasible`` is returned only with a dual improving ray: a
    ``y >= 0`` with ``b.y > 0`` and ``sum_i y_i A_ij <= 0`` for every block.
    """
    opts = opts or SolverOptions(**kwargs)
    k, n = problem.num_blocks, problem.order
    m = problem.num_constraints
    nn = 2 * n

    # row normalization, then a common rescaling of rhs and costs
    row_norm = np.sqrt(np.einsum("ijab,ijab->i", problem.coeffs, problem.coeffs.conj()).real)
    zero_rows = row_norm == 0
    if np.any(problem.rhs[zero_rows] > 0):
        y = np.where(zero_rows & (problem.rhs > 0), 1.0, 0.0)
        return SdpSolution(INFEASIBLE, np.zeros((k, n, n), complex), math.nan,
                           math.inf, math.nan, 0, y)
    active = ~zero_rows
    row_norm = np.where(active, row_norm, 1.0)
    b = problem.rhs / row_norm
    b_scale = float(np.abs(b).max(initial=0.0)) or 1.0
    c_scale = float(np.abs(problem.costs).max(initial=0.0)) or 1.0
    b = b[active] / b_scale
    idx = np.flatnonzero(active)
    m_act = idx.size

    a_emb = np.empty((m_act, k, nn, nn))
    for r, i in enumerate(idx):
        for j in range(k):
            a_emb[r, j] = real_embed(problem.coeffs[i, j] / row_norm[i]) / 2
    c_emb = np.stack([real_embed(problem.costs[j] / c_scale) / 2 for j in range(k)])

    def a_op(xs, xl):
        return np.einsum("ijab,jab->i", a_emb, xs) - xl

    def a_adj(y):
        return np.einsum("i,ijab->jab", y, a_emb), -y

    t0 = 1.0 + float(np.abs(b).max(initial=0.0))
    xs = np.stack([t0 * np.eye(nn)] * k)
    zs = np.stack([t0 * np.eye(nn)] * k)
    xl = np.full(m_act, t0)
    zl = np.full(m_act, t0)
    y = np.zeros(m_act)
    nu = k * nn + m_act
    b_norm = 1.0 + float(np.linalg.norm(b))
    c_norm = 1.0 + float(np.linalg.norm(c_emb))

    status = MAX_ITER
    it = 0
    pinf = dinf = rel_gap = math.inf
    for it in range(opts.max_iter + 1):
        rp = b - a_op(xs, xl)
        ay_s, ay_l = a_adj(y)
        rd_s = c_emb - ay_s - zs
        rd_l = -ay_l - zl
        pobj = float(np.einsum("jab,jab->", c_emb, xs))
        dobj = float(b @ y)
        mu = (float(np.einsum("jab,jab->", xs, zs)) + float(xl @ zl)) / nu
        pinf = float(np.linalg.norm(rp)) / b_norm
        dinf = math.sqrt(float(np.sum(rd_s ** 2)) + float(rd_l @ rd_l)) / c_norm
        rel_gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        if pinf < opts.feas_tol and dinf < opts.feas_tol and rel_gap < opts.gap_tol:
            status = OPTIMAL
            break
        if dobj > 0 and _is_infeasibility_ray(a_emb, y, dobj, opts.infeas_tol):
            status = INFEASIBLE
            break
        if it == opts.max_iter:
            break

        try:
            ws, lxs, lzs = zip(*(_nt_scaling(xs[j], zs[j]) for j in range(k)))
        except np.linalg.LinAlgError:
            status = NUMERICAL_ERROR
            break
        ws = np.stack(ws)
        wl = xl / zl
        zinv = np.stack([linalg.cho_solve((lzs[j], True), np.eye(nn)) for j in range(k)])
        zinv = (zinv + np.swapaxes(zinv, 1, 2)) / 2

        # Schur complement of the normal equations
        wa = np.einsum("jab,ijbc,jcd->ijad", ws, a_emb, ws)
        schur = np.einsum("ijab,ljab->il", a_emb, wa) + np.diag(wl)

        try:
            schur_chol = linalg.cho_factor(schur)
            solve_schur = lambda rhs: linalg.cho_solve(schur_chol, rhs)
        except linalg.LinAlgError:
            solve_schur = lambda rhs: np.linalg.lstsq(schur, rhs, rcond=None)[0]

        wrdw = np.einsum("jab,jbc,jcd->jad", ws, rd_s, ws)

        def direction(sigma):
            rc_s = sigma * mu * zinv - xs
            rc_l = sigma * mu / zl - xl
            rhs = rp - a_op(rc_s, rc_l) + a_op(wrdw, wl * rd_l)
            dy = solve_schur(rhs)
            ady_s, ady_l = a_adj(dy)
            dz_s = rd_s - ady_s
            dz_l = rd_l - ady_l
            dx_s = rc_s - np.einsum("jab,jbc,jcd->jad", ws, dz_s, ws)
            dx_s = (dx_s + np.swapaxes(dx_s, 1, 2)) / 2
            dx_l = rc_l - wl * dz_l
            return dx_s, dx_l, dy, dz_s, dz_l

        def steps(dx_s, dx_l, dz_s, dz_l):
            ap = min([_max_step(xs[j], dx_s[j], lxs[j]) for j in range(k)]
                     + [_lp_step(xl, dx_l)])
            ad = min([_max_step(zs[j], dz_s[j], lzs[j]) for j in range(k)]
                     + [_lp_step(zl, dz_l)])
            return min(1.0, ap), min(1.0, ad)

        dx_s, dx_l, dy, dz_s, dz_l = direction(0.0)
        ap, ad = steps(dx_s, dx_l, dz_s, dz_l)
        mu_aff = (float(np.einsum("jab,jab->", xs + ap * dx_s, zs + ad * dz_s))
                  + float((xl + ap * dx_l) @ (zl + ad * dz_l))) / nu
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))
        dx_s, dx_l, dy, dz_s, dz_l = direction(sigma)
        ap, ad = steps(dx_s, dx_l, dz_s, dz_l)
        ap = min(1.0, opts.step_fraction * ap)
        ad = min(1.0, opts.step_fraction * ad)

        xs = xs + ap * dx_s
        xl = xl + ap * dx_l
        y = y + ad * dy
        zs = zs + ad * dz_s
        zl = zl + ad * dz_l
        xs = (xs + np.swapaxes(xs, 1, 2)) / 2
        zs = (zs + np.swapaxes(zs, 1, 2)) / 2

    # back to the caller's scaling
    blocks = np.stack([_restore_block(xs[j]) for j in range(k)]) * b_scale
    duals = np.zeros(m)
    duals[idx] = y * c_scale / row_norm[idx]
    objective = problem.objective(blocks)
    dual_objective = float(problem.rhs @ duals)
    if status == INFEASIBLE:
        objective = math.nan
    return SdpSolution(
        status=status,
        blocks=blocks,
        objective=objective,
        dual_objective=dual_objective,
        gap=rel_gap,
        iterations=it,
        duals=duals,
        primal_infeasibility=pinf,
        dual_infeasibility=dinf,
    )


def _lp_step(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-x[neg] / dx[neg]))


def _restore_block(x):
    n = x.shape[0] // 2
    a, b = x[:n, :n], x[:n, n:]
    c, d = x[n:, :n], x[n:, n:]
    return hermitian(((a + d) + 1j * (c - b)) / 2)


def _is_infeasibility_ray(a_emb, y, dobj, tol):
    if np.any(y < 0):
        return False
    ray = np.einsum("i,ijab->jab", y / dobj, a_emb)
    worst = max(np.linalg.eigvalsh(blk)[-1] for blk in ray)
    return worst <= tol


def write_sdpa(path, problem: SdpProblem):
    """Dump ``problem`` in sparse SDPA format over the real embedding.

    The problem maps onto the SDPA dual form ``max <F0, Y>`` subject to
    ``<Fi, Y> = b_i``, with ``F0 = -C``, so the SDPA optimum is the negated
    objective.  Blocks of order 2n come first, then one LP block for the
    slacks.
    """
    k, n, m = problem.num_blocks, problem.order, problem.num_constraints
    nn = 2 * n
    lines = [f"* block-Hermitian SDP, {k} blocks of order {n}, {m} constraints >= rhs",
             str(m), str(k + 1),
             " ".join([str(nn)] * k + [str(-m)]),
             " ".join(repr(float(v)) for v in problem.rhs)]

    def entries(mat_index, blocks):
        for j, blk in enumerate(blocks):
            emb = real_embed(blk) / 2
            rows, cols = np.nonzero(np.triu(emb))
            for r, c in zip(rows, cols):
                lines.append(f"{mat_index} {j + 1} {r + 1} {c + 1} {float(emb[r, c])!r}")

    entries(0, -problem.costs)
    for i in range(m):
        entries(i + 1, problem.coeffs[i])
        lines.append(f"{i + 1} {k + 1} {i + 1} {i + 1} -1.0")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
