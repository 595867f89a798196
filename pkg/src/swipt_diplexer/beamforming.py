"""Transmit power minimization under per-user SINR and EH constraints.

Lifting each beamformer to ``W_j = w_j w_j^H`` and dropping the rank
constraint turns the nonconvex QCQP into an SDP in the blocks ``W_j``::

    minimize    sum_j Tr(W_j)
    subject to  Tr(H_k W_k) - gamma_k sum_{j != k} Tr(H_k W_j) >= gamma_k sigma^2
                sum_j Tr(H_k W_j) >= xi_k,   xi_k = 2 mu_k / eta
                W_j >= 0

with ``H_k = h_k h_k^H``.  Beamformers are read off rank-one blocks by
eigendecomposition; otherwise Gaussian randomization supplies a feasible
point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import sdp
from .miso import (
    BeamformerSet,
    MisoChannel,
    UserThresholds,
    feasibility_test,
    harvested,
    sinr,
    total_power,
    watt_to_dbm,
)

__all__ = [
    "InfeasibleProblem",
    "SolverFailure",
    "RelaxedProblem",
    "LmiConstraint",
    "RecoveredSolution",
    "OptimizeOptions",
    "build_relaxation",
    "to_lmi_form",
    "solve_relaxed",
    "recover",
    "optimize",
    "canonical_phase",
    "constraint_margins",
]

MIN_GAMMA = 1e-12
RANK_RATIO_TOL = 1e-6
RANDOMIZATION_DRAWS = 200


class InfeasibleProblem(ValueError):
    """The instance admits no beamformers meeting every threshold."""

    def __init__(self, reason, detail=None):
        super().__init__(reason)
        self.reason = reason
        self.detail = detail


class SolverFailure(RuntimeError):
    """The SDP solver stopped without an optimal point or a certificate."""


@dataclass
class RelaxedProblem:
    """Data of the relaxed problem.

    ``sinr_coeffs[k, j]`` is the coefficient of ``W_j`` in the SINR
    constraint of user ``k`` (``H_k`` when ``j == k``, else ``-gamma_k H_k``);
    ``beta[k] = gamma_k sigma^2``.  The EH constraint of user ``k`` puts
    ``H_k`` on every block with right-hand side ``xi[k]``.
    """

    channel: MisoChannel
    thresholds: UserThresholds
    outer: np.ndarray
    sinr_coeffs: np.ndarray
    beta: np.ndarray
    xi: np.ndarray

    @property
    def k_users(self) -> int:
        return self.outer.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.outer.shape[1]

    @property
    def eh_coeffs(self) -> np.ndarray:
        k = self.k_users
        return np.broadcast_to(self.outer[:, None], (k,) + self.outer.shape)

    def to_sdp(self) -> sdp.SdpProblem:
        k, n = self.k_users, self.n_antennas
        costs = np.broadcast_to(np.eye(n), (k, n, n))
        coeffs = np.concatenate([self.sinr_coeffs, self.eh_coeffs])
        rhs = np.concatenate([self.beta, self.xi])
        labels = [f"sinr[{i}]" for i in range(k)] + [f"eh[{i}]" for i in range(k)]
        return sdp.SdpProblem(costs, coeffs, rhs, labels)


def build_relaxation(ch: MisoChannel, th: UserThresholds) -> RelaxedProblem:
    if th.k_users != ch.k_users:
        raise ValueError("threshold and channel user counts differ")
    h = ch.h_matrix
    zero = ~np.any(h, axis=0)
    if np.any(zero & (th.mu > 0)):
        raise InfeasibleProblem("zero channel with positive EH threshold",
                                np.flatnonzero(zero & (th.mu > 0)).tolist())
    if np.any(zero):
        raise InfeasibleProblem("zero channel with positive SINR threshold",
                                np.flatnonzero(zero).tolist())
    gamma = np.maximum(th.gamma, MIN_GAMMA)
    outer = np.einsum("ak,bk->kab", h, h.conj())
    k = ch.k_users
    sinr_coeffs = -gamma[:, None, None, None] * np.broadcast_to(outer[:, None], (k, k) + outer.shape[1:])
    idx = np.arange(k)
    sinr_coeffs[idx, idx] = outer
    return RelaxedProblem(ch, th, outer, sinr_coeffs, gamma * th.sigma_sq, th.xi.copy())


@dataclass
class LmiConstraint:
    """Bordered 2x2 form ``[[sum_j Tr(M_j W_j), sqrt(rhs)], [sqrt(rhs), 1]] >= 0``.

    By the Schur complement with the positive corner entry, the matrix is PSD
    exactly when ``sum_j Tr(M_j W_j) >= rhs``.
    """

    kind: str
    user: int
    coeffs: np.ndarray
    border: float

    def affine_value(self, blocks) -> float:
        return float(np.einsum("jab,jba->", self.coeffs, np.asarray(blocks)).real)

    def matrix(self, blocks) -> np.ndarray:
        return np.array([[self.affine_value(blocks), self.border], [self.border, 1.0]])

    def holds(self, blocks, tol=1e-12) -> bool:
        return bool(np.linalg.eigvalsh(self.matrix(blocks))[0] >= -tol)


def to_lmi_form(rp: RelaxedProblem) -> list[LmiConstraint]:
    if np.any(rp.beta < 0) or np.any(rp.xi < 0):
        raise ValueError("right-hand sides must be nonnegative")
    lmis = [LmiConstraint("sinr", k, rp.sinr_coeffs[k], math.sqrt(rp.beta[k]))
            for k in range(rp.k_users)]
    lmis += [LmiConstraint("eh", k, rp.eh_coeffs[k], math.sqrt(rp.xi[k]))
             for k in range(rp.k_users)]
    return lmis


def solve_relaxed(rp: RelaxedProblem, opts: sdp.SolverOptions | None = None) -> sdp.SdpSolution:
    return sdp.solve(rp.to_sdp(), opts)


def canonical_phase(v) -> np.ndarray:
    """Rotate ``v`` so its first non-negligible entry is real and nonnegative."""
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    if mag.max(initial=0.0) == 0:
        return v.copy()
    first = int(np.argmax(mag > 1e-12 * mag.max()))
    return v * (np.conj(v[first]) / mag[first])


def constraint_margins(ch: MisoChannel, w, th: UserThresholds):
    """Relative SINR and EH margins; negative entries mean violation.

    The SINR margin is ``SINR_k / gamma_k - 1``.  The EH margin is
    ``Q_k / mu_k - 1``, or ``Q_k`` in watts when ``mu_k = 0``.
    """
    k_users = ch.k_users
    sinr_m = np.array([sinr(ch, w, th, k) / th.gamma[k] - 1 for k in range(k_users)])
    q = np.array([harvested(ch, w, th, k) for k in range(k_users)])
    eh_m = np.where(th.mu > 0, q / np.where(th.mu > 0, th.mu, 1.0) - 1, q)
    return sinr_m, eh_m


@dataclass
class RecoveredSolution:
    beamformers: BeamformerSet
    total_power: float
    sdp_bound: float
    gap: float
    rank_one: list
    eig_ratio: list
    sinr_margins: np.ndarray
    eh_margins: np.ndarray
    method: str
    iterations: int = 0
    feasible: bool = True
    sinr_values: np.ndarray = field(default=None, repr=False)
    harvested_values: np.ndarray = field(default=None, repr=False)

    @property
    def all_rank_one(self) -> bool:
        return all(self.rank_one)

    @property
    def min_margin(self) -> float:
        return float(min(self.sinr_margins.min(), self.eh_margins.min()))

    def to_dict(self) -> dict:
        w = self.beamformers.w
        return {
            "beamformers": {
                "re": w.real.T.tolist(),
                "im": w.imag.T.tolist(),
            },
            "total_power_w": self.total_power,
            "total_power_dbm": float(watt_to_dbm(self.total_power)),
            "sdp_bound_w": self.sdp_bound,
            "gap": self.gap,
            "method": self.method,
            "feasible": self.feasible,
            "iterations": self.iterations,
            "rank_one": [bool(r) for r in self.rank_one],
            "eig_ratio": [float(r) for r in self.eig_ratio],
            "sinr": [float(v) for v in self.sinr_values],
            "harvested_w": [float(v) for v in self.harvested_values],
            "sinr_margins": self.sinr_margins.tolist(),
            "eh_margins": self.eh_margins.tolist(),
        }


def _min_power_allocation(gains, gamma, sigma_sq, xi):
    """Least total power for fixed unit directions ``u_j``.

    ``gains[k, j] = |h_k^H u_j|^2``.  Both constraint families are linear in
    the per-user powers, so this is an LP.  The LP point is then pushed onto
    the exact feasible set: a monotone fixed-point pass for the SINR targets
    followed by a common scale-up for the EH targets (scaling up never hurts
    SINR).  Returns None if the directions cannot meet the SINR targets.
    """
    k = gains.shape[0]
    direct = np.diag(gains).copy()
    if np.any(direct <= 0):
        return None
    cross = gains - np.diag(direct)
    sinr_rows = np.diag(direct) - gamma[:, None] * cross
    rows = np.vstack([sinr_rows, gains])
    rhs = np.concatenate([gamma * sigma_sq, xi])
    norms = np.linalg.norm(rows, axis=1)
    p_scale = float(np.max(rhs / norms))
    res = linprog(np.ones(k), A_ub=-rows / norms[:, None],
                  b_ub=-rhs / norms / p_scale, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    p = np.maximum(res.x, 0.0) * p_scale
    for _ in range(100):
        need = gamma * (cross @ p + sigma_sq) / direct
        if np.all(need <= p):
            break
        p = np.maximum(p, need)
    else:
        return None
    received = gains @ p
    scale = float(np.max(np.where(xi > 0, xi / np.maximum(received, 1e-300), 0.0), initial=1.0))
    return p * max(1.0, scale)


def recover(sol: sdp.SdpSolution, rp: RelaxedProblem, rank_ratio_tol=RANK_RATIO_TOL,
            draws=RANDOMIZATION_DRAWS, seed=None) -> RecoveredSolution:
    """Extract beamformers from optimal SDP blocks.

    Rank-one blocks give ``sqrt(lambda_1) v_1``.  If any block fails the
    rank test, the principal eigenvectors and ``draws`` candidates drawn from
    CN(0, W_j) each get their least-power allocation meeting all
    constraints, and the cheapest candidate wins (earliest draw on ties).
    """
    if sol.status != sdp.OPTIMAL:
        raise SolverFailure(f"cannot recover from a solver status of {sol.status!r}")
    ch, th = rp.channel, rp.thresholds
    k_users, n = rp.k_users, rp.n_antennas
    eigvals, eigvecs, ratios, rank_one = [], [], [], []
    for blk in sol.blocks:
        lam, vec = sdp.eig_decompose(blk)
        lam = np.clip(lam, 0.0, None)
        ratio = float(lam[1] / lam[0]) if n > 1 and lam[0] > 0 else 0.0
        eigvals.append(lam)
        eigvecs.append(vec)
        ratios.append(ratio)
        rank_one.append(ratio <= rank_ratio_tol)

    principal = np.stack([canonical_phase(math.sqrt(lam[0]) * vec[:, 0])
                          for lam, vec in zip(eigvals, eigvecs)], axis=1)
    if all(rank_one):
        w = principal
        method = "evd"
    else:
        method = "randomization"
        rng = np.random.default_rng(seed)
        h = ch.h_matrix
        gamma = np.maximum(th.gamma, MIN_GAMMA)
        best, best_power = None, math.inf
        for draw in range(draws + 1):
            if draw == 0:
                cand = principal
            else:
                z = (rng.standard_normal((n, k_users)) + 1j * rng.standard_normal((n, k_users))) / math.sqrt(2)
                cols = []
                for j in range(k_users):
                    if rank_one[j]:
                        cols.append(principal[:, j])
                    else:
                        cols.append(eigvecs[j] @ (np.sqrt(eigvals[j]) * z[:, j]))
                cand = np.stack(cols, axis=1)
            norms = np.linalg.norm(cand, axis=0)
            if np.any(norms == 0):
                continue
            dirs = cand / norms
            gains = np.abs(h.conj().T @ dirs) ** 2
            p = _min_power_allocation(gains, gamma, th.sigma_sq, rp.xi)
            if p is None:
                continue
            power = float(p.sum())
            if power < best_power:
                best, best_power = dirs * np.sqrt(p), power
        w = principal if best is None else best
        w = np.stack([canonical_phase(w[:, j]) for j in range(k_users)], axis=1)

    beams = BeamformerSet(w)
    sinr_m, eh_m = constraint_margins(ch, beams, th)
    return RecoveredSolution(
        beamformers=beams,
        total_power=total_power(beams),
        sdp_bound=sol.dual_objective,
        gap=sol.gap,
        rank_one=rank_one,
        eig_ratio=ratios,
        sinr_margins=sinr_m,
        eh_margins=eh_m,
        method=method,
        iterations=sol.iterations,
        feasible=bool(min(sinr_m.min(), eh_m.min()) >= -1e-7),
        sinr_values=np.array([sinr(ch, beams, th, k) for k in range(k_users)]),
        harvested_values=np.array([harvested(ch, beams, th, k) for k in range(k_users)]),
    )


@dataclass
class OptimizeOptions:
    solver: sdp.SolverOptions = field(default_factory=sdp.SolverOptions)
    rank_ratio_tol: float = RANK_RATIO_TOL
    draws: int = RANDOMIZATION_DRAWS
    seed: int | None = 0
    check_feasibility: bool = True


def optimize(ch: MisoChannel, th: UserThresholds, opts: OptimizeOptions | None = None) -> RecoveredSolution:
    """Minimum-power beamformers meeting every SINR and EH threshold.

    Raises :class:`InfeasibleProblem` when the feasibility predicate fails or
    the solver certifies infeasibility, and :class:`SolverFailure` when the
    solver stops short of optimality without a certificate.
    """
    opts = opts or OptimizeOptions()
    if opts.check_feasibility:
        verdict = feasibility_test(ch, th)
        if not verdict.feasible:
            raise InfeasibleProblem("SINR thresholds exceed the channel rank", verdict)
    rp = build_relaxation(ch, th)
    sol = solve_relaxed(rp, opts.solver)
    if sol.status == sdp.INFEASIBLE:
        raise InfeasibleProblem("solver certified infeasibility", sol)
    if sol.status != sdp.OPTIMAL:
        raise SolverFailure(f"SDP solver stopped with status {sol.status!r} after {sol.iterations} iterations")
    return recover(sol, rp, opts.rank_ratio_tol, opts.draws, opts.seed)
