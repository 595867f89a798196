"""Multiuser MISO downlink model with diplexer-based receivers.

Closed-form evaluators for per-user SINR, harvested energy and total transmit
power, the SINR feasibility predicate, and a Rayleigh channel generator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "MisoChannel",
    "UserThresholds",
    "BeamformerSet",
    "FeasibilityResult",
    "sinr",
    "harvested",
    "received_sample",
    "feasibility_test",
    "total_power",
    "numerical_rank",
    "rayleigh_channel",
    "dbm_to_watt",
    "watt_to_dbm",
    "db_to_linear",
]

RANK_TOL = 1e-10


def dbm_to_watt(p_dbm):
    return 10 ** ((np.asarray(p_dbm, dtype=float) - 30) / 10)


def watt_to_dbm(p_w):
    p_w = np.asarray(p_w, dtype=float)
    with np.errstate(divide="ignore"):
        return 10 * np.log10(p_w) + 30


def db_to_linear(x_db):
    return 10 ** (np.asarray(x_db, dtype=float) / 10)


@dataclass(frozen=True)
class MisoChannel:
    """Channel matrix ``H`` of shape (N, K); column ``k`` is ``h_k``."""

    h_matrix: np.ndarray

    def __post_init__(self):
        h = np.array(self.h_matrix, dtype=complex)
        if h.ndim == 1:
            h = h[:, None]
        if h.ndim != 2 or h.size == 0:
            raise ValueError("channel matrix must be N x K with N, K >= 1")
        if not np.all(np.isfinite(h)):
            raise ValueError("channel entries must be finite")
        if not np.any(h):
            raise ValueError("at least one channel column must be nonzero")
        h.setflags(write=False)
        object.__setattr__(self, "h_matrix", h)

    @property
    def n_antennas(self) -> int:
        return self.h_matrix.shape[0]

    @property
    def k_users(self) -> int:
        return self.h_matrix.shape[1]

    def column(self, k) -> np.ndarray:
        return self.h_matrix[:, k]

    def gains(self, w: "BeamformerSet") -> np.ndarray:
        """Matrix of ``|h_k^H w_j|^2`` indexed (k, j)."""
        w = _as_beamformers(w, self)
        return np.abs(self.h_matrix.conj().T @ w.w) ** 2

    @classmethod
    def from_csv(cls, path) -> "MisoChannel":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if row:
                    rows.append([complex(cell.strip().replace(" ", "")) for cell in row])
        return cls(np.array(rows))

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            for row in self.h_matrix:
                writer.writerow([f"{float(z.real)!r}{float(z.imag):+.17g}j" for z in row])


@dataclass(frozen=True)
class UserThresholds:
    """Per-user SINR thresholds ``gamma`` (linear) and EH thresholds ``mu`` (W)."""

    gamma: np.ndarray
    mu: np.ndarray
    eta: float = 1.0
    sigma_sq: float = 1.0
    sigma_a_sq: float = 0.0

    def __post_init__(self):
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if gamma.shape != mu.shape or gamma.ndim != 1:
            raise ValueError("gamma and mu must be vectors of equal length")
        if np.any(gamma <= 0) or not np.all(np.isfinite(gamma)):
            raise ValueError("SINR thresholds must be positive and finite")
        if np.any(mu < 0) or not np.all(np.isfinite(mu)):
            raise ValueError("EH thresholds must be nonnegative and finite")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if self.sigma_sq <= 0 or self.sigma_a_sq < 0:
            raise ValueError("noise powers must be positive")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def from_link(cls, gamma, mu, eta, sigma_a_sq, sigma_cov_sq):
        """Thresholds with the ID noise ``sigma_a_sq + 2 sigma_cov_sq``."""
        return cls(gamma, mu, eta, sigma_a_sq + 2 * sigma_cov_sq, sigma_a_sq)

    @classmethod
    def from_xi(cls, gamma, xi, eta, sigma_sq, sigma_a_sq=0.0):
        """Thresholds given the received-power EH target ``xi = 2 mu / eta``."""
        return cls(gamma, np.asarray(xi, dtype=float) * eta / 2, eta, sigma_sq, sigma_a_sq)

    @property
    def k_users(self) -> int:
        return self.gamma.size

    @property
    def xi(self) -> np.ndarray:
        """Received-power EH threshold ``2 mu / eta``."""
        return 2 * self.mu / self.eta


@dataclass(frozen=True)
class BeamformerSet:
    """Beamformers stacked as the columns of an (N, K) matrix."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=complex)
        if w.ndim == 1:
            w = w[:, None]
        if w.ndim != 2:
            raise ValueError("beamformers must form an N x K matrix")
        object.__setattr__(self, "w", w)

    @classmethod
    def from_vectors(cls, vectors):
        vectors = [np.asarray(v, dtype=complex).reshape(-1) for v in vectors]
        if len({v.size for v in vectors}) != 1:
            raise ValueError("all beamformers must have the same dimension")
        return cls(np.stack(vectors, axis=1))

    def __len__(self):
        return self.w.shape[1]

    def __getitem__(self, j):
        return self.w[:, j]


def _as_beamformers(w, ch: MisoChannel | None = None) -> BeamformerSet:
    if not isinstance(w, BeamformerSet):
        w = BeamformerSet.from_vectors(w) if isinstance(w, (list, tuple)) else BeamformerSet(w)
    if ch is not None and w.w.shape[0] != ch.n_antennas:
        raise ValueError(f"beamformer dimension {w.w.shape[0]} != {ch.n_antennas} antennas")
    return w


def _check_user(k, k_users):
    if not 0 <= k < k_users:
        raise IndexError(f"user index {k} out of range for {k_users} users")


def sinr(ch: MisoChannel, w, th: UserThresholds, k: int) -> float:
    """SINR of user ``k`` under single-user detection."""
    w = _as_beamformers(w, ch)
    _check_user(k, ch.k_users)
    g = np.abs(ch.column(k).conj() @ w.w) ** 2
    if k >= g.size:
        raise IndexError(f"no beamformer for user {k}")
    return float(g[k] / (g.sum() - g[k] + th.sigma_sq))


def harvested(ch: MisoChannel, w, th: UserThresholds, k: int) -> float:
    """Harvested power of user ``k``: ``eta/2 * sum_j |h_k^H w_j|^2``."""
    w = _as_beamformers(w, ch)
    _check_user(k, ch.k_users)
    g = np.abs(ch.column(k).conj() @ w.w) ** 2
    return float(0.5 * th.eta * g.sum())


def received_sample(ch: MisoChannel, w, symbols, noise, k: int):
    """``y_k = h_k^H sum_m w_m s_m + n_k``; vectorized over trailing symbol axes.

    ``symbols`` has the user index first, so shape (K,) gives one sample and
    shape (K, T) gives T samples.
    """
    w = _as_beamformers(w, ch)
    _check_user(k, ch.k_users)
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.shape[0] != w.w.shape[1]:
        raise ValueError("one symbol per beamformer required")
    return ch.column(k).conj() @ (w.w @ symbols) + noise


def total_power(w) -> float:
    w = _as_beamformers(w)
    return float(np.sum(np.abs(w.w) ** 2))


def numerical_rank(h, rank_tol=RANK_TOL) -> int:
    s = np.linalg.svd(np.asarray(h), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    sinr_sum: float
    rank: int

    def __bool__(self):
        return self.feasible

    def to_dict(self):
        return {"feasible": self.feasible, "sinr_sum": self.sinr_sum, "rank": self.rank}


def feasibility_test(ch: MisoChannel, th: UserThresholds, rank_tol=RANK_TOL) -> FeasibilityResult:
    """SINR feasibility: ``sum_k gamma_k / (gamma_k + 1) <= rank(H)``.

    EH thresholds never affect the verdict, since scaling up a set of
    beamformers that meets the SINR targets eventually meets any EH target.
    """
    if th.k_users != ch.k_users:
        raise ValueError("threshold and channel user counts differ")
    total = float(np.sum(th.gamma / (th.gamma + 1)))
    rank = numerical_rank(ch.h_matrix, rank_tol)
    return FeasibilityResult(total <= rank, total, rank)


def rayleigh_channel(n_antennas, k_users, pathloss_db=0.0, rng=None) -> MisoChannel:
    """i.i.d. CN(0, 10^(pathloss_db/10)) channel entries."""
    rng = np.random.default_rng(rng)
    scale = math.sqrt(db_to_linear(pathloss_db) / 2)
    h = (rng.standard_normal((n_antennas, k_users))
         + 1j * rng.standard_normal((n_antennas, k_users))) * scale
    return MisoChannel(h)
