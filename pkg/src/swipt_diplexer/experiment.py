"""Experiment configuration, channel generation and threshold sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .beamforming import InfeasibleProblem, OptimizeOptions, SolverFailure, optimize
from .miso import MisoChannel, UserThresholds, dbm_to_watt, rayleigh_channel, watt_to_dbm

__all__ = [
    "SweepSpec",
    "ExperimentConfig",
    "ResultRow",
    "generate_channels",
    "thresholds_for",
    "run_sweep",
    "sweep_csv",
    "sweep_json",
    "CSV_HEADER",
]

CSV_HEADER = ["sweep_value", "mean_power_w", "mean_power_dbm", "feasible_rate", "rank1_rate", "mean_gap"]


@dataclass
class SweepSpec:
    """Sweep over ``xi`` (EH received-power target, W) or ``gamma`` (linear),
    holding the other threshold at ``fixed``."""

    parameter: str
    values: list
    fixed: float

    def __post_init__(self):
        if self.parameter not in ("xi", "gamma"):
            raise ValueError("sweep parameter must be 'xi' or 'gamma'")
        self.values = [float(v) for v in self.values]
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if not all(math.isfinite(v) for v in self.values + [self.fixed]):
            raise ValueError("sweep values must be finite")


@dataclass
class ExperimentConfig:
    n_antennas: int = 4
    k_users: int = 4
    pathloss_db: float = -40.0
    sigma_a_dbm: float = -70.0
    sigma_cov_dbm: float = -50.0
    eta: float = 1.0
    seed: int = 0
    trials: int = 100
    gamma: float = 1.0
    xi: float = 0.0
    sweep: SweepSpec | None = None
    channel_csv: str | None = None

    def __post_init__(self):
        if isinstance(self.sweep, dict):
            self.sweep = SweepSpec(**self.sweep)
        if self.n_antennas < 1 or self.k_users < 1:
            raise ValueError("need at least one antenna and one user")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for name in ("pathloss_db", "sigma_a_dbm", "sigma_cov_dbm", "gamma", "xi"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @property
    def sigma_a_sq(self) -> float:
        return float(dbm_to_watt(self.sigma_a_dbm))

    @property
    def sigma_cov_sq(self) -> float:
        return float(dbm_to_watt(self.sigma_cov_dbm))

    @property
    def sigma_sq(self) -> float:
        return self.sigma_a_sq + 2 * self.sigma_cov_sq

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


def generate_channels(cfg: ExperimentConfig, seed=None) -> list[MisoChannel]:
    """One Rayleigh channel per trial; trial ``t`` depends only on (seed, t)."""
    seed = cfg.seed if seed is None else seed
    return [rayleigh_channel(cfg.n_antennas, cfg.k_users, cfg.pathloss_db,
                             np.random.default_rng([seed, t]))
            for t in range(cfg.trials)]


def thresholds_for(cfg: ExperimentConfig, gamma=None, xi=None) -> UserThresholds:
    gamma = cfg.gamma if gamma is None else gamma
    xi = cfg.xi if xi is None else xi
    k = cfg.k_users
    return UserThresholds.from_xi(np.full(k, float(gamma)), np.full(k, float(xi)),
                                  cfg.eta, cfg.sigma_sq, cfg.sigma_a_sq)


@dataclass
class ResultRow:
    sweep_value: float
    mean_power_w: float | None
    feasible_rate: float
    rank1_rate: float | None
    mean_gap: float | None
    powers: list = field(default_factory=list)
    failures: int = 0

    @property
    def mean_power_dbm(self):
        return None if self.mean_power_w is None else float(watt_to_dbm(self.mean_power_w))

    def csv_fields(self):
        return [_fmt(v) for v in (self.sweep_value, self.mean_power_w, self.mean_power_dbm,
                                  self.feasible_rate, self.rank1_rate, self.mean_gap)]

    def to_dict(self):
        return {
            "sweep_value": self.sweep_value,
            "mean_power_w": self.mean_power_w,
            "mean_power_dbm": self.mean_power_dbm,
            "feasible_rate": self.feasible_rate,
            "rank1_rate": self.rank1_rate,
            "mean_gap": self.mean_gap,
            "failures": self.failures,
            "powers_w": [None if math.isnan(p) else p for p in self.powers],
        }


def _fmt(v):
    return "" if v is None else repr(float(v))


def _trial(ch, th, seed):
    """(power, rank_one, gap, failed) of one instance; NaN power if infeasible."""
    try:
        sol = optimize(ch, th, OptimizeOptions(seed=seed))
    except InfeasibleProblem:
        return math.nan, False, math.nan, False
    except SolverFailure:
        return math.nan, False, math.nan, True
    return sol.total_power, sol.all_rank_one, sol.gap, False


def run_sweep(cfg: ExperimentConfig, channels=None) -> list[ResultRow]:
    """Average the optimal power over ``cfg.trials`` channels at each sweep point.

    The same channel set is reused at every point, so per-trial curves are
    directly comparable across the sweep.
    """
    if cfg.sweep is None:
        raise ValueError("experiment config has no sweep")
    channels = generate_channels(cfg) if channels is None else channels
    rows = []
    for i, value in enumerate(cfg.sweep.values):
        if cfg.sweep.parameter == "xi":
            th = thresholds_for(cfg, gamma=cfg.sweep.fixed, xi=value)
        else:
            th = thresholds_for(cfg, gamma=value, xi=cfg.sweep.fixed)
        results = [_trial(ch, th, [cfg.seed, i, t]) for t, ch in enumerate(channels)]
        powers = [r[0] for r in results]
        ok = [r for r in results if not math.isnan(r[0])]
        rows.append(ResultRow(
            sweep_value=value,
            mean_power_w=float(np.mean([r[0] for r in ok])) if ok else None,
            feasible_rate=len(ok) / len(results),
            rank1_rate=float(np.mean([r[1] for r in ok])) if ok else None,
            mean_gap=float(np.mean([r[2] for r in ok])) if ok else None,
            powers=powers,
            failures=sum(r[3] for r in results),
        ))
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def sweep_json(cfg: ExperimentConfig, rows) -> str:
    return json.dumps({"config": cfg.to_dict(), "rows": [r.to_dict() for r in rows]}, indent=2)
