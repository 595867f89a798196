"""Point-to-point link and diplexer-based receiver simulation.

The transmitted passband signal is simulated on a carrier-rate grid, mixed
down with a coherent quadrature local oscillator and split by an ideal
diplexer into a baseband path (information decoding) and a doubling-frequency
path (energy harvesting).  Time averages over the two paths give the
power-splitting factor of the receiver, which is 0.5 in expectation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "LinkConfig",
    "BasebandMessage",
    "WaveformTrace",
    "ReceiverReport",
    "qam_message",
    "synthesize_received",
    "mix",
    "diplex",
    "assemble_paths",
    "add_conversion_noise",
    "receiver_report",
    "simulate_receiver",
    "analytic_path_power",
    "analytic_snr",
    "write_trace_csv",
]

SAMPLES_PER_CYCLE = 32
MIN_SAMPLES_PER_CYCLE = 16  # 8x Nyquist for the 2 f_c component
MIN_SYMBOLS = 100


@dataclass(frozen=True)
class LinkConfig:
    """Scalar physical parameters of one single-antenna link.

    The propagation delay only enters through the phase shift ``phi``.
    """

    p_avg: float
    f_c: float
    bandwidth_b: float
    a_gain: float
    phi: float = 0.0
    sigma_a_sq: float = 0.0
    sigma_cov_sq: float = 0.0
    eta: float = 1.0

    def __post_init__(self):
        for name in ("p_avg", "f_c", "bandwidth_b", "a_gain", "phi",
                     "sigma_a_sq", "sigma_cov_sq", "eta"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite number, got {value!r}")
        if self.p_avg <= 0:
            raise ValueError("p_avg must be positive")
        if self.a_gain <= 0:
            raise ValueError("a_gain must be positive")
        if self.sigma_a_sq < 0 or self.sigma_cov_sq < 0:
            raise ValueError("noise powers must be nonnegative")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if self.bandwidth_b <= 0:
            raise ValueError("bandwidth_b must be positive")
        if self.f_c < 10 * self.bandwidth_b:
            raise ValueError("narrowband assumption violated: need f_c >= 10 * bandwidth_b")
        if not 0 <= self.phi < 2 * math.pi:
            raise ValueError("phi must lie in [0, 2*pi)")

    @property
    def sigma_sq(self) -> float:
        """Equivalent information-decoding noise power."""
        return self.sigma_a_sq + 2 * self.sigma_cov_sq

    @classmethod
    def from_dict(cls, data: dict) -> "LinkConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown link config fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    @classmethod
    def from_json(cls, path) -> "LinkConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BasebandMessage:
    """Complex baseband message ``m = a exp(jb)`` sampled at ``sample_rate``."""

    samples: np.ndarray
    sample_rate: float
    symbol_rate: float
    power_tol: float = 0.1

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("message must be a non-empty 1-D sequence")
        if self.sample_rate <= 0 or self.symbol_rate <= 0:
            raise ValueError("rates must be positive")
        power = float(np.mean(np.abs(samples) ** 2))
        if abs(power - 1.0) > self.power_tol:
            raise ValueError(f"message power {power:.4f} is not unit within {self.power_tol}")

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.samples)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.samples)


@dataclass(frozen=True)
class WaveformTrace:
    """Uniformly sampled time series."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples))
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return self.samples.size

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass
class ReceiverReport:
    power_l: float
    power_h: float
    rho: float
    q_harvested: float
    q_harvested_empirical: float
    snr: float
    n_samples: int
    recovered_lowpass: np.ndarray = field(repr=False, default=None)

    @property
    def snr_db(self) -> float:
        return 10 * math.log10(self.snr) if self.snr > 0 else -math.inf

    def to_dict(self) -> dict:
        return {
            "power_l": self.power_l,
            "power_h": self.power_h,
            "rho": self.rho,
            "q_harvested": self.q_harvested,
            "q_harvested_empirical": self.q_harvested_empirical,
            "snr": self.snr,
            "snr_db": self.snr_db,
            "n_samples": self.n_samples,
        }


def qam_message(n_symbols, symbol_rate, seed=None, order=4, samples_per_symbol=1,
                phase_offset=0.0):
    """Draw a unit-power QPSK (``order=4``) or 16-QAM message.

    QPSK uses the constellation {1, j, -1, -j} rotated by ``phase_offset``,
    so every symbol has unit amplitude.  16-QAM is scaled by its mean energy
    of 10.
    """
    if n_symbols < 1:
        raise ValueError("n_symbols must be at least 1")
    rng = np.random.default_rng(seed)
    if order == 4:
        symbols = np.exp(1j * (np.pi / 2 * rng.integers(0, 4, n_symbols) + phase_offset))
    elif order == 16:
        levels = np.array([-3, -1, 1, 3])
        symbols = (rng.choice(levels, n_symbols) + 1j * rng.choice(levels, n_symbols)) / math.sqrt(10)
    else:
        raise ValueError("order must be 4 or 16")
    samples = np.repeat(symbols, samples_per_symbol)
    return BasebandMessage(samples, symbol_rate * samples_per_symbol, symbol_rate)


def _integer_ratio(num, den, what):
    ratio = num / den
    nearest = round(ratio)
    if nearest < 1 or abs(ratio - nearest) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"{what} must be a positive integer, got {ratio}")
    return int(nearest)


def _samples_per_cycle(sample_rate, f_c):
    spc = _integer_ratio(sample_rate, f_c, "samples per carrier cycle")
    if spc < MIN_SAMPLES_PER_CYCLE:
        raise ValueError(f"need at least {MIN_SAMPLES_PER_CYCLE} samples per carrier cycle, got {spc}")
    return spc


def _lowpass_noise(n, sample_rate, bandwidth, variance, rng):
    """Circular complex Gaussian noise band-limited to |f| <= bandwidth."""
    white = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    if variance == 0:
        return np.zeros(n, dtype=complex)
    freqs = np.fft.fftfreq(n, d=1 / sample_rate)
    keep = np.abs(freqs) <= bandwidth
    spectrum = np.fft.fft(white) * keep
    # expected variance after masking is keep.sum()/n
    scale = math.sqrt(variance * n / keep.sum())
    return np.fft.ifft(spectrum) * scale


def synthesize_received(cfg: LinkConfig, msg: BasebandMessage, seed=None,
                        samples_per_cycle=SAMPLES_PER_CYCLE,
                        noise_bandwidth=None) -> WaveformTrace:
    """Received passband signal of the link.

    ``r = sqrt(2 A P) a cos(2 pi f_c t + b + phi) + sqrt(2) c cos(2 pi f_c t + d)``
    where ``c exp(jd)`` is lowpass antenna noise with variance ``sigma_a_sq``.
    The noise is band-limited to ``noise_bandwidth`` (default ``f_c / 2``,
    a front-end filter that keeps the mixed noise clear of the crossover).
    """
    if noise_bandwidth is None:
        noise_bandwidth = cfg.f_c / 2
    if not 0 < noise_bandwidth < cfg.f_c:
        raise ValueError("noise_bandwidth must lie in (0, f_c)")
    sample_rate = samples_per_cycle * cfg.f_c
    _samples_per_cycle(sample_rate, cfg.f_c)
    hold = _integer_ratio(sample_rate, msg.sample_rate, "output/message sample-rate ratio")
    envelope = np.repeat(msg.samples, hold)
    n = envelope.size
    rng = np.random.default_rng(seed)
    noise = _lowpass_noise(n, sample_rate, noise_bandwidth, cfg.sigma_a_sq, rng)

    t = np.arange(n) / sample_rate
    carrier = 2 * np.pi * cfg.f_c * t
    a, b = np.abs(envelope), np.angle(envelope)
    c, d = np.abs(noise), np.angle(noise)
    r = (math.sqrt(2 * cfg.a_gain * cfg.p_avg) * a * np.cos(carrier + b + cfg.phi)
         + math.sqrt(2) * c * np.cos(carrier + d))
    return WaveformTrace(r, sample_rate)


def mix(cfg: LinkConfig, r: WaveformTrace):
    """Coherent quadrature mixer with a phase-locked local oscillator."""
    _samples_per_cycle(r.sample_rate, cfg.f_c)
    lo_phase = 2 * np.pi * cfg.f_c * r.time + cfg.phi
    g1 = WaveformTrace(r.samples * np.cos(lo_phase), r.sample_rate)
    g2 = WaveformTrace(r.samples * np.sin(lo_phase), r.sample_rate)
    return g1, g2


def _brick_wall_split(x, sample_rate, crossover):
    spectrum = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, d=1 / sample_rate)
    low = np.fft.irfft(np.where(freqs < crossover, spectrum, 0), n=x.size)
    return low, x - low


def diplex(g1: WaveformTrace, g2: WaveformTrace, f_c, bandwidth_b=0.0, crossover=None):
    """Ideal diplexer on both mixer branches.

    Returns ``(r1, r2, r3, r4)``: baseband and doubling-frequency parts of
    ``g1`` followed by those of ``g2``.  The split is a brick wall at
    ``crossover`` (default ``f_c``) applied in the frequency domain, so
    ``r1 + r2 == g1`` up to rounding.
    """
    if g1.sample_rate != g2.sample_rate or len(g1) != len(g2):
        raise ValueError("mixer branches must share one time grid")
    _samples_per_cycle(g1.sample_rate, f_c)
    crossover = f_c if crossover is None else crossover
    if not bandwidth_b < crossover < 2 * f_c - bandwidth_b:
        raise ValueError("crossover must lie strictly between the baseband and doubling bands")
    fs = g1.sample_rate
    r1, r2 = _brick_wall_split(g1.samples, fs, crossover)
    r3, r4 = _brick_wall_split(g2.samples, fs, crossover)
    return tuple(WaveformTrace(x, fs) for x in (r1, r2, r3, r4))


def assemble_paths(r1, r2, r3, r4):
    """Combine diplexer outputs into the ID path ``l``, the EH path ``h`` and
    the recovered lowpass signal ``r1 + j r3``.

    ``r1 + j r3`` equals ``sqrt(A P / 2) a exp(-jb)`` plus noise, i.e. the
    conjugate of the usual lowpass equivalent; powers are unaffected.
    """
    rates = {x.sample_rate for x in (r1, r2, r3, r4)}
    sizes = {len(x) for x in (r1, r2, r3, r4)}
    if len(rates) != 1 or len(sizes) != 1:
        raise ValueError("diplexer outputs are not aligned")
    fs = r1.sample_rate
    l = WaveformTrace(r1.samples + r3.samples, fs)
    h = WaveformTrace(r2.samples + r4.samples, fs)
    return l, h, r1.samples + 1j * r3.samples


def add_conversion_noise(cfg: LinkConfig, recovered_lowpass, seed=None):
    """Add passband-to-baseband conversion noise CN(0, sigma_cov_sq) to the ID path."""
    rng = np.random.default_rng(seed)
    n = len(recovered_lowpass)
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(cfg.sigma_cov_sq / 2)
    return np.asarray(recovered_lowpass) + noise


def analytic_path_power(cfg: LinkConfig) -> float:
    """Expected power of either receiver path, ``(A P + sigma_A^2) / 2``."""
    return (cfg.a_gain * cfg.p_avg + cfg.sigma_a_sq) / 2


def analytic_snr(cfg: LinkConfig) -> float:
    return cfg.a_gain * cfg.p_avg / cfg.sigma_sq if cfg.sigma_sq > 0 else math.inf


def receiver_report(cfg: LinkConfig, l: WaveformTrace, h: WaveformTrace,
                    recovered_lowpass, samples_per_symbol: int) -> ReceiverReport:
    """Time-average the receiver paths and evaluate the link metrics.

    One symbol is dropped at each edge of the trace as a filter guard.
    """
    n = len(l)
    if len(h) != n or len(recovered_lowpass) != n:
        raise ValueError("paths are not aligned")
    if samples_per_symbol < 1 or n // samples_per_symbol < MIN_SYMBOLS + 2:
        raise ValueError(f"trace must span at least {MIN_SYMBOLS + 2} symbol periods")
    guard = slice(samples_per_symbol, n - samples_per_symbol)
    power_l = float(np.mean(l.samples[guard] ** 2))
    power_h = float(np.mean(h.samples[guard] ** 2))
    total = power_l + power_h
    if not total > 0:
        raise ValueError("degenerate receiver traces with zero power")
    return ReceiverReport(
        power_l=power_l,
        power_h=power_h,
        rho=power_h / total,
        q_harvested=cfg.eta * cfg.a_gain * cfg.p_avg / 2,
        q_harvested_empirical=cfg.eta * (power_h - cfg.sigma_a_sq / 2),
        snr=analytic_snr(cfg),
        n_samples=guard.stop - guard.start,
        recovered_lowpass=np.asarray(recovered_lowpass)[guard],
    )


def simulate_receiver(cfg: LinkConfig, n_samples=100_000, seed=0, order=4,
                      samples_per_cycle=SAMPLES_PER_CYCLE, phase_offset=0.0):
    """Run the whole link: message, channel, mixer, diplexer, report.

    The symbol period is ``floor(f_c / bandwidth_b)`` carrier cycles and the
    trace length is rounded up to a whole number of symbols.  Returns the
    report and a dict of the intermediate traces.
    """
    cycles_per_symbol = max(1, int(cfg.f_c // cfg.bandwidth_b))
    sps = cycles_per_symbol * samples_per_cycle
    n_symbols = -(-int(n_samples) // sps)
    if n_symbols < MIN_SYMBOLS + 2:
        raise ValueError(f"n_samples={n_samples} covers fewer than {MIN_SYMBOLS + 2} symbols")
    msg_seed, noise_seed, cov_seed = np.random.SeedSequence(seed).spawn(3)
    msg = qam_message(n_symbols, cfg.f_c / cycles_per_symbol, seed=msg_seed, order=order,
                      phase_offset=phase_offset)
    r = synthesize_received(cfg, msg, seed=noise_seed, samples_per_cycle=samples_per_cycle)
    g1, g2 = mix(cfg, r)
    r1, r2, r3, r4 = diplex(g1, g2, cfg.f_c, cfg.bandwidth_b)
    l, h, r_l = assemble_paths(r1, r2, r3, r4)
    r_l = add_conversion_noise(cfg, r_l, seed=cov_seed)
    report = receiver_report(cfg, l, h, r_l, sps)
    traces = {"r": r, "g1": g1, "g2": g2, "r1": r1, "r2": r2, "r3": r3, "r4": r4, "l": l, "h": h}
    return report, traces


def write_trace_csv(path, trace: WaveformTrace):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "value"])
        for t, v in zip(trace.time, trace.samples):
            writer.writerow([repr(float(t)), repr(float(np.real(v)))])
