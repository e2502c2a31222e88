"""Receiver-impairment chain: timing/frequency offsets, RX filter ripple,
LO leakage at fixed subcarriers, per-antenna scaling and AWGN.

Each impairment is a pure function on a pilot-domain CFR tensor; a sampled
``ImpairmentDraw`` fixes one realization of every enabled impairment so that
generated observations can be labeled with their ground-truth offsets.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .channel import CarrierGrid, CfrTensor, _rng


# ---------------------------------------------------------------------------
# Scalar distributions


@dataclass(frozen=True)
class ConstDist:
    value: float

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.value)

    def mean(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class UniformDist:
    low: float
    high: float

    def __post_init__(self):
        if self.high < self.low:
            raise ValueError(f"uniform bounds reversed: [{self.low}, {self.high}]")

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.low, self.high))

    def mean(self) -> float:
        return 0.5 * (self.low + self.high)


@dataclass(frozen=True)
class NormalDist:
    loc: float
    scale: float

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError(f"negative scale {self.scale}")

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.normal(self.loc, self.scale))

    def mean(self) -> float:
        return float(self.loc)


@dataclass(frozen=True)
class EmpiricalDist:
    """Nonparametric distribution: uniform resampling from measured scalars."""

    samples: tuple[float, ...]

    def __post_init__(self):
        if len(self.samples) == 0:
            raise ValueError("empirical distribution needs at least one sample")
        object.__setattr__(self, "samples", tuple(sorted(self.samples)))

    @classmethod
    def from_csv(cls, path) -> "EmpiricalDist":
        """One scalar per line; a non-numeric first line is taken as a header."""
        values: list[float] = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or not row[0].strip():
                    continue
                try:
                    values.append(float(row[0]))
                except ValueError:
                    if i == 0:
                        continue  # header line
                    raise ValueError(f"{path}: non-numeric value {row[0]!r} on line {i + 1}")
        return cls(samples=tuple(values))

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.samples[rng.integers(0, len(self.samples))])

    def mean(self) -> float:
        return float(np.mean(self.samples))


def dist_from_spec(spec: dict):
    """Build a distribution from its JSON config form."""
    kind = spec.get("type")
    if kind == "const":
        return ConstDist(float(spec["value"]))
    if kind == "uniform":
        return UniformDist(float(spec["low"]), float(spec["high"]))
    if kind == "normal":
        return NormalDist(float(spec["mean"]), float(spec["std"]))
    if kind == "empirical":
        return EmpiricalDist.from_csv(spec["path"])
    raise ValueError(f"unknown distribution type {kind!r}")


# ---------------------------------------------------------------------------
# Configuration and sampled draws


@dataclass(frozen=True)
class ImpairmentToggles:
    to: bool = True
    cfo: bool = True
    rx_filter: bool = True
    dc: bool = True
    ant_scale: bool = True
    awgn: bool = True

    def to_json(self) -> dict:
        return {
            "to": self.to, "cfo": self.cfo, "rx_filter": self.rx_filter,
            "dc": self.dc, "ant_scale": self.ant_scale, "awgn": self.awgn,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ImpairmentToggles":
        return cls(**{k: bool(v) for k, v in obj.items()})

    @classmethod
    def none(cls) -> "ImpairmentToggles":
        return cls(to=False, cfo=False, rx_filter=False, dc=False, ant_scale=False, awgn=False)


def default_ripple_profile(n_pilots: int, peak_db: float = 0.5) -> np.ndarray:
    """Two-term cosine passband ripple, bounded by +/- peak_db across the band."""
    u = np.arange(n_pilots) / max(n_pilots - 1, 1)
    gain_db = peak_db * (0.5 * np.cos(2 * np.pi * u) + 0.5 * np.cos(4 * np.pi * u))
    return (10.0 ** (gain_db / 20.0)).astype(complex)


@dataclass(frozen=True)
class ImpairmentConfig:
    """Distributions and fixed parameters for the impairment chain.

    ``rx_filter`` is a per-pilot complex gain array, or None for the default
    ripple profile built at apply time. Placeholder defaults: the offset
    distributions stand in for unpublished field measurements and should be
    replaced with empirical files when available.
    """

    to_dist: object = field(default_factory=lambda: UniformDist(-1e-6, 1e-6))
    cfo_dist: object = field(default_factory=lambda: UniformDist(-200.0, 200.0))
    rx_filter: np.ndarray | None = None
    dc_indices: tuple[int, ...] = ()
    dc_leak_amp: float = 0.0
    ant_gains_db: tuple[float, ...] = (0.0, -1.5)
    snr_grid_db: tuple[float, ...] = (0.0,)
    toggles: ImpairmentToggles = field(default_factory=ImpairmentToggles)

    def filter_for(self, grid: CarrierGrid) -> np.ndarray:
        if self.rx_filter is not None:
            prof = np.asarray(self.rx_filter, dtype=complex)
            if prof.shape != (grid.n_pilots,):
                raise ValueError(
                    f"rx_filter length {prof.shape} does not match N_p={grid.n_pilots}"
                )
            return prof
        return default_ripple_profile(grid.n_pilots)


@dataclass(frozen=True)
class ImpairmentDraw:
    """One sampled realization of every impairment applied to a record."""

    to_s: float
    cfo_hz: float
    ant_gains_lin: tuple[float, ...]
    snr_db: float
    dc_indices: tuple[int, ...]
    dc_leak: tuple[complex, ...]
    seed: int

    def __post_init__(self):
        if not np.isfinite(self.to_s) or not np.isfinite(self.cfo_hz):
            raise ValueError("offsets must be finite")
        if any(g <= 0 for g in self.ant_gains_lin):
            raise ValueError("antenna gains must be positive linear amplitudes")

    @classmethod
    def identity(cls, n_ant: int, seed: int = 0) -> "ImpairmentDraw":
        return cls(
            to_s=0.0, cfo_hz=0.0, ant_gains_lin=(1.0,) * n_ant,
            snr_db=np.inf, dc_indices=(), dc_leak=(), seed=seed,
        )

    def to_json(self) -> dict:
        return {
            "to_s": self.to_s,
            "cfo_hz": self.cfo_hz,
            "ant_gains_lin": list(self.ant_gains_lin),
            "snr_db": None if np.isinf(self.snr_db) else self.snr_db,
            "dc_indices": list(self.dc_indices),
            "dc_leak": [[float(v.real), float(v.imag)] for v in self.dc_leak],
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ImpairmentDraw":
        snr = obj.get("snr_db")
        return cls(
            to_s=float(obj["to_s"]),
            cfo_hz=float(obj["cfo_hz"]),
            ant_gains_lin=tuple(float(g) for g in obj["ant_gains_lin"]),
            snr_db=np.inf if snr is None else float(snr),
            dc_indices=tuple(int(i) for i in obj["dc_indices"]),
            dc_leak=tuple(complex(re, im) for re, im in obj["dc_leak"]),
            seed=int(obj["seed"]),
        )


def sample_impairments(config: ImpairmentConfig, rng_seed) -> ImpairmentDraw:
    """Draw one impairment realization; disabled toggles yield identity values."""
    rng = _rng(rng_seed)
    t = config.toggles
    to_s = config.to_dist.sample(rng) if t.to else 0.0
    cfo_hz = config.cfo_dist.sample(rng) if t.cfo else 0.0
    if t.ant_scale:
        gains = tuple(10.0 ** (g / 20.0) for g in config.ant_gains_db)
    else:
        gains = (1.0,) * len(config.ant_gains_db)
    if t.awgn:
        if len(config.snr_grid_db) == 0:
            raise ValueError("snr_grid_db is empty")
        snr_db = float(config.snr_grid_db[rng.integers(0, len(config.snr_grid_db))])
    else:
        snr_db = np.inf
    if t.dc and config.dc_indices:
        phases = rng.uniform(0.0, 2 * np.pi, size=len(config.dc_indices))
        leak = tuple(config.dc_leak_amp * np.exp(1j * p) for p in phases)
        dc_idx = tuple(config.dc_indices)
    else:
        leak, dc_idx = (), ()
    return ImpairmentDraw(
        to_s=to_s, cfo_hz=cfo_hz, ant_gains_lin=gains, snr_db=snr_db,
        dc_indices=dc_idx, dc_leak=leak, seed=_as_seed_int(rng_seed),
    )


def _as_seed_int(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return 0


# ---------------------------------------------------------------------------
# Chain stages


def apply_timing_offset(cfr: CfrTensor, to_s: float, grid: CarrierGrid | None = None) -> CfrTensor:
    """Frequency-domain phase ramp: pilot k multiplied by exp(-j 2 pi f_k to)."""
    grid = grid or cfr.grid
    if not np.isfinite(to_s):
        raise ValueError("timing offset must be finite")
    ramp = np.exp(-2j * np.pi * grid.pilot_freqs_hz * to_s)
    return cfr.with_values(cfr.values * ramp[None, :, None])


def apply_cfo(cfr: CfrTensor, cfo_hz: float, grid: CarrierGrid | None = None) -> CfrTensor:
    """Inter-symbol rotation: symbol at time t_i multiplied by exp(j 2 pi cfo t_i)."""
    grid = grid or cfr.grid
    if not np.isfinite(cfo_hz):
        raise ValueError("carrier frequency offset must be finite")
    rot = np.exp(2j * np.pi * cfo_hz * grid.dmrs_times_s)
    return cfr.with_values(cfr.values * rot[:, None, None])


def apply_rx_filter(cfr: CfrTensor, filter_profile: np.ndarray) -> CfrTensor:
    """Per-pilot complex multiply with the receiver's frequency response."""
    prof = np.asarray(filter_profile)
    if prof.shape != (cfr.grid.n_pilots,):
        raise ValueError(
            f"filter length {prof.shape} does not match N_p={cfr.grid.n_pilots}"
        )
    return cfr.with_values(cfr.values * prof[None, :, None])


def apply_dc_leakage(cfr: CfrTensor, dc_indices, leak) -> CfrTensor:
    """Add a leakage tone at the listed pilot indices (all symbols/antennas)."""
    idx = np.asarray(dc_indices, dtype=int)
    if idx.size == 0:
        return cfr.with_values(cfr.values.copy())
    if idx.min() < 0 or idx.max() >= cfr.grid.n_pilots:
        raise ValueError(f"DC indices {dc_indices} out of range [0, {cfr.grid.n_pilots})")
    leak_arr = np.broadcast_to(np.asarray(leak, dtype=complex), idx.shape)
    out = cfr.values.copy()
    out[:, idx, :] += leak_arr[None, :, None]
    return cfr.with_values(out)


def apply_antenna_scaling(cfr: CfrTensor, ant_gains_db) -> CfrTensor:
    """Scale antenna j by 10^(gain_db/20), constant over symbols and subcarriers."""
    gains = np.asarray(ant_gains_db, dtype=float)
    if gains.shape != (cfr.grid.n_ant,):
        raise ValueError(f"need one gain per antenna ({cfr.grid.n_ant}), got {gains.shape}")
    lin = 10.0 ** (gains / 20.0)
    return cfr.with_values(cfr.values * lin[None, None, :])


def _apply_antenna_scaling_lin(cfr: CfrTensor, gains_lin) -> CfrTensor:
    lin = np.asarray(gains_lin, dtype=float)
    if lin.shape != (cfr.grid.n_ant,):
        raise ValueError(f"need one gain per antenna ({cfr.grid.n_ant}), got {lin.shape}")
    return cfr.with_values(cfr.values * lin[None, None, :])


def add_awgn(cfr: CfrTensor, snr_db: float, seed) -> CfrTensor:
    """Add circular complex Gaussian noise at the given SNR below mean |H|^2."""
    if np.isnan(snr_db):
        raise ValueError("snr_db must be a number or +inf")
    if np.isinf(snr_db):
        return cfr.with_values(cfr.values.copy())
    rng = _rng(seed)
    sig_power = float(np.mean(np.abs(cfr.values) ** 2))
    var = sig_power * 10.0 ** (-snr_db / 10.0)
    shape = cfr.values.shape
    noise = np.sqrt(var / 2.0) * (
        rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    )
    return cfr.with_values(cfr.values + noise)


# AWGN sub-seed tag so the noise stream is decoupled from the draw sampling.
_NOISE_TAG = 0xA3

def apply_chain(
    cfr: CfrTensor, draw: ImpairmentDraw, config: ImpairmentConfig
) -> tuple[CfrTensor, ImpairmentDraw]:
    """Apply enabled impairments in fixed order:

    filter -> antenna scaling -> TO -> CFO -> DC leakage -> AWGN.

    The multiplicative stages commute; noise comes last so the configured SNR
    is met at the receiver input. Returns the draw alongside the output for
    labeling.
    """
    t = config.toggles
    out = cfr
    if t.rx_filter:
        out = apply_rx_filter(out, config.filter_for(cfr.grid))
    if t.ant_scale:
        out = _apply_antenna_scaling_lin(out, draw.ant_gains_lin)
    if t.to:
        out = apply_timing_offset(out, draw.to_s)
    if t.cfo:
        out = apply_cfo(out, draw.cfo_hz)
    if t.dc and draw.dc_indices:
        out = apply_dc_leakage(out, draw.dc_indices, draw.dc_leak)
    if t.awgn:
        out = add_awgn(out, draw.snr_db, np.random.SeedSequence((draw.seed, _NOISE_TAG)))
    if out is cfr:
        out = cfr.with_values(cfr.values.copy())
    return out, draw
