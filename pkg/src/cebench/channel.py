"""OFDM/DMRS carrier geometry and tapped-delay-line fading channel synthesis.

The carrier grid describes the uplink pilot layout (comb-mapped DMRS over a
PRB allocation); channels are synthesized as tapped delay lines with
sum-of-sinusoids Doppler fading and evaluated in the frequency domain at the
pilot subcarriers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

SUBCARRIERS_PER_PRB = 12
SYMBOLS_PER_SLOT = 14
JAKES_SINUSOIDS = 32


def _rng(seed) -> np.random.Generator:
    """Counter-style seedable generator; accepts ints, tuples or SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@dataclass(frozen=True)
class CarrierGrid:
    """DMRS resource geometry for one uplink slot.

    Pilots occupy every ``comb``-th subcarrier of the allocation, on the
    symbols listed in ``dmrs_symbols``. All frequencies are offsets from the
    first subcarrier of the allocation.
    """

    n_prb: int
    scs_hz: float
    comb: int
    dmrs_symbols: tuple[int, ...]
    n_ant: int
    symbol_duration_s: float

    @property
    def n_pilots(self) -> int:
        return self.n_prb * SUBCARRIERS_PER_PRB // self.comb

    @property
    def n_subcarriers(self) -> int:
        return self.n_prb * SUBCARRIERS_PER_PRB

    @property
    def n_dmrs_symbols(self) -> int:
        return len(self.dmrs_symbols)

    @property
    def pilots_per_prb(self) -> int:
        return SUBCARRIERS_PER_PRB // self.comb

    @property
    def pilot_spacing_hz(self) -> float:
        return self.comb * self.scs_hz

    @cached_property
    def pilot_freqs_hz(self) -> np.ndarray:
        """Absolute frequency offset of each pilot subcarrier."""
        return np.arange(self.n_pilots) * self.pilot_spacing_hz

    @cached_property
    def pilot_subcarriers(self) -> np.ndarray:
        return np.arange(self.n_pilots) * self.comb

    @cached_property
    def dmrs_times_s(self) -> np.ndarray:
        return np.asarray(self.dmrs_symbols, dtype=float) * self.symbol_duration_s

    def to_json(self) -> dict:
        return {
            "n_prb": self.n_prb,
            "scs_hz": self.scs_hz,
            "comb": self.comb,
            "dmrs_symbols": list(self.dmrs_symbols),
            "n_ant": self.n_ant,
            "symbol_duration_s": self.symbol_duration_s,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CarrierGrid":
        return build_grid(
            n_prb=obj["n_prb"],
            scs_hz=obj["scs_hz"],
            comb=obj["comb"],
            dmrs_symbols=obj["dmrs_symbols"],
            n_ant=obj["n_ant"],
            symbol_duration_s=obj.get("symbol_duration_s"),
        )


def build_grid(
    n_prb: int,
    scs_hz: float = 30e3,
    comb: int = 2,
    dmrs_symbols=(2, 7, 11),
    n_ant: int = 2,
    symbol_duration_s: float | None = None,
) -> CarrierGrid:
    """Validate carrier parameters and derive the pilot layout.

    The default symbol duration spreads the slot uniformly over 14 symbols
    (0.5 ms / 14 at 30 kHz subcarrier spacing).
    """
    if n_prb < 1:
        raise ValueError(f"n_prb must be >= 1, got {n_prb}")
    if comb not in (1, 2):
        raise ValueError(f"comb must be 1 or 2, got {comb}")
    if scs_hz <= 0:
        raise ValueError(f"scs_hz must be positive, got {scs_hz}")
    if n_ant < 1:
        raise ValueError(f"n_ant must be >= 1, got {n_ant}")
    syms = tuple(int(s) for s in dmrs_symbols)
    if not syms:
        raise ValueError("dmrs_symbols must be non-empty")
    if len(set(syms)) != len(syms):
        raise ValueError(f"duplicate DMRS symbol indices: {syms}")
    if any(b <= a for a, b in zip(syms, syms[1:])):
        raise ValueError(f"dmrs_symbols must be strictly increasing: {syms}")
    if syms[0] < 0 or syms[-1] > SYMBOLS_PER_SLOT - 1:
        raise ValueError(f"dmrs_symbols must lie in [0, 13]: {syms}")
    if symbol_duration_s is None:
        # slot duration = 1 ms / 2^mu with scs = 15 kHz * 2^mu
        symbol_duration_s = 1e-3 * 15e3 / (SYMBOLS_PER_SLOT * scs_hz)
    return CarrierGrid(
        n_prb=int(n_prb),
        scs_hz=float(scs_hz),
        comb=int(comb),
        dmrs_symbols=syms,
        n_ant=int(n_ant),
        symbol_duration_s=float(symbol_duration_s),
    )


def gen_pilot_sequence(seed, n_p: int) -> np.ndarray:
    """Deterministic unit-modulus pilot sequence (random QPSK points)."""
    if n_p < 1:
        raise ValueError(f"pilot sequence length must be >= 1, got {n_p}")
    rng = _rng(seed)
    quadrant = rng.integers(0, 4, size=n_p)
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * quadrant))


@dataclass(frozen=True)
class TdlProfile:
    """Tapped-delay-line power-delay profile.

    ``rician_k`` holds one linear K-factor per tap (0 = Rayleigh). Tap powers
    are normalized to unit total at construction.
    """

    tap_delays_s: tuple[float, ...]
    tap_powers_lin: tuple[float, ...]
    rician_k: tuple[float, ...]
    doppler_hz: float

    @property
    def n_taps(self) -> int:
        return len(self.tap_delays_s)


def make_profile(delays_s, powers_lin, rician_k=0.0, doppler_hz: float = 0.0) -> TdlProfile:
    """Build a normalized TDL profile.

    A scalar ``rician_k`` applies to the first (line-of-sight) tap only;
    pass a list for per-tap K-factors.
    """
    delays = tuple(float(d) for d in delays_s)
    powers = np.asarray(powers_lin, dtype=float)
    if len(delays) == 0:
        raise ValueError("profile needs at least one tap")
    if len(delays) != powers.size:
        raise ValueError("delay and power lists must have equal length")
    if any(d < 0 for d in delays):
        raise ValueError("tap delays must be non-negative")
    if any(b <= a for a, b in zip(delays, delays[1:])):
        raise ValueError("tap delays must be strictly increasing")
    if np.any(powers <= 0):
        raise ValueError("tap powers must be positive")
    powers = powers / powers.sum()
    if np.isscalar(rician_k):
        kfac = [0.0] * len(delays)
        kfac[0] = float(rician_k)
    else:
        kfac = [float(k) for k in rician_k]
        if len(kfac) != len(delays):
            raise ValueError("rician_k list must have one entry per tap")
    if any(k < 0 for k in kfac):
        raise ValueError("rician_k must be non-negative")
    if float(doppler_hz) < 0:
        raise ValueError("doppler_hz must be non-negative")
    return TdlProfile(
        tap_delays_s=delays,
        tap_powers_lin=tuple(powers.tolist()),
        rician_k=tuple(kfac),
        doppler_hz=float(doppler_hz),
    )


# Desk-scale placeholder profiles with exponentially decaying tap powers.
# Standardized delay-line tables can be loaded from a profile file instead.
_PRESETS = {
    "short": {"delays_ns": [0.0, 50.0, 100.0], "powers_db": [0.0, -5.0, -10.0]},
    "medium": {"delays_ns": [0.0, 100.0, 300.0], "powers_db": [0.0, -5.0, -10.0]},
    "long": {"delays_ns": [0.0, 300.0, 1000.0], "powers_db": [0.0, -5.0, -10.0]},
}


def preset_profile(name: str, doppler_hz: float = 0.0, rician_k=0.0) -> TdlProfile:
    if name not in _PRESETS:
        raise ValueError(f"unknown profile preset {name!r}; choose from {sorted(_PRESETS)}")
    p = _PRESETS[name]
    delays = [d * 1e-9 for d in p["delays_ns"]]
    powers = [10 ** (db / 10.0) for db in p["powers_db"]]
    return make_profile(delays, powers, rician_k=rician_k, doppler_hz=doppler_hz)


def load_profile(path) -> TdlProfile:
    """Load a TDL profile from a JSON file.

    Expected fields: delays_ns, powers_db, doppler_hz, rician_k.
    """
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    for key in ("delays_ns", "powers_db"):
        if key not in obj:
            raise ValueError(f"profile file missing field {key!r}")
    delays = [float(d) * 1e-9 for d in obj["delays_ns"]]
    powers = [10 ** (float(db) / 10.0) for db in obj["powers_db"]]
    return make_profile(
        delays,
        powers,
        rician_k=obj.get("rician_k", 0.0),
        doppler_hz=float(obj.get("doppler_hz", 0.0)),
    )


@dataclass(frozen=True)
class ChannelRealization:
    """Complex tap gains per (tap, antenna, symbol) for one slot of symbols."""

    tap_coeffs: np.ndarray
    profile: TdlProfile
    seed: int

    def __post_init__(self):
        if self.tap_coeffs.ndim != 3:
            raise ValueError("tap_coeffs must have shape (n_taps, n_ant, n_symbols)")
        if self.tap_coeffs.shape[0] != self.profile.n_taps:
            raise ValueError(
                f"tap_coeffs has {self.tap_coeffs.shape[0]} taps, "
                f"profile declares {self.profile.n_taps}"
            )

    @property
    def n_symbols(self) -> int:
        return self.tap_coeffs.shape[2]


def gen_channel(profile: TdlProfile, grid: CarrierGrid, n_symbols: int, seed) -> ChannelRealization:
    """Draw one fading realization of the profile over ``n_symbols`` OFDM symbols.

    Scattered components use a sum-of-sinusoids Jakes model (random arrival
    angles and phases, J0-shaped autocorrelation); taps are independent
    across antennas. Zero Doppler yields symbol-invariant coefficients.
    """
    if n_symbols < 1:
        raise ValueError(f"n_symbols must be >= 1, got {n_symbols}")
    if profile.n_taps == 0:
        raise ValueError("profile has no taps")
    rng = _rng(seed)
    n_taps, n_ant = profile.n_taps, grid.n_ant
    t = np.arange(n_symbols) * grid.symbol_duration_s

    alpha = rng.uniform(0.0, 2 * np.pi, size=(n_taps, n_ant, JAKES_SINUSOIDS))
    phi = rng.uniform(0.0, 2 * np.pi, size=(n_taps, n_ant, JAKES_SINUSOIDS))
    los_phase = rng.uniform(0.0, 2 * np.pi, size=(n_taps, n_ant))

    omega = 2 * np.pi * profile.doppler_hz * np.cos(alpha)  # rad/s per sinusoid
    phase = omega[..., None] * t[None, None, None, :] + phi[..., None]
    scatter = np.exp(1j * phase).sum(axis=2) / np.sqrt(JAKES_SINUSOIDS)

    powers = np.asarray(profile.tap_powers_lin)[:, None, None]
    kfac = np.asarray(profile.rician_k)[:, None, None]
    los = np.exp(1j * los_phase)[..., None]
    coeffs = np.sqrt(powers) * (
        np.sqrt(kfac / (kfac + 1.0)) * los + np.sqrt(1.0 / (kfac + 1.0)) * scatter
    )
    return ChannelRealization(tap_coeffs=coeffs, profile=profile, seed=_seed_label(seed))


def _seed_label(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.entropy if isinstance(seed.entropy, int) else 0)
    return 0


@dataclass(frozen=True)
class CfrTensor:
    """Complex channel frequency response at the pilot subcarriers.

    ``values`` is indexed (DMRS symbol, pilot subcarrier, antenna) and must
    match the grid's (N_sym, N_p, N_ant).
    """

    values: np.ndarray
    grid: CarrierGrid

    def __post_init__(self):
        expected = (self.grid.n_dmrs_symbols, self.grid.n_pilots, self.grid.n_ant)
        if self.values.shape != expected:
            raise ValueError(f"CFR shape {self.values.shape} does not match grid {expected}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "CfrTensor":
        return CfrTensor(values=values, grid=self.grid)


def cfr_at(realization: ChannelRealization, grid: CarrierGrid, symbol_indices=None) -> CfrTensor:
    """Evaluate the realization's frequency response at the pilot subcarriers.

    H[i, k, j] = sum_t c[t, j, sym_i] * exp(-j 2 pi f_k tau_t), with f_k the
    absolute pilot frequency offset. ``symbol_indices`` defaults to the
    grid's DMRS symbols and must select exactly N_sym symbols.
    """
    if symbol_indices is None:
        symbol_indices = grid.dmrs_symbols
    idx = np.asarray(symbol_indices, dtype=int)
    if idx.size != grid.n_dmrs_symbols:
        raise ValueError(
            f"expected {grid.n_dmrs_symbols} symbol indices (one per DMRS symbol), got {idx.size}"
        )
    if idx.min() < 0 or idx.max() >= realization.n_symbols:
        raise ValueError(
            f"symbol indices {symbol_indices} out of range for realization "
            f"with {realization.n_symbols} symbols"
        )
    delays = np.asarray(realization.profile.tap_delays_s)
    steering = np.exp(-2j * np.pi * np.outer(grid.pilot_freqs_hz, delays))  # (N_p, T)
    coeffs = realization.tap_coeffs[:, :, idx]  # (T, A, S)
    values = np.einsum("kt,tas->ska", steering, coeffs)
    return CfrTensor(values=values, grid=grid)
