"""Receive-side estimation stack: LS extraction, pilot-based offset
estimation, DC repair, normalization, PDP-based MMSE filtering, frequency
interpolation, and the staged pipeline that chains them.

All estimators are mask-aware: entries with mask 0 are never read, so
unoccupied pilots may hold arbitrary values (including NaN).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import CarrierGrid, CfrTensor

_EPS = 1e-30

METHODS = ("LS", "MMSE", "AI")


@dataclass(frozen=True)
class LsEstimate:
    """Per-pilot least-squares estimates plus their mean power."""

    values: CfrTensor
    power: float


@dataclass(frozen=True)
class OffsetEstimate:
    """Timing/frequency offsets recovered from pilot-domain phase structure."""

    to_metric: complex
    to_s: float
    cfo_metric: complex
    cfo_hz: float

    def __post_init__(self):
        if not (np.isfinite(self.to_s) and np.isfinite(self.cfo_hz)):
            raise ValueError("offset estimates must be finite")


@dataclass(frozen=True)
class FullGridEstimate:
    """Channel estimate over every subcarrier of the allocation.

    ``occupancy`` marks subcarriers covered by an unmasked pilot run; values
    outside it are zero. ``method`` tags the estimator that produced it.
    """

    values: np.ndarray  # (N_sym, n_subcarriers, N_ant)
    occupancy: np.ndarray  # (n_subcarriers,) uint8
    method: str
    grid: CarrierGrid

    def __post_init__(self):
        expected = (self.grid.n_dmrs_symbols, self.grid.n_subcarriers, self.grid.n_ant)
        if self.values.shape != expected:
            raise ValueError(f"full-grid shape {self.values.shape}, expected {expected}")
        occ = self.occupancy.astype(bool)
        if not np.all(np.isfinite(self.values[:, occ, :])):
            raise ValueError("non-finite estimate at occupied subcarrier")

    def at_pilots(self) -> np.ndarray:
        """Values sampled back at the pilot subcarriers, shape (N_sym, N_p, N_ant)."""
        return self.values[:, self.grid.pilot_subcarriers, :]


def _full_mask(grid: CarrierGrid, mask) -> np.ndarray:
    if mask is None:
        return np.ones(grid.n_pilots, dtype=bool)
    m = np.asarray(mask)
    if m.shape != (grid.n_pilots,):
        raise ValueError(f"mask length {m.shape} does not match N_p={grid.n_pilots}")
    return m.astype(bool)


def _unmasked_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Contiguous [start, stop) index ranges where mask is set."""
    runs = []
    start = None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def ls_extract(rx_pilots: CfrTensor, pilot_seq: np.ndarray | None = None, mask=None) -> LsEstimate:
    """Divide received pilots by the known sequence to get raw LS estimates.

    ``pilot_seq=None`` means the observations are already in the LS domain
    (unit pilots). Masked-out pilots are zeroed; power is the mean |.|^2 over
    unmasked entries.
    """
    m = _full_mask(rx_pilots.grid, mask)
    values = rx_pilots.values.copy()
    if pilot_seq is not None:
        seq = np.asarray(pilot_seq)
        if seq.shape != (rx_pilots.grid.n_pilots,):
            raise ValueError(
                f"pilot sequence length {seq.shape} does not match N_p={rx_pilots.grid.n_pilots}"
            )
        if np.any(np.abs(seq) < _EPS):
            raise ValueError("pilot sequence contains a zero element")
        values = values / seq[None, :, None]
    values[:, ~m, :] = 0.0
    if not np.any(m):
        raise ValueError("mask excludes every pilot")
    power = float(np.mean(np.abs(values[:, m, :]) ** 2, dtype=np.float64))
    return LsEstimate(values=rx_pilots.with_values(values), power=power)


def estimate_to(ls: CfrTensor, mask=None) -> tuple[complex, float]:
    """Timing offset from the average phase step between adjacent pilots.

    Returns the complex pair-product metric and the offset in seconds,
    pooled over all DMRS symbols and antennas. Only pairs with both pilots
    unmasked contribute; the normalizer is the actual pair count.
    """
    m = _full_mask(ls.grid, mask)
    pair_ok = m[:-1] & m[1:]
    n_pairs = int(pair_ok.sum()) * ls.grid.n_dmrs_symbols * ls.grid.n_ant
    if n_pairs == 0:
        raise ValueError("need at least 2 adjacent unmasked pilots")
    v = ls.values
    prods = v[:, :-1, :][:, pair_ok, :] * np.conj(v[:, 1:, :][:, pair_ok, :])
    metric = complex(np.sum(prods, dtype=np.complex128) / n_pairs)
    to_s = float(np.angle(metric) / (2 * np.pi * ls.grid.pilot_spacing_hz))
    return metric, to_s


def estimate_cfo(ls: CfrTensor, i1: int, i2: int, mask=None) -> tuple[complex, float]:
    """Carrier frequency offset from the rotation between two DMRS symbols.

    ``i1``/``i2`` index the DMRS symbol axis; the time base comes from the
    grid's symbol positions. A positive offset rotates later symbols
    forward, so the metric angle is negated. Unambiguous for
    |cfo| < 1/(2 dt).
    """
    n_sym = ls.grid.n_dmrs_symbols
    if i1 == i2:
        raise ValueError("CFO estimation needs two distinct DMRS symbols")
    if not (0 <= i1 < n_sym and 0 <= i2 < n_sym):
        raise ValueError(f"symbol indices ({i1}, {i2}) out of range [0, {n_sym})")
    m = _full_mask(ls.grid, mask)
    n_terms = int(m.sum()) * ls.grid.n_ant
    if n_terms == 0:
        raise ValueError("mask excludes every pilot")
    prods = ls.values[i1, m, :] * np.conj(ls.values[i2, m, :])
    metric = complex(np.sum(prods, dtype=np.complex128) / n_terms)
    dt = ls.grid.dmrs_times_s[i2] - ls.grid.dmrs_times_s[i1]
    cfo_hz = float(-np.angle(metric) / (2 * np.pi * dt))
    return metric, cfo_hz


def estimate_cfo_avg(ls: CfrTensor, mask=None) -> float:
    """Average the pairwise CFO estimate over consecutive DMRS symbol pairs."""
    n_sym = ls.grid.n_dmrs_symbols
    if n_sym < 2:
        raise ValueError("need at least two DMRS symbols for CFO estimation")
    estimates = [estimate_cfo(ls, i, i + 1, mask)[1] for i in range(n_sym - 1)]
    return float(np.mean(estimates))


def compensate_to(ls: CfrTensor, to_s: float, direction: str = "forward") -> CfrTensor:
    """Remove (forward) or re-apply (inverse) a timing-offset phase ramp."""
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    if not np.isfinite(to_s):
        raise ValueError("timing offset must be finite")
    sign = 1.0 if direction == "forward" else -1.0
    ramp = np.exp(2j * np.pi * sign * ls.grid.pilot_freqs_hz * to_s)
    return ls.with_values(ls.values * ramp[None, :, None])


def repair_dc(ls: CfrTensor, dc_indices, mask=None) -> CfrTensor:
    """Replace leakage-distorted pilots with the mean of their neighbors.

    Edge indices use the single existing neighbor; neighbor reads use the
    original (pre-repair) values and skip masked or distorted pilots.
    """
    idx = np.asarray(dc_indices, dtype=int)
    m = _full_mask(ls.grid, mask)
    out = ls.values.copy()
    out[:, ~m, :] = 0.0
    if idx.size == 0:
        return ls.with_values(out)
    n_p = ls.grid.n_pilots
    if idx.min() < 0 or idx.max() >= n_p:
        raise ValueError(f"DC indices {dc_indices} out of range [0, {n_p})")
    distorted = set(int(k) for k in idx)
    src = ls.values
    for k in idx:
        if not m[k]:
            continue  # masked-out pilot is zero by contract; nothing to repair
        neighbors = []
        for nb in (k - 1, k + 1):
            if 0 <= nb < n_p and m[nb] and nb not in distorted:
                neighbors.append(src[:, nb, :])
        if neighbors:
            out[:, k, :] = np.mean(neighbors, axis=0)
    return ls.with_values(out)


def normalize(ls: CfrTensor, mask=None) -> tuple[CfrTensor, float]:
    """Scale so the RMS over unmasked entries is 1; returns (tensor, scale)."""
    m = _full_mask(ls.grid, mask)
    sel = ls.values[:, m, :]
    rms = float(np.sqrt(np.mean(np.abs(sel) ** 2, dtype=np.float64)))
    if rms < 1e-15:
        raise ValueError("cannot normalize an all-zero tensor")
    out = ls.values.copy()
    out[:, ~m, :] = 0.0
    out[:, m, :] = out[:, m, :] / rms
    return ls.with_values(out), rms


def denormalize(ls: CfrTensor, scale: float, mask=None) -> CfrTensor:
    m = _full_mask(ls.grid, mask)
    out = ls.values.copy()
    out[:, ~m, :] = 0.0
    out[:, m, :] = out[:, m, :] * scale
    return ls.with_values(out)


# ---------------------------------------------------------------------------
# PDP-approximation MMSE


def _wiener_window(x: np.ndarray, noise_var: float | None, threshold_factor: float) -> np.ndarray:
    """Wiener-filter one window of LS samples, shape (n_sym, w, n_ant).

    The power-delay profile is pooled over symbols and antennas (they share
    tap support), which suppresses spurious noise bins before thresholding;
    one filter matrix then serves every symbol/antenna slice.
    """
    w = x.shape[1]
    g = np.fft.ifft(x, axis=1)
    pdp = np.mean(np.abs(g) ** 2, axis=(0, 2))
    if noise_var is None:
        thr = threshold_factor * float(np.median(pdp))
        below = pdp < thr
        sigma2 = w * float(np.mean(pdp[below])) if np.any(below) else 0.0
    else:
        sigma2 = float(noise_var)
        # Per-bin noise level is sigma^2 / w after the 1/w-scaled IDFT.
        thr = threshold_factor * sigma2 / w
    keep = pdp >= thr
    if sigma2 <= _EPS:
        return x.copy()  # zero-noise limit: Wiener weights reduce to identity
    p_kept = np.where(keep, pdp, 0.0)
    # Autocorrelation across pilot offsets from the surviving taps:
    # r[d] = sum_t p[t] exp(-j 2 pi d t / w)
    r = np.fft.fft(p_kept)
    lags = np.arange(w)[:, None] - np.arange(w)[None, :]
    r_full = np.concatenate([np.conj(r[1:][::-1]), r])  # lags -(w-1)..(w-1)
    big_r = r_full[lags + w - 1]
    filt = np.linalg.solve((big_r + sigma2 * np.eye(w)).T, big_r.T).T
    return np.einsum("uv,svj->suj", filt, x)


def mmse_pdp_estimate(
    ls: CfrTensor,
    noise_var: float | None,
    mask=None,
    window: int = 32,
    threshold_factor: float = 3.0,
) -> CfrTensor:
    """Denoise LS estimates with a Wiener filter built from the estimated PDP.

    Per contiguous unmasked pilot run: take the IDFT of each sliding window
    (50% overlap), zero delay taps below the noise floor, rebuild the
    frequency autocorrelation from the surviving taps and apply
    W = R (R + noise_var I)^-1. Overlapping window outputs are averaged.
    ``noise_var=None`` estimates the floor per window from the
    below-threshold taps (threshold = threshold_factor x median tap power);
    with a known noise variance the threshold is threshold_factor times the
    per-bin noise level.
    """
    if noise_var is not None and noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    m = _full_mask(ls.grid, mask)
    runs = _unmasked_runs(m)
    n_sym, n_p, n_ant = ls.values.shape
    out = np.zeros_like(ls.values, dtype=complex)
    counts = np.zeros(n_p)
    hop = max(window // 2, 1)
    for a, b in runs:
        if b - a < window:
            raise ValueError(
                f"window {window} exceeds unmasked pilot run of length {b - a}"
            )
        starts = list(range(a, b - window + 1, hop))
        if starts[-1] != b - window:
            starts.append(b - window)
        for s in starts:
            counts[s : s + window] += 1
            x = ls.values[:, s : s + window, :].astype(complex)
            out[:, s : s + window, :] += _wiener_window(x, noise_var, threshold_factor)
    nz = counts > 0
    out[:, nz, :] /= counts[nz][None, :, None]
    return ls.with_values(out)


def interpolate_freq(pilot_estimates: CfrTensor, grid: CarrierGrid | None = None, mask=None,
                     method: str = "LS") -> FullGridEstimate:
    """Linearly interpolate pilot estimates onto every allocated subcarrier.

    Each contiguous unmasked pilot run is interpolated independently; the
    subcarriers of a run beyond its last pilot hold the nearest pilot value.
    Subcarriers whose covering pilot is masked out stay zero and unoccupied.
    """
    grid = grid or pilot_estimates.grid
    m = _full_mask(grid, mask)
    runs = _unmasked_runs(m)
    n_sym, _, n_ant = pilot_estimates.values.shape
    n_sc = grid.n_subcarriers
    comb = grid.comb
    values = np.zeros((n_sym, n_sc, n_ant), dtype=complex)
    occupancy = np.zeros(n_sc, dtype=np.uint8)
    for a, b in runs:
        if b - a < 2:
            raise ValueError(f"pilot run [{a}, {b}) too short to interpolate (need >= 2)")
        sc = np.arange(a * comb, b * comb)  # subcarriers covered by this run's pilots
        xp = np.arange(a, b) * comb
        occupancy[sc] = 1
        for i in range(n_sym):
            for j in range(n_ant):
                fp = pilot_estimates.values[i, a:b, j]
                values[i, sc, j] = (
                    np.interp(sc, xp, fp.real) + 1j * np.interp(sc, xp, fp.imag)
                )
    return FullGridEstimate(values=values, occupancy=occupancy, method=method, grid=grid)


# ---------------------------------------------------------------------------
# Staged pipeline


@dataclass(frozen=True)
class PipelineDetails:
    """Intermediate quantities from a pipeline run, for diagnostics."""

    offsets: OffsetEstimate
    scale: float
    ls_power: float


def _stage3(
    method: str,
    x: CfrTensor,
    mask,
    snr_db: float | None,
    model,
    window: int,
):
    if method == "LS":
        return x
    if method == "MMSE":
        if snr_db is None or (snr_db is not None and np.isnan(snr_db)):
            noise_var = None
        elif np.isinf(snr_db):
            noise_var = 0.0
        else:
            # Input is normalized to unit RMS, so signal-plus-noise power is 1
            # and the noise share is s/(1+s) with s = 10^(-snr/10).
            s = 10.0 ** (-snr_db / 10.0)
            noise_var = s / (1.0 + s)
        return mmse_pdp_estimate(x, noise_var, mask=mask, window=window)
    if method == "AI":
        from . import nn

        packed = nn.pack_input(x)
        return nn.unpack_output(nn.infer(model, packed), x.grid)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def run_pipeline(
    record,
    method: str,
    model=None,
    window: int = 32,
    return_details: bool = False,
):
    """Run the staged receive pipeline on one dataset record.

    Stage 1 extracts LS estimates (records store LS-domain observations, so
    extraction uses unit pilots), repairs leakage-distorted pilots and
    estimates the timing offset. Stage 2 removes the estimated offset and
    normalizes. Stage 3 denoises per ``method`` (identity for LS, PDP-MMSE
    for MMSE, CNN inference for AI). Stage 4 re-applies the offset, restores
    the scale, and interpolates onto the full subcarrier grid.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "AI" and model is None:
        raise ValueError("method 'AI' requires a model")
    mask = record.mask
    grid = record.ls_obs.grid

    # Stage 1
    ls = ls_extract(record.ls_obs, pilot_seq=None, mask=mask)
    repaired = repair_dc(ls.values, record.draw.dc_indices, mask=mask)
    to_metric, to_s = estimate_to(repaired, mask=mask)
    if grid.n_dmrs_symbols >= 2:
        cfo_metric, cfo_hz = estimate_cfo(repaired, 0, grid.n_dmrs_symbols - 1, mask=mask)
    else:
        cfo_metric, cfo_hz = 0j, 0.0
    offsets = OffsetEstimate(to_metric=to_metric, to_s=to_s, cfo_metric=cfo_metric, cfo_hz=cfo_hz)

    # Stage 2
    comp = compensate_to(repaired, to_s, "forward")
    normed, scale = normalize(comp, mask=mask)

    # Stage 3
    snr = getattr(record, "snr_db", None)
    denoised = _stage3(method, normed, mask, snr, model, window)

    # Stage 4
    restored = denormalize(denoised, scale, mask=mask)
    uncomp = compensate_to(restored, to_s, "inverse")
    full = interpolate_freq(uncomp, grid, mask=mask, method=method)
    if return_details:
        return full, PipelineDetails(offsets=offsets, scale=scale, ls_power=ls.power)
    return full
