"""Record synthesis: fading channel -> impairment chain -> dataset records.

The stored ground truth keeps the deterministic hardware response (RX
filter, per-antenna scaling) and excludes offsets, leakage and noise; the
observation applies the full chain. ``received_truth`` reconstructs the
channel as actually seen at the receiver input (truth with the record's
true offsets re-applied), which is the reference for accuracy metrics.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .channel import CarrierGrid, CfrTensor, TdlProfile, SYMBOLS_PER_SLOT, cfr_at, gen_channel
from .dataset import DatasetRecord, make_record
from .impairments import (
    ImpairmentConfig,
    ImpairmentDraw,
    _apply_antenna_scaling_lin,
    _NOISE_TAG,
    add_awgn,
    apply_cfo,
    apply_dc_leakage,
    apply_rx_filter,
    apply_timing_offset,
    sample_impairments,
)

_CHANNEL_TAG = 0x11
_DRAW_TAG = 0x22


@dataclass(frozen=True)
class GeneratorSpec:
    """Everything needed to synthesize records deterministically from a seed."""

    grid: CarrierGrid
    profile: TdlProfile
    impairments: ImpairmentConfig


def _impair(truth: CfrTensor, draw: ImpairmentDraw, config: ImpairmentConfig) -> CfrTensor:
    """Stochastic part of the chain (deterministic stages already in truth)."""
    t = config.toggles
    out = truth
    if t.to:
        out = apply_timing_offset(out, draw.to_s)
    if t.cfo:
        out = apply_cfo(out, draw.cfo_hz)
    if t.dc and draw.dc_indices:
        out = apply_dc_leakage(out, draw.dc_indices, draw.dc_leak)
    if t.awgn:
        out = add_awgn(out, draw.snr_db, np.random.SeedSequence((draw.seed, _NOISE_TAG)))
    return out


def synthesize_record(spec: GeneratorSpec, seed: int, base_truth: CfrTensor | None = None) -> DatasetRecord:
    """Produce one record; ``base_truth`` substitutes an imported channel."""
    grid = spec.grid
    if base_truth is None:
        realization = gen_channel(
            spec.profile, grid, SYMBOLS_PER_SLOT, np.random.SeedSequence((seed, _CHANNEL_TAG))
        )
        raw = cfr_at(realization, grid)
    else:
        raw = base_truth
    cfg = spec.impairments
    draw = sample_impairments(cfg, seed)
    draw = replace(draw, seed=int(seed))
    truth = raw
    if cfg.toggles.rx_filter:
        truth = apply_rx_filter(truth, cfg.filter_for(grid))
    if cfg.toggles.ant_scale:
        truth = _apply_antenna_scaling_lin(truth, draw.ant_gains_lin)
    obs = _impair(truth, draw, cfg)
    return make_record(ls_obs=obs, truth=truth, mask=None, snr_db=draw.snr_db, draw=draw)


def _record_seed(root_seed: int, index: int) -> int:
    # Counter-based splitting: one child stream per record index.
    return int(np.random.SeedSequence((int(root_seed), _DRAW_TAG, int(index))).generate_state(1)[0])


def generate_records(
    spec: GeneratorSpec,
    n_records: int,
    root_seed: int,
    threads: int = 1,
    base_truths: list[CfrTensor] | None = None,
) -> list[DatasetRecord]:
    """Generate records with per-record seeds derived from the root seed.

    With ``base_truths``, record i re-impairs the i-th imported channel
    (cycled if fewer truths than records). Output order is by index, so the
    result is independent of the worker count.
    """
    if n_records < 1:
        raise ValueError("n_records must be >= 1")

    def build(i: int) -> DatasetRecord:
        base = None
        if base_truths is not None:
            base = base_truths[i % len(base_truths)]
        return synthesize_record(spec, _record_seed(root_seed, i), base_truth=base)

    if threads <= 1:
        return [build(i) for i in range(n_records)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(build, range(n_records)))


def received_truth(record: DatasetRecord) -> CfrTensor:
    """Channel as seen at the receiver input: stored truth with the record's
    true timing and frequency offsets re-applied (no leakage, no noise)."""
    out = record.truth
    out = apply_timing_offset(out, record.draw.to_s)
    out = apply_cfo(out, record.draw.cfo_hz)
    return out
