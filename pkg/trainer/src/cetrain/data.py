"""Dataset-file reader and training-sample preparation.

Reads the workbench dataset format (magic "S2FD"): a JSON header with the
carrier grid, then per record a pilot mask, the observed and ground-truth
tensors (complex64, symbol-major) and a JSON impairment draw.

Sample preparation mirrors the receive pipeline's pre-processing except for
offset compensation: leakage-distorted pilots are repaired and the tensor
is scaled to unit RMS, but timing/frequency offsets stay in the data so the
model learns to denoise in their presence. The regression target is the
channel as received (truth with the record's true offsets re-applied) under
the same scaling.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

DATASET_MAGIC = b"S2FD"
DATASET_VERSION = 1
SUBCARRIERS_PER_PRB = 12


@dataclass(frozen=True)
class GridInfo:
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
    def n_sym(self) -> int:
        return len(self.dmrs_symbols)

    @property
    def pilots_per_prb(self) -> int:
        return SUBCARRIERS_PER_PRB // self.comb

    @property
    def pilot_freqs_hz(self) -> np.ndarray:
        return np.arange(self.n_pilots) * self.comb * self.scs_hz

    @property
    def dmrs_times_s(self) -> np.ndarray:
        return np.asarray(self.dmrs_symbols, dtype=float) * self.symbol_duration_s


@dataclass(frozen=True)
class Record:
    ls_obs: np.ndarray  # (n_sym, n_p, n_ant) complex64
    truth: np.ndarray
    mask: np.ndarray  # (n_p,) uint8
    snr_db: float
    to_s: float
    cfo_hz: float
    dc_indices: tuple[int, ...]


def read_dataset(path) -> tuple[GridInfo, list[Record]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != DATASET_MAGIC:
        raise ValueError(f"{path}: bad magic (expected {DATASET_MAGIC!r})")
    version, head_len = struct.unpack_from("<II", blob, 4)
    if version != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset version {version}")
    head = json.loads(blob[12 : 12 + head_len].decode("utf-8"))
    gobj = head["grid"]
    grid = GridInfo(
        n_prb=int(gobj["n_prb"]),
        scs_hz=float(gobj["scs_hz"]),
        comb=int(gobj["comb"]),
        dmrs_symbols=tuple(int(s) for s in gobj["dmrs_symbols"]),
        n_ant=int(gobj["n_ant"]),
        symbol_duration_s=float(gobj["symbol_duration_s"]),
    )
    n_sym, n_p, n_ant = grid.n_sym, grid.n_pilots, grid.n_ant
    tensor_bytes = 8 * n_sym * n_p * n_ant
    offset = 12 + head_len
    records = []
    for i in range(int(head["n_records"])):
        if offset + n_p + 2 * tensor_bytes + 4 > len(blob):
            raise ValueError(f"{path}: truncated at record {i}")
        mask = np.frombuffer(blob, dtype=np.uint8, count=n_p, offset=offset).copy()
        offset += n_p
        obs = np.frombuffer(blob, dtype="<c8", count=n_sym * n_p * n_ant, offset=offset)
        offset += tensor_bytes
        truth = np.frombuffer(blob, dtype="<c8", count=n_sym * n_p * n_ant, offset=offset)
        offset += tensor_bytes
        (draw_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        draw = json.loads(blob[offset : offset + draw_len].decode("utf-8"))
        offset += draw_len
        snr = draw.get("snr_db")
        records.append(
            Record(
                ls_obs=obs.reshape(n_sym, n_p, n_ant).copy(),
                truth=truth.reshape(n_sym, n_p, n_ant).copy(),
                mask=mask,
                snr_db=np.inf if snr is None else float(snr),
                to_s=float(draw["to_s"]),
                cfo_hz=float(draw["cfo_hz"]),
                dc_indices=tuple(int(k) for k in draw["dc_indices"]),
            )
        )
    return grid, records


@dataclass(frozen=True)
class MaskPolicy:
    """Random zeroing of resource-block-aligned pilot ranges.

    With probability ``zero_prob`` per sample, a contiguous range of
    ``min_rb``..``max_rb`` resource blocks is zeroed in the observation and
    cleared in the mask, emulating partial allocations.
    """

    zero_prob: float = 0.0
    min_rb: int = 1
    max_rb: int = 4

    def __post_init__(self):
        if not 0.0 <= self.zero_prob <= 1.0:
            raise ValueError("zero_prob must be in [0, 1]")
        if self.min_rb < 1 or self.max_rb < self.min_rb:
            raise ValueError("bad RB range bounds")


def mask_rb_ranges(
    obs: np.ndarray, mask: np.ndarray, policy: MaskPolicy, pilots_per_rb: int, seed,
) -> tuple[np.ndarray, np.ndarray]:
    """Apply the zeroing policy; returns (new_obs, new_mask). Deterministic
    in the seed; zeroed spans are aligned to resource-block boundaries."""
    n_p = obs.shape[1]
    if n_p % pilots_per_rb != 0:
        raise ValueError(
            f"pilot axis ({n_p}) is not divisible by pilots per RB ({pilots_per_rb})"
        )
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    obs = obs.copy()
    mask = mask.copy()
    if policy.zero_prob <= 0.0 or rng.uniform() >= policy.zero_prob:
        return obs, mask
    n_rb = n_p // pilots_per_rb
    span = int(rng.integers(policy.min_rb, min(policy.max_rb, n_rb - 1) + 1))
    start_rb = int(rng.integers(0, n_rb - span + 1))
    lo, hi = start_rb * pilots_per_rb, (start_rb + span) * pilots_per_rb
    obs[:, lo:hi, :] = 0
    mask[lo:hi] = 0
    return obs, mask


def repair_dc(obs: np.ndarray, dc_indices, mask: np.ndarray) -> np.ndarray:
    """Replace distorted pilots with the mean of their clean neighbors."""
    out = obs.copy()
    if not dc_indices:
        return out
    n_p = obs.shape[1]
    distorted = set(int(k) for k in dc_indices)
    for k in dc_indices:
        if not mask[k]:
            continue
        neighbors = [
            obs[:, nb, :]
            for nb in (k - 1, k + 1)
            if 0 <= nb < n_p and mask[nb] and nb not in distorted
        ]
        if neighbors:
            out[:, k, :] = np.mean(neighbors, axis=0)
    return out


def received_truth(record: Record, grid: GridInfo) -> np.ndarray:
    """Ground truth as seen at the receiver: stored truth with the record's
    true timing and frequency offsets re-applied."""
    ramp = np.exp(-2j * np.pi * grid.pilot_freqs_hz * record.to_s)
    rot = np.exp(2j * np.pi * record.cfo_hz * grid.dmrs_times_s)
    return record.truth * ramp[None, :, None] * rot[:, None, None]


def pack_complex(values: np.ndarray) -> np.ndarray:
    """(n_sym, n_p, n_ant) complex -> (2 n_sym, n_p, n_ant) float32 with
    interleaved real/imag channels."""
    n_sym, n_p, n_ant = values.shape
    out = np.empty((2 * n_sym, n_p, n_ant), dtype=np.float32)
    out[0::2] = values.real
    out[1::2] = values.imag
    return out


def prepare_sample(
    record: Record, grid: GridInfo, policy: MaskPolicy | None, seed,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Build one (input, target, channel_mask) training triple as float32.

    Input: optionally range-masked observation, leakage-repaired and scaled
    to unit RMS over occupied pilots. Target: as-received truth under the
    same scale. The returned mask is per-pilot occupancy after masking.
    """
    obs, mask = record.ls_obs, record.mask
    if policy is not None:
        obs, mask = mask_rb_ranges(obs, mask, policy, grid.pilots_per_prb, seed)
    obs = repair_dc(obs, record.dc_indices, mask)
    occupied = mask.astype(bool)
    rms = float(np.sqrt(np.mean(np.abs(obs[:, occupied, :]) ** 2)))
    if rms <= 0:
        raise ValueError("record has an all-zero observation")
    target = received_truth(record, grid)
    x = obs / rms
    x[:, ~occupied, :] = 0
    y = target / rms
    return pack_complex(x), pack_complex(y), mask.astype(np.float32)
