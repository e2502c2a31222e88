"""On-disk dataset of paired (impaired observation, ground truth, mask)
records, plus CSV import of externally generated channel responses and
deterministic splitting.

File layout: magic "S2FD", u32 version, u32 JSON-header length, UTF-8 JSON
header, then records. Each record is the pilot mask (N_p bytes), the
observation and truth tensors (complex64 little-endian, symbol-major then
subcarrier then antenna), and a length-prefixed JSON impairment draw.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .channel import CarrierGrid, CfrTensor
from .impairments import ImpairmentDraw

DATASET_MAGIC = b"S2FD"
DATASET_VERSION = 1


class DatasetFormatError(ValueError):
    """Raised for structurally invalid dataset files."""


class CsvParseError(ValueError):
    """Raised for malformed external-channel CSV input."""


@dataclass(frozen=True)
class DatasetRecord:
    """One training/evaluation sample.

    ``truth`` is the channel including the deterministic hardware response
    (RX filter, antenna scaling) but excluding offsets, leakage and noise;
    ``ls_obs`` is the fully impaired LS-domain observation. Masked-out
    pilots of ls_obs are exactly zero.
    """

    ls_obs: CfrTensor
    truth: CfrTensor
    mask: np.ndarray  # (N_p,) uint8
    snr_db: float
    draw: ImpairmentDraw

    def __post_init__(self):
        n_p = self.ls_obs.grid.n_pilots
        if self.mask.shape != (n_p,):
            raise ValueError(f"mask shape {self.mask.shape} does not match N_p={n_p}")
        if self.truth.values.shape != self.ls_obs.values.shape:
            raise ValueError("observation and truth shapes differ")
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ValueError("mask entries must be 0 or 1")
        off = self.mask == 0
        if np.any(self.ls_obs.values[:, off, :] != 0):
            raise ValueError("masked-out observation entries must be zero")


def make_record(
    ls_obs: CfrTensor, truth: CfrTensor, mask: np.ndarray | None, snr_db: float,
    draw: ImpairmentDraw,
) -> DatasetRecord:
    """Build a record, casting tensors to the storage dtype and zeroing
    masked observation entries."""
    grid = ls_obs.grid
    if mask is None:
        mask = np.ones(grid.n_pilots, dtype=np.uint8)
    mask = np.asarray(mask, dtype=np.uint8)
    obs = ls_obs.values.astype(np.complex64)
    obs[:, mask == 0, :] = 0
    return DatasetRecord(
        ls_obs=CfrTensor(values=obs, grid=grid),
        truth=CfrTensor(values=truth.values.astype(np.complex64), grid=grid),
        mask=mask,
        snr_db=float(snr_db),
        draw=draw,
    )


@dataclass(frozen=True)
class DatasetHeader:
    version: int
    grid: CarrierGrid
    toggles: dict
    n_records: int
    seed: int

    def to_json(self) -> dict:
        return {
            "grid": self.grid.to_json(),
            "toggles": self.toggles,
            "n_records": self.n_records,
            "seed": self.seed,
        }


def write_dataset(records: list[DatasetRecord], path, toggles: dict | None = None,
                  seed: int = 0) -> int:
    """Serialize records; returns the byte count written (atomically)."""
    if not records:
        raise ValueError("cannot write an empty dataset")
    grid = records[0].ls_obs.grid
    shape = records[0].ls_obs.values.shape
    for i, rec in enumerate(records):
        if rec.ls_obs.values.shape != shape or rec.ls_obs.grid != grid:
            raise ValueError(f"record {i} has mismatched shape or grid")
    header = DatasetHeader(
        version=DATASET_VERSION, grid=grid, toggles=toggles or {},
        n_records=len(records), seed=seed,
    )
    head_json = json.dumps(header.to_json(), sort_keys=True).encode("utf-8")
    chunks = [DATASET_MAGIC, struct.pack("<II", DATASET_VERSION, len(head_json)), head_json]
    for rec in records:
        chunks.append(rec.mask.astype(np.uint8).tobytes())
        chunks.append(np.ascontiguousarray(rec.ls_obs.values, dtype="<c8").tobytes())
        chunks.append(np.ascontiguousarray(rec.truth.values, dtype="<c8").tobytes())
        draw_json = json.dumps(rec.draw.to_json(), sort_keys=True).encode("utf-8")
        chunks.append(struct.pack("<I", len(draw_json)))
        chunks.append(draw_json)
    blob = b"".join(chunks)
    _atomic_write(path, blob)
    return len(blob)


def _atomic_write(path, blob: bytes) -> None:
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_dataset(path) -> tuple[DatasetHeader, list[DatasetRecord]]:
    """Read and validate a dataset file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic (expected {DATASET_MAGIC!r})")
    version, head_len = struct.unpack_from("<II", blob, 4)
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    if len(blob) < 12 + head_len:
        raise DatasetFormatError(f"{path}: truncated header")
    try:
        head = json.loads(blob[12 : 12 + head_len].decode("utf-8"))
        grid = CarrierGrid.from_json(head["grid"])
    except (KeyError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: invalid header: {exc}")
    header = DatasetHeader(
        version=version, grid=grid, toggles=head.get("toggles", {}),
        n_records=int(head["n_records"]), seed=int(head.get("seed", 0)),
    )
    n_sym, n_p, n_ant = grid.n_dmrs_symbols, grid.n_pilots, grid.n_ant
    tensor_bytes = 8 * n_sym * n_p * n_ant
    offset = 12 + head_len
    records: list[DatasetRecord] = []
    for i in range(header.n_records):
        need = n_p + 2 * tensor_bytes + 4
        if offset + need > len(blob):
            raise DatasetFormatError(
                f"{path}: truncated payload (header says {header.n_records} records, "
                f"record {i} incomplete)"
            )
        mask = np.frombuffer(blob, dtype=np.uint8, count=n_p, offset=offset).copy()
        offset += n_p
        obs = np.frombuffer(blob, dtype="<c8", count=n_sym * n_p * n_ant, offset=offset)
        offset += tensor_bytes
        truth = np.frombuffer(blob, dtype="<c8", count=n_sym * n_p * n_ant, offset=offset)
        offset += tensor_bytes
        (draw_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        if offset + draw_len > len(blob):
            raise DatasetFormatError(f"{path}: truncated draw JSON in record {i}")
        try:
            draw = ImpairmentDraw.from_json(
                json.loads(blob[offset : offset + draw_len].decode("utf-8"))
            )
        except (KeyError, ValueError) as exc:
            raise DatasetFormatError(f"{path}: invalid draw JSON in record {i}: {exc}")
        offset += draw_len
        shape = (n_sym, n_p, n_ant)
        records.append(
            DatasetRecord(
                ls_obs=CfrTensor(values=obs.reshape(shape).copy(), grid=grid),
                truth=CfrTensor(values=truth.reshape(shape).copy(), grid=grid),
                mask=mask,
                snr_db=draw.snr_db,
                draw=draw,
            )
        )
    if offset != len(blob):
        raise DatasetFormatError(
            f"{path}: {len(blob) - offset} trailing bytes after {header.n_records} records"
        )
    return header, records


def import_external_cfr(path, grid: CarrierGrid) -> list[DatasetRecord]:
    """Import channel responses from CSV into truth-only records.

    Each row is one (symbol, antenna) slice: 2*N_p cells of interleaved
    re,im values. Rows are ordered symbol-major then antenna, and every
    group of N_sym*N_ant rows forms one record. The observation stays zero
    until an impairment pass fills it.
    """
    n_sym, n_p, n_ant = grid.n_dmrs_symbols, grid.n_pilots, grid.n_ant
    rows: list[np.ndarray] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2 * n_p:
                raise CsvParseError(
                    f"{path}: row {r + 1} has {len(row)} cells, expected {2 * n_p}"
                )
            try:
                vals = np.asarray([float(c) for c in row], dtype=np.float32)
            except ValueError:
                for c, cell in enumerate(row):
                    try:
                        float(cell)
                    except ValueError:
                        raise CsvParseError(
                            f"{path}: non-numeric cell {cell!r} at row {r + 1}, column {c + 1}"
                        )
                raise
            rows.append(vals[0::2] + 1j * vals[1::2])
    per_record = n_sym * n_ant
    if not rows or len(rows) % per_record != 0:
        raise CsvParseError(
            f"{path}: {len(rows)} data rows is not a positive multiple of "
            f"N_sym*N_ant = {per_record}"
        )
    records = []
    for g in range(len(rows) // per_record):
        truth = np.empty((n_sym, n_p, n_ant), dtype=np.complex64)
        for i in range(n_sym):
            for j in range(n_ant):
                truth[i, :, j] = rows[g * per_record + i * n_ant + j]
        zeros = CfrTensor(values=np.zeros_like(truth), grid=grid)
        records.append(
            make_record(
                ls_obs=zeros, truth=CfrTensor(values=truth, grid=grid),
                mask=None, snr_db=np.inf, draw=ImpairmentDraw.identity(n_ant),
            )
        )
    return records


def split(records: list[DatasetRecord], fractions, seed) -> list[list[DatasetRecord]]:
    """Deterministically shuffle and partition records by fractions.

    Fractions must be positive and sum to 1; partitions are disjoint and
    exhaustive (sizes from cumulative rounding).
    """
    fracs = np.asarray(fractions, dtype=float)
    if fracs.size == 0 or np.any(fracs <= 0):
        raise ValueError("fractions must be positive")
    if abs(fracs.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fracs.sum()}")
    n = len(records)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    perm = rng.permutation(n)
    bounds = np.round(np.cumsum(fracs) * n).astype(int)
    bounds[-1] = n
    parts = []
    start = 0
    for stop in bounds:
        parts.append([records[i] for i in perm[start:stop]])
        start = stop
    return parts
