"""Accuracy metrics (NMSE, uncoded-QPSK SER) and the evaluation harnesses:
SNR sweeps comparing estimators and the impairment-ablation table.

Estimates are compared against the channel as received (stored truth with
the record's true offsets re-applied), so offset-estimation error shows up
as estimation error rather than as a systematic domain mismatch.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .channel import CfrTensor, _rng
from .dataset import DatasetRecord
from .estimators import FullGridEstimate, interpolate_freq, run_pipeline
from .generate import GeneratorSpec, generate_records, received_truth
from .impairments import ImpairmentToggles

NMSE_FLOOR_DB = -150.0
_SER_TAG = 0x5E

# Reference accuracy figures from a full-scale hardware testbed campaign,
# kept for annotating desk-scale ablation reports. NMSE in dB per SNR for
# each training configuration, plus the worst-case accuracy impact of
# disabling each impairment model during training.
REFERENCE_ABLATION_NMSE_DB = {
    "All": {-10: -10.35, -5: -15.49, 0: -20.18, 5: -24.40, 10: -27.50, 15: -29.25, 20: -30.05},
    "TO Off": {-10: -9.56, -5: -14.98, 0: -19.95, 5: -24.15, 10: -27.10, 15: -28.67, 20: -29.32},
    "Filt. Off": {-10: -10.31, -5: -15.32, 0: -20.00, 5: -24.18, 10: -27.27, 15: -28.99, 20: -29.72},
    "Scaling Off": {-10: -9.70, -5: -15.31, 0: -20.06, 5: -24.25, 10: -27.23, 15: -28.80, 20: -29.43},
}
REFERENCE_MAX_IMPACT_DB = {"TO Off": 0.79, "Filt. Off": 0.33, "Scaling Off": 0.65}

ABLATION_CASE_NAMES = ("All", "TO Off", "Filt. Off", "Scaling Off")


def nmse_linear(est: np.ndarray, truth: np.ndarray, where=None) -> float:
    """Error energy over signal energy on the selected entries."""
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    if where is None:
        e, t = est, truth
    else:
        e, t = est[where], truth[where]
    sig = float(np.sum(np.abs(t) ** 2, dtype=np.float64))
    if sig <= 0:
        raise ValueError("zero-energy truth")
    err = float(np.sum(np.abs(e - t) ** 2, dtype=np.float64))
    return err / sig


def nmse_db(est, truth, mask=None) -> float:
    """NMSE in dB, floored at -150 dB.

    Accepts either plain arrays or (FullGridEstimate, pilot-domain CfrTensor)
    pairs; the latter compares at occupied pilot subcarriers only.
    """
    if isinstance(est, FullGridEstimate) and isinstance(truth, CfrTensor):
        est_vals = est.at_pilots()
        truth_vals = truth.values
        m = np.ones(truth.grid.n_pilots, dtype=bool) if mask is None else np.asarray(mask, bool)
        where = (slice(None), m, slice(None))
        lin = nmse_linear(est_vals, truth_vals, where=where)
    else:
        lin = nmse_linear(np.asarray(est), np.asarray(truth), where=mask)
    if lin <= 0:
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(lin), NMSE_FLOOR_DB)


@dataclass(frozen=True)
class SerResult:
    errors: int
    symbols: int
    erasures: int

    @property
    def ser(self) -> float:
        return self.errors / self.symbols if self.symbols else 0.0


def ser_link(
    est: FullGridEstimate, truth: FullGridEstimate, snr_db: float, seed
) -> SerResult:
    """Uncoded QPSK link proxy over the data (non-pilot) subcarriers.

    Random QPSK symbols pass through the true channel plus AWGN at the given
    Es/N0 per antenna; detection maximum-ratio combines the receive antennas
    using the estimate. A zero-magnitude estimate at a data subcarrier is
    counted as an erasure (and an error).
    """
    if est.values.shape != truth.values.shape:
        raise ValueError("estimate and truth cover different grids")
    grid = est.grid
    sc = np.arange(grid.n_subcarriers)
    data_mask = (sc % grid.comb != 0) & est.occupancy.astype(bool) & truth.occupancy.astype(bool)
    n_data = int(data_mask.sum())
    if n_data == 0:
        return SerResult(errors=0, symbols=0, erasures=0)
    rng = _rng(seed)
    n_sym = grid.n_dmrs_symbols
    bits = rng.integers(0, 2, size=(2, n_sym, n_data))
    tx = ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) / np.sqrt(2.0)

    h = truth.values[:, data_mask, :]  # (n_sym, n_data, n_ant)
    rx = h * tx[:, :, None]
    if not np.isinf(snr_db):
        n0 = 10.0 ** (-snr_db / 10.0)  # Es = 1 by construction
        noise = np.sqrt(n0 / 2.0) * (
            rng.standard_normal(rx.shape) + 1j * rng.standard_normal(rx.shape)
        )
        rx = rx + noise

    g = est.values[:, data_mask, :]
    denom = np.sum(np.abs(g) ** 2, axis=2)
    combined = np.sum(np.conj(g) * rx, axis=2)
    erasure = denom < 1e-30
    z = np.where(erasure, 0.0, combined / np.where(erasure, 1.0, denom))
    detected_errs = (np.sign(z.real) != np.sign(tx.real)) | (np.sign(z.imag) != np.sign(tx.imag))
    errors = int(np.sum(detected_errs | erasure))
    return SerResult(errors=errors, symbols=tx.size, erasures=int(erasure.sum()))


# ---------------------------------------------------------------------------
# SNR sweeps


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    method: str
    nmse_db: float
    ser: float
    n_records: int
    seed: int


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["snr_db", "method", "nmse_db", "ser", "n_records", "seed"])
        for r in self.rows:
            writer.writerow(
                [f"{r.snr_db:g}", r.method, f"{r.nmse_db:.6f}", f"{r.ser:.8f}",
                 r.n_records, r.seed]
            )
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _eval_record(record: DatasetRecord, method: str, model, seed: int):
    est = run_pipeline(record, method, model=model)
    ref = received_truth(record)
    lin = nmse_linear(
        est.at_pilots(), ref.values,
        where=(slice(None), record.mask.astype(bool), slice(None)),
    )
    ref_full = interpolate_freq(ref, record.ls_obs.grid, mask=record.mask, method="truth")
    ser = ser_link(est, ref_full, record.snr_db, np.random.SeedSequence((seed, _SER_TAG)))
    return lin, ser


def _aggregate(
    records: list[DatasetRecord], method: str, model, snr_db: float, seed: int,
    threads: int = 1,
) -> SweepRow:
    def work(item):
        i, rec = item
        return _eval_record(rec, method, model, seed + i)

    items = list(enumerate(records))
    if threads <= 1:
        results = [work(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, items))
    mean_lin = float(np.mean([lin for lin, _ in results], dtype=np.float64))
    errors = sum(s.errors for _, s in results)
    symbols = sum(s.symbols for _, s in results)
    mean_db = max(10.0 * np.log10(mean_lin), NMSE_FLOOR_DB) if mean_lin > 0 else NMSE_FLOOR_DB
    return SweepRow(
        snr_db=snr_db, method=method, nmse_db=mean_db,
        ser=errors / symbols if symbols else 0.0,
        n_records=len(records), seed=seed,
    )


def snr_sweep(
    spec: GeneratorSpec,
    methods,
    snr_grid_db,
    n_records: int,
    seed: int,
    model=None,
    threads: int = 1,
) -> SweepReport:
    """Mean NMSE and SER per (SNR, method) over freshly generated records.

    Records are regenerated per SNR point with the AWGN level pinned there;
    the report is deterministic in the root seed.
    """
    snrs = list(snr_grid_db)
    methods = list(methods)
    if not snrs:
        raise ValueError("empty SNR grid")
    if not methods:
        raise ValueError("empty method list")
    if "AI" in methods and model is None:
        raise ValueError("method 'AI' requires a model")
    rows = []
    for si, snr in enumerate(snrs):
        cfg = replace(
            spec.impairments,
            snr_grid_db=(float(snr),),
            toggles=replace(spec.impairments.toggles, awgn=True),
        )
        point_spec = GeneratorSpec(grid=spec.grid, profile=spec.profile, impairments=cfg)
        records = generate_records(point_spec, n_records, root_seed=seed + 1000 * si,
                                   threads=threads)
        for method in methods:
            rows.append(
                _aggregate(records, method, model if method == "AI" else None,
                           float(snr), seed=seed + 1000 * si, threads=threads)
            )
    return SweepReport(rows=tuple(rows))


def sweep_dataset(
    records: list[DatasetRecord], methods, seed: int, model=None, threads: int = 1,
) -> SweepReport:
    """Sweep over a stored dataset, grouping records by their SNR label."""
    methods = list(methods)
    if not methods:
        raise ValueError("empty method list")
    if "AI" in methods and model is None:
        raise ValueError("method 'AI' requires a model")
    groups: dict[float, list[DatasetRecord]] = {}
    for rec in records:
        groups.setdefault(float(rec.snr_db), []).append(rec)
    rows = []
    for snr in sorted(groups):
        for method in methods:
            rows.append(
                _aggregate(groups[snr], method, model if method == "AI" else None,
                           snr, seed=seed, threads=threads)
            )
    return SweepReport(rows=tuple(rows))


# ---------------------------------------------------------------------------
# Impairment ablation


@dataclass(frozen=True)
class AblationCase:
    """A training configuration under test; the test set always has every
    impairment enabled, so ``train_overrides`` is metadata describing how
    the case's model was trained."""

    name: str
    train_overrides: dict

    def __post_init__(self):
        if self.name not in ABLATION_CASE_NAMES:
            raise ValueError(
                f"unknown ablation case {self.name!r}; expected one of {ABLATION_CASE_NAMES}"
            )


def default_ablation_cases() -> list[AblationCase]:
    return [
        AblationCase("All", {}),
        AblationCase("TO Off", {"to": False}),
        AblationCase("Filt. Off", {"rx_filter": False}),
        AblationCase("Scaling Off", {"ant_scale": False}),
    ]


@dataclass(frozen=True)
class AblationEntry:
    case: str
    snr_db: float
    nmse_db: float
    n_records: int


@dataclass(frozen=True)
class AblationTable:
    entries: tuple[AblationEntry, ...]
    max_impact_db: dict  # case name -> max over SNRs of (case NMSE - "All" NMSE)
    seed: int

    @property
    def rows(self) -> list:
        """Per-(case, SNR) entries plus the final max-impact row."""
        return list(self.entries) + [("Max. Impact", self.max_impact_db)]

    def to_csv(self, path=None, annotate_reference: bool = False) -> str:
        """Wide-format table: one column per case, one row per SNR, and a
        closing Max. Impact row."""
        cases = []
        for e in self.entries:
            if e.case not in cases:
                cases.append(e.case)
        snrs = []
        for e in self.entries:
            if e.snr_db not in snrs:
                snrs.append(e.snr_db)
        lookup = {(e.case, e.snr_db): e.nmse_db for e in self.entries}
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["snr_db"] + cases)
        for snr in snrs:
            writer.writerow([f"{snr:g}"] + [f"{lookup[(c, snr)]:.2f}" for c in cases])
        writer.writerow(
            ["Max. Impact"]
            + ["N/A" if c == "All" else f"{self.max_impact_db[c]:.2f}" for c in cases]
        )
        if annotate_reference:
            writer.writerow([])
            writer.writerow(["# reference (full-scale testbed)"])
            writer.writerow(["snr_db"] + cases)
            for snr in sorted(REFERENCE_ABLATION_NMSE_DB["All"]):
                writer.writerow(
                    [f"{snr:g}"]
                    + [f"{REFERENCE_ABLATION_NMSE_DB[c][snr]:.2f}" for c in cases
                       if c in REFERENCE_ABLATION_NMSE_DB]
                )
            writer.writerow(
                ["Max. Impact"]
                + ["N/A" if c == "All" else f"{REFERENCE_MAX_IMPACT_DB[c]:.2f}" for c in cases]
            )
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def ablation_run(
    cases: list[AblationCase],
    snr_grid_db,
    spec: GeneratorSpec,
    models: dict,
    n_records: int,
    seed: int,
    threads: int = 1,
) -> AblationTable:
    """Evaluate one trained model per case on an identical all-impairments
    test set at every SNR; the impact row is each case's worst NMSE gap to
    the "All" case."""
    snrs = [float(s) for s in snr_grid_db]
    if not snrs:
        raise ValueError("empty SNR grid")
    case_names = [c.name for c in cases]
    if "All" not in case_names:
        raise ValueError("ablation requires an 'All' baseline case")
    for c in cases:
        if c.name not in models:
            raise ValueError(f"missing model for ablation case {c.name!r}")
    # The test set always carries the full impairment chain.
    test_toggles = ImpairmentToggles()
    cfg = replace(spec.impairments, toggles=test_toggles)
    test_spec = GeneratorSpec(grid=spec.grid, profile=spec.profile, impairments=cfg)

    entries = []
    nmse_by_case: dict[str, dict[float, float]] = {name: {} for name in case_names}
    for si, snr in enumerate(snrs):
        point_cfg = replace(cfg, snr_grid_db=(snr,))
        point_spec = GeneratorSpec(grid=spec.grid, profile=spec.profile, impairments=point_cfg)
        records = generate_records(point_spec, n_records, root_seed=seed + 1000 * si,
                                   threads=threads)
        for case in cases:
            row = _aggregate(records, "AI", models[case.name], snr,
                             seed=seed + 1000 * si, threads=threads)
            entries.append(
                AblationEntry(case=case.name, snr_db=snr, nmse_db=row.nmse_db,
                              n_records=row.n_records)
            )
            nmse_by_case[case.name][snr] = row.nmse_db
    impact = {
        name: max(nmse_by_case[name][s] - nmse_by_case["All"][s] for s in snrs)
        for name in case_names if name != "All"
    }
    return AblationTable(entries=tuple(entries), max_impact_db=impact, seed=seed)


def plot_sweep(report: SweepReport, path) -> None:
    """Optional NMSE-vs-SNR plot; requires matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    methods = sorted({r.method for r in report.rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    for method in methods:
        pts = sorted((r.snr_db, r.nmse_db) for r in report.rows if r.method == method)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("mean NMSE (dB)")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
