"""Training loop: masked-MSE regression of as-received channels from
impaired observations, with RB-range zero masking for allocation
robustness. Deterministic in the seed up to framework nondeterminism
(CPU conv kernels are deterministic in practice; GPU kernels may not be).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import GridInfo, MaskPolicy, prepare_sample, read_dataset
from .export import export_weights
from .model import Denoiser, masked_loss


@dataclass
class TrainConfig:
    dataset: str
    out_weights: str
    features: int = 32
    kernel: tuple[int, int] | int = 3
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    mask_policy: MaskPolicy = field(default_factory=MaskPolicy)
    n_sym: int | None = None  # None: take from the dataset; set to cross-check
    seed: int = 0
    log_path: str | None = None

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        policy = MaskPolicy(
            zero_prob=float(obj.get("mask_zero_prob", 0.0)),
            min_rb=int(obj.get("mask_min_rb", 1)),
            max_rb=int(obj.get("mask_max_rb", 4)),
        )
        kernel = obj.get("kernel", 3)
        if isinstance(kernel, list):
            kernel = tuple(int(k) for k in kernel)
        return cls(
            dataset=obj["dataset"],
            out_weights=obj["out_weights"],
            features=int(obj.get("features", 32)),
            kernel=kernel,
            epochs=int(obj.get("epochs", 30)),
            batch_size=int(obj.get("batch_size", 32)),
            learning_rate=float(obj.get("learning_rate", 1e-3)),
            mask_policy=policy,
            n_sym=obj.get("n_sym"),
            seed=int(obj.get("seed", 0)),
            log_path=obj.get("log_path"),
        )


def _materialize(records, grid: GridInfo, policy: MaskPolicy | None, seed: int, epoch: int):
    """Build the epoch's tensors; masking is re-drawn per epoch and sample."""
    xs, ys, ms = [], [], []
    for i, rec in enumerate(records):
        x, y, m = prepare_sample(rec, grid, policy, seed=(seed, epoch, i))
        xs.append(x)
        ys.append(y)
        ms.append(m)
    return (
        torch.from_numpy(np.stack(xs)),
        torch.from_numpy(np.stack(ys)),
        torch.from_numpy(np.stack(ms)),
    )


def train(config: TrainConfig) -> tuple[str, list[dict]]:
    """Train the denoiser and export it; returns (weight path, epoch log)."""
    grid, records = read_dataset(config.dataset)
    if not records:
        raise ValueError(f"{config.dataset}: empty dataset")
    if config.n_sym is not None and config.n_sym != grid.n_sym:
        raise ValueError(
            f"architecture expects {config.n_sym} DMRS symbols but the dataset "
            f"carries {grid.n_sym}"
        )
    torch.manual_seed(config.seed)
    model = Denoiser(
        n_sym=grid.n_sym, n_ant=grid.n_ant,
        features=config.features, kernel=config.kernel,
    )
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    order_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    log: list[dict] = []
    policy = config.mask_policy if config.mask_policy.zero_prob > 0 else None
    n = len(records)
    for epoch in range(config.epochs):
        x, y, m = _materialize(records, grid, policy, config.seed, epoch)
        perm = order_rng.permutation(n)
        model.train()
        total, batches = 0.0, 0
        started = time.perf_counter()
        for lo in range(0, n, config.batch_size):
            idx = torch.from_numpy(perm[lo : lo + config.batch_size].copy())
            opt.zero_grad()
            pred = model(x[idx])
            loss = masked_loss(pred, y[idx], m[idx])
            loss.backward()
            opt.step()
            total += float(loss.detach())
            batches += 1
        entry = {
            "epoch": epoch,
            "masked_loss": total / batches,
            "seconds": round(time.perf_counter() - started, 3),
        }
        log.append(entry)
    export_weights(model, config.out_weights)
    if config.log_path:
        with open(config.log_path, "w", encoding="utf-8") as fh:
            json.dump(log, fh, indent=1)
    return config.out_weights, log
