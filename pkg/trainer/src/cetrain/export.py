"""Weight export in the native inference engine's binary format.

Layout (magic "S2FW"): u32 version, u32 JSON-architecture length, the JSON
architecture (layer list with shapes, kernel, activation, feature width,
N_sym, N_ant), then float32 little-endian parameters in declared layer
order, each conv as (out_ch, in_ch, kh, kw) row-major followed by its bias.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import Denoiser

WEIGHT_MAGIC = b"S2FW"
WEIGHT_VERSION = 1


def _layers(model: Denoiser):
    out = [("head", model.head)]
    for i, block in enumerate(model.blocks):
        out.append((f"block{i}.conv1", block.conv1))
        out.append((f"block{i}.conv2", block.conv2))
    out.append(("tail", model.tail))
    return out


def export_weights(model: Denoiser, path) -> int:
    """Serialize the trained model; returns the byte count written."""
    layers = _layers(model)
    kh, kw = model.kernel
    arch = {
        "version": WEIGHT_VERSION,
        "n_sym": model.n_sym,
        "n_ant": model.n_ant,
        "features": model.features,
        "kernel": kh,
        "activation": "relu",
        "layers": [
            {
                "name": name,
                "out_ch": conv.out_channels,
                "in_ch": conv.in_channels,
                "kh": conv.kernel_size[0],
                "kw": conv.kernel_size[1],
            }
            for name, conv in layers
        ],
    }
    arch_json = json.dumps(arch, sort_keys=True).encode("utf-8")
    chunks = [WEIGHT_MAGIC, struct.pack("<II", WEIGHT_VERSION, len(arch_json)), arch_json]
    for _, conv in layers:
        w = conv.weight.detach().cpu().numpy().astype("<f4")
        b = conv.bias.detach().cpu().numpy().astype("<f4")
        chunks.append(np.ascontiguousarray(w).tobytes())
        chunks.append(np.ascontiguousarray(b).tobytes())
    blob = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)
