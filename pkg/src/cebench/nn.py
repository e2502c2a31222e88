"""Self-contained CNN inference engine for the residual denoiser.

Executes the denoiser (head conv, 4 residual blocks, tail conv) on CPU with
numpy, loading weights from the binary weight format so models trained
elsewhere run natively here. Tensors are float32 (batch, channels, height,
width) with the pilot axis as height and the antenna axis as width.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass

import numpy as np

from .channel import CarrierGrid, CfrTensor

WEIGHT_MAGIC = b"S2FW"
WEIGHT_VERSION = 1

ACTIVATIONS = ("relu", "linear")


class WeightFormatError(ValueError):
    """Raised for structurally invalid weight files."""


def as_tensor4(x: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float32)
    if arr.ndim != 4:
        raise ValueError(f"expected a 4-D tensor (B, C, H, W), got shape {x.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"tensor dims must be positive, got {x.shape}")
    return arr


def pack_input(cfr: CfrTensor) -> np.ndarray:
    """Split complex symbols into interleaved real/imag channels.

    Channel 2i holds the real part of DMRS symbol i, channel 2i+1 its
    imaginary part; output shape (1, 2*N_sym, N_p, N_ant).
    """
    n_sym, n_p, n_ant = cfr.values.shape
    out = np.empty((1, 2 * n_sym, n_p, n_ant), dtype=np.float32)
    out[0, 0::2] = cfr.values.real
    out[0, 1::2] = cfr.values.imag
    return out


def unpack_output(t4: np.ndarray, grid: CarrierGrid) -> CfrTensor:
    """Exact inverse of pack_input for a single-record batch."""
    arr = as_tensor4(t4)
    b, c, n_p, n_ant = arr.shape
    if b != 1 or c != 2 * grid.n_dmrs_symbols or n_p != grid.n_pilots or n_ant != grid.n_ant:
        raise ValueError(
            f"tensor shape {arr.shape} does not match grid "
            f"(1, {2 * grid.n_dmrs_symbols}, {grid.n_pilots}, {grid.n_ant})"
        )
    values = arr[0, 0::2].astype(np.float64) + 1j * arr[0, 1::2].astype(np.float64)
    return CfrTensor(values=values, grid=grid)


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded cross-correlation: (B,C,H,W), weight (O,C,kh,kw), bias (O,)."""
    x = as_tensor4(x)
    w = np.ascontiguousarray(weight, dtype=np.float32)
    b = np.ascontiguousarray(bias, dtype=np.float32)
    if w.ndim != 4:
        raise ValueError(f"kernel must be 4-D (O, C, kh, kw), got {weight.shape}")
    o, c, kh, kw = w.shape
    if c != x.shape[1]:
        raise ValueError(f"kernel expects {c} input channels, tensor has {x.shape[1]}")
    if b.shape != (o,):
        raise ValueError(f"bias shape {bias.shape} does not match {o} output channels")
    ph, pw = kh // 2, kw // 2
    padded = np.pad(x, ((0, 0), (0, 0), (ph, kh - 1 - ph), (pw, kw - 1 - pw)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(2, 3))
    out = np.einsum("bchwuv,ocuv->bohw", windows, w, optimize=True)
    return (out + b[None, :, None, None]).astype(np.float32)


def _activate(x: np.ndarray, tag: str) -> np.ndarray:
    if tag == "relu":
        return np.maximum(x, 0.0)
    if tag == "linear":
        return x
    raise ValueError(f"unknown activation {tag!r}; expected one of {ACTIVATIONS}")


@dataclass(frozen=True)
class ConvLayer:
    weight: np.ndarray  # (out_ch, in_ch, kh, kw)
    bias: np.ndarray  # (out_ch,)

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]


N_RESIDUAL_BLOCKS = 4


@dataclass(frozen=True)
class DenoiserModel:
    """Immutable weights of the residual denoiser.

    Head maps 2*N_sym channels to F features, four residual blocks keep F
    features, the tail maps back to 2*N_sym.
    """

    n_sym: int
    n_ant: int
    features: int
    kernel: int
    activation: str
    version: int
    head: ConvLayer
    blocks: tuple[tuple[ConvLayer, ConvLayer], ...]
    tail: ConvLayer

    def __post_init__(self):
        if len(self.blocks) != N_RESIDUAL_BLOCKS:
            raise ValueError(f"model must have exactly {N_RESIDUAL_BLOCKS} residual blocks")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        io_ch = 2 * self.n_sym
        if self.head.in_channels != io_ch:
            raise ValueError(
                f"head expects {self.head.in_channels} input channels, "
                f"but 2*N_sym = {io_ch}"
            )
        if self.tail.out_channels != io_ch:
            raise ValueError(
                f"tail produces {self.tail.out_channels} channels, but 2*N_sym = {io_ch}"
            )
        f = self.features
        shapes_ok = self.head.out_channels == f and self.tail.in_channels == f and all(
            c1.in_channels == f and c1.out_channels == f
            and c2.in_channels == f and c2.out_channels == f
            for c1, c2 in self.blocks
        )
        if not shapes_ok:
            raise ValueError("block channel counts are inconsistent with the feature width")

    def layers(self) -> list[tuple[str, ConvLayer]]:
        out = [("head", self.head)]
        for i, (c1, c2) in enumerate(self.blocks):
            out.append((f"block{i}.conv1", c1))
            out.append((f"block{i}.conv2", c2))
        out.append(("tail", self.tail))
        return out


def infer(model: DenoiserModel, x: np.ndarray) -> np.ndarray:
    """Forward pass: head conv + act, 4x (conv, act, conv, add skip, act), tail conv."""
    x = as_tensor4(x)
    if x.shape[1] != model.head.in_channels:
        raise ValueError(
            f"input has {x.shape[1]} channels, model expects {model.head.in_channels}"
        )
    act = model.activation
    h = _activate(conv2d(x, model.head.weight, model.head.bias), act)
    for c1, c2 in model.blocks:
        t = _activate(conv2d(h, c1.weight, c1.bias), act)
        t = conv2d(t, c2.weight, c2.bias)
        h = _activate(t + h, act)
    return conv2d(h, model.tail.weight, model.tail.bias)


# ---------------------------------------------------------------------------
# Weight file format


def _arch_json(model: DenoiserModel) -> dict:
    return {
        "version": model.version,
        "n_sym": model.n_sym,
        "n_ant": model.n_ant,
        "features": model.features,
        "kernel": model.kernel,
        "activation": model.activation,
        "layers": [
            {
                "name": name,
                "out_ch": layer.out_channels,
                "in_ch": layer.in_channels,
                "kh": layer.weight.shape[2],
                "kw": layer.weight.shape[3],
            }
            for name, layer in model.layers()
        ],
    }


def write_weights(model: DenoiserModel, path) -> int:
    """Serialize a model: magic, version, JSON architecture, float32 params."""
    arch = json.dumps(_arch_json(model), sort_keys=True).encode("utf-8")
    chunks = [WEIGHT_MAGIC, struct.pack("<II", WEIGHT_VERSION, len(arch)), arch]
    for _, layer in model.layers():
        chunks.append(np.ascontiguousarray(layer.weight, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    blob = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def load_model(path) -> DenoiserModel:
    """Load and structurally validate a weight file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != WEIGHT_MAGIC:
        raise WeightFormatError(f"{path}: bad magic (expected {WEIGHT_MAGIC!r})")
    version, arch_len = struct.unpack_from("<II", blob, 4)
    if version != WEIGHT_VERSION:
        raise WeightFormatError(f"{path}: unsupported version {version}")
    if len(blob) < 12 + arch_len:
        raise WeightFormatError(f"{path}: truncated architecture header")
    try:
        arch = json.loads(blob[12 : 12 + arch_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"{path}: unreadable architecture header: {exc}")
    offset = 12 + arch_len
    layers: list[ConvLayer] = []
    for spec in arch["layers"]:
        o, c, kh, kw = spec["out_ch"], spec["in_ch"], spec["kh"], spec["kw"]
        w_count, b_count = o * c * kh * kw, o
        need = 4 * (w_count + b_count)
        if offset + need > len(blob):
            raise WeightFormatError(
                f"{path}: truncated parameter payload at layer {spec['name']!r}"
            )
        w = np.frombuffer(blob, dtype="<f4", count=w_count, offset=offset).reshape(o, c, kh, kw)
        offset += 4 * w_count
        b = np.frombuffer(blob, dtype="<f4", count=b_count, offset=offset)
        offset += 4 * b_count
        layers.append(ConvLayer(weight=w.copy(), bias=b.copy()))
    if offset != len(blob):
        raise WeightFormatError(f"{path}: {len(blob) - offset} trailing bytes after parameters")
    n_layers = len(layers)
    if n_layers != 2 + 2 * N_RESIDUAL_BLOCKS:
        raise WeightFormatError(
            f"{path}: expected {2 + 2 * N_RESIDUAL_BLOCKS} conv layers, found {n_layers}"
        )
    blocks = tuple(
        (layers[1 + 2 * i], layers[2 + 2 * i]) for i in range(N_RESIDUAL_BLOCKS)
    )
    try:
        return DenoiserModel(
            n_sym=int(arch["n_sym"]),
            n_ant=int(arch["n_ant"]),
            features=int(arch["features"]),
            kernel=int(arch["kernel"]),
            activation=str(arch["activation"]),
            version=int(arch["version"]),
            head=layers[0],
            blocks=blocks,
            tail=layers[-1],
        )
    except ValueError as exc:
        raise WeightFormatError(f"{path}: {exc}")


# ---------------------------------------------------------------------------
# Fixtures and diagnostics


def identity_model(n_sym: int, n_ant: int) -> DenoiserModel:
    """Fixture whose forward pass is the identity.

    Head and tail are channel-preserving 1x1 identity convolutions and every
    residual-block conv is zero, so each block reduces to its skip path. The
    activation tag is 'linear' because a rectifying activation cannot be the
    identity on signed inputs.
    """
    io_ch = 2 * n_sym
    eye = np.eye(io_ch, dtype=np.float32).reshape(io_ch, io_ch, 1, 1)
    zeros_b = np.zeros(io_ch, dtype=np.float32)
    ident = ConvLayer(weight=eye, bias=zeros_b)
    zero_layer = ConvLayer(
        weight=np.zeros((io_ch, io_ch, 1, 1), dtype=np.float32), bias=zeros_b.copy()
    )
    blocks = tuple((zero_layer, zero_layer) for _ in range(N_RESIDUAL_BLOCKS))
    return DenoiserModel(
        n_sym=n_sym, n_ant=n_ant, features=io_ch, kernel=1,
        activation="linear", version=WEIGHT_VERSION,
        head=ident, blocks=blocks, tail=ident,
    )


def random_model(
    n_sym: int, n_ant: int, features: int, kernel: int, seed, activation: str = "relu",
    weight_scale: float = 0.15,
) -> DenoiserModel:
    """Small random model for engine validation and benchmarks."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    def layer(o, c):
        w = rng.normal(0.0, weight_scale, size=(o, c, kernel, kernel)).astype(np.float32)
        b = rng.normal(0.0, weight_scale, size=o).astype(np.float32)
        return ConvLayer(weight=w, bias=b)

    io_ch = 2 * n_sym
    blocks = tuple(
        (layer(features, features), layer(features, features))
        for _ in range(N_RESIDUAL_BLOCKS)
    )
    return DenoiserModel(
        n_sym=n_sym, n_ant=n_ant, features=features, kernel=kernel,
        activation=activation, version=WEIGHT_VERSION,
        head=layer(features, io_ch), blocks=blocks, tail=layer(io_ch, features),
    )


def infer_throughput(model: DenoiserModel, n_pilots: int, reps: int = 20) -> float:
    """Measured single-record inference rate (records/second); no threshold."""
    x = np.zeros((1, model.head.in_channels, n_pilots, model.n_ant), dtype=np.float32)
    infer(model, x)  # warm up
    start = time.perf_counter()
    for _ in range(reps):
        infer(model, x)
    elapsed = time.perf_counter() - start
    return reps / elapsed if elapsed > 0 else float("inf")
