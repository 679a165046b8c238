"""VGG16-shaped feature network: forward with activation capture, backward to input.

Only conv+relu stacks and 2x2 max pools are modeled; VGG16's fully-connected
tail is never needed for feature matching and is omitted. Activations are
captured post-rectification. NetworkSpec and weight stores are immutable
after construction and safe to share across threads; each forward call owns
its trace, so independent runs can proceed concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    ConvGeometry,
    PoolRecord,
    ShapeError,
    Tensor,
    conv2d_backward,
    conv2d_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    relu_forward,
)

CONV = "conv"  # conv + relu
POOL = "pool"  # 2x2 max pool


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    geometry: ConvGeometry | None = None

    def __post_init__(self):
        if self.kind not in (CONV, POOL):
            raise ValueError(f"layer kind must be '{CONV}' or '{POOL}', got {self.kind!r}")
        if self.kind == CONV and self.geometry is None:
            raise ValueError(f"conv layer {self.name!r} needs a ConvGeometry")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    in_channels: int = 3

    def __post_init__(self):
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("layer names must be unique")
        channels = self.in_channels
        for layer in self.layers:
            if layer.kind == CONV:
                if layer.geometry.in_channels != channels:
                    raise ValueError(
                        f"layer {layer.name!r} expects {layer.geometry.in_channels} input "
                        f"channels but receives {channels}"
                    )
                channels = layer.geometry.out_channels

    def index(self, name: str) -> int:
        for i, layer in enumerate(self.layers):
            if layer.name == name:
                return i
        raise KeyError(f"no layer named {name!r}")

    def conv_layers(self) -> tuple[LayerSpec, ...]:
        return tuple(l for l in self.layers if l.kind == CONV)


# WeightStore: layer name -> (kernels [O,C,kh,kw] float32, bias [O] float32).
WeightStore = dict


def vgg16_spec() -> NetworkSpec:
    """The 13-conv VGG16 feature stack: blocks of (2,2,3,3,3) conv layers at
    widths (64,128,256,512,512), 3x3 kernels, 2x2 pooling between blocks."""
    blocks = ((2, 64), (2, 128), (3, 256), (3, 512), (3, 512))
    layers = []
    channels = 3
    for bi, (depth, width) in enumerate(blocks, start=1):
        for li in range(1, depth + 1):
            geom = ConvGeometry(channels, width, 3, 3, stride=1, padding=1)
            layers.append(LayerSpec(f"conv{bi}_{li}", CONV, geom))
            channels = width
        layers.append(LayerSpec(f"pool{bi}", POOL))
    return NetworkSpec(tuple(layers), in_channels=3)


def toy_spec(depth: int = 3, channels: int = 8, in_channels: int = 3, kernel: int = 3) -> NetworkSpec:
    """Small same-size conv stack for tests and weightless CLI runs."""
    layers = []
    c = in_channels
    for i in range(1, depth + 1):
        layers.append(LayerSpec(f"conv{i}", CONV, ConvGeometry(c, channels, kernel, kernel, padding=kernel // 2)))
        c = channels
    return NetworkSpec(tuple(layers), in_channels=in_channels)


def random_weights(spec: NetworkSpec, seed: int = 0) -> WeightStore:
    """Seeded He-scaled normal kernels with zero biases."""
    rng = np.random.default_rng(seed)
    store: WeightStore = {}
    for layer in spec.conv_layers():
        g = layer.geometry
        scale = math.sqrt(2.0 / (g.in_channels * g.kernel_h * g.kernel_w))
        kernels = rng.normal(0.0, scale, size=(g.out_channels, g.in_channels, g.kernel_h, g.kernel_w))
        store[layer.name] = (kernels.astype(np.float32), np.zeros(g.out_channels, dtype=np.float32))
    return store


def zero_weights(spec: NetworkSpec) -> WeightStore:
    store: WeightStore = {}
    for layer in spec.conv_layers():
        g = layer.geometry
        store[layer.name] = (
            np.zeros((g.out_channels, g.in_channels, g.kernel_h, g.kernel_w), dtype=np.float32),
            np.zeros(g.out_channels, dtype=np.float32),
        )
    return store


def bind_weights(spec: NetworkSpec, store: WeightStore) -> WeightStore:
    """Check that every conv layer has exactly one matching-shape entry."""
    for layer in spec.conv_layers():
        g = layer.geometry
        if layer.name not in store:
            raise ShapeError(f"weight store is missing layer {layer.name!r}")
        kernels, bias = store[layer.name]
        want = (g.out_channels, g.in_channels, g.kernel_h, g.kernel_w)
        if tuple(kernels.shape) != want:
            raise ShapeError(
                f"layer {layer.name!r}: kernels are {tuple(kernels.shape)}, spec wants {want}"
            )
        if tuple(bias.shape) != (g.out_channels,):
            raise ShapeError(
                f"layer {layer.name!r}: bias is {tuple(bias.shape)}, spec wants ({g.out_channels},)"
            )
    extra = set(store) - {l.name for l in spec.conv_layers()}
    if extra:
        raise ShapeError(f"weight store has entries for unknown layers: {sorted(extra)}")
    return store


def parameter_count(spec: NetworkSpec) -> int:
    total = 0
    for layer in spec.conv_layers():
        g = layer.geometry
        total += g.out_channels * g.in_channels * g.kernel_h * g.kernel_w + g.out_channels
    return total


@dataclass
class _Record:
    """One executed layer: enough state to capture and to run backward."""

    layer: LayerSpec
    inputs: Tensor
    output: Tensor  # post-relu map (conv) or pooled map (pool)
    pool: PoolRecord | None = None


@dataclass
class ActivationTrace:
    """Captured per-layer feature maps from one forward pass."""

    inputs: Tensor
    captured: dict
    records: list

    def __getitem__(self, name: str) -> Tensor:
        return self.captured[name]


def _validate_capture(spec: NetworkSpec, capture) -> int:
    if not capture:
        raise ValueError("capture set must not be empty")
    known = {l.name for l in spec.layers}
    unknown = set(capture) - known
    if unknown:
        raise KeyError(f"unknown capture layer(s): {sorted(unknown)}")
    return max(spec.index(name) for name in capture)


def forward(spec: NetworkSpec, weights: WeightStore, x: Tensor, capture) -> ActivationTrace:
    """Run the stack through the deepest captured layer, recording activations."""
    deepest = _validate_capture(spec, capture)
    bind_weights(spec, weights)
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != spec.in_channels:
        raise ShapeError(f"input must be [{spec.in_channels},H,W], got {tuple(x.shape)}")

    # Pre-walk the shape algebra so divisibility problems fail before any work.
    h, w = x.shape[1], x.shape[2]
    pools = 0
    for layer in spec.layers[: deepest + 1]:
        if layer.kind == POOL:
            if h % 2 or w % 2:
                raise ShapeError(
                    f"input {x.shape[1]}x{x.shape[2]} is not divisible by 2^{pools + 1} "
                    f"as required by {layer.name!r}"
                )
            h, w, pools = h // 2, w // 2, pools + 1
        else:
            h, w = layer.geometry.out_shape(h, w)

    trace = ActivationTrace(inputs=x, captured={}, records=[])
    current = x
    for layer in spec.layers[: deepest + 1]:
        if layer.kind == CONV:
            kernels, bias = weights[layer.name]
            out = relu_forward(conv2d_forward(current, kernels, bias, layer.geometry))
            trace.records.append(_Record(layer, current, out))
        else:
            out, pool_rec = maxpool2x2_forward(current)
            trace.records.append(_Record(layer, current, out, pool=pool_rec))
        if layer.name in capture:
            trace.captured[layer.name] = out
        current = out
    return trace


def backward_to_input(spec: NetworkSpec, weights: WeightStore, trace: ActivationTrace, cotangents) -> Tensor:
    """d<activation_l, cotangent_l>/d(input), summed over the named layers."""
    unknown = set(cotangents) - set(trace.captured)
    if unknown:
        raise KeyError(f"cotangent(s) for uncaptured layer(s): {sorted(unknown)}")
    for name, cot in cotangents.items():
        if tuple(cot.shape) != tuple(trace.captured[name].shape):
            raise ShapeError(
                f"cotangent for {name!r} is {tuple(cot.shape)}, "
                f"activation is {tuple(trace.captured[name].shape)}"
            )

    grad = None
    for rec in reversed(trace.records):
        cot = cotangents.get(rec.layer.name)
        if cot is not None:
            cot = np.ascontiguousarray(cot, dtype=np.float32)
            grad = cot.copy() if grad is None else grad + cot
        if grad is None:
            continue  # deeper than every named layer: nothing flows yet
        if rec.layer.kind == CONV:
            # relu mask: output is max(z, 0), so output > 0 identifies the active set.
            grad = conv2d_backward(rec.inputs, weights[rec.layer.name][0], grad * (rec.output > 0), rec.layer.geometry)
        else:
            grad = maxpool2x2_backward(rec.pool, grad)
    if grad is None:
        return np.zeros_like(trace.inputs)
    return grad
