"""Dense float32 tensors and the conv / relu / maxpool primitives.

All carriers (images, feature maps, kernels, gradients) are plain C-order
float32 ndarrays of rank 1..4; ``Tensor`` is an alias, not a wrapper class.
Every operation returns a fresh array and never mutates its inputs, so values
are safe to share between threads. There is no autodiff graph: each primitive
ships a hand-written input-gradient pass (weights are never trained).

"Convolution" here is cross-correlation (no kernel flip), the deep-learning
convention matching published VGG16 weights; classical filters that need the
mathematical convolution pre-flip their kernels (see ``synthima.composite``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Tensor = np.ndarray


class ShapeError(ValueError):
    """Tensor shapes inconsistent with an operation's contract."""


def make_tensor(shape, data) -> Tensor:
    """Build a rank-1..4 float32 tensor from flat row-major data."""
    shape = tuple(int(s) for s in shape)
    if not 1 <= len(shape) <= 4:
        raise ShapeError(f"rank must be 1..4, got {len(shape)}")
    if any(s < 1 for s in shape):
        raise ShapeError(f"all extents must be >= 1, got {shape}")
    flat = np.ascontiguousarray(data, dtype=np.float32).reshape(-1)
    n = int(np.prod(shape))
    if flat.size != n:
        raise ShapeError(f"shape {shape} holds {n} values, got {flat.size}")
    return flat.reshape(shape)


def _f32(x) -> Tensor:
    return np.ascontiguousarray(x, dtype=np.float32)


@dataclass(frozen=True)
class ConvGeometry:
    """Shape algebra for one 2-D convolution layer."""

    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel_h", "kernel_w", "stride"):
            if getattr(self, name) < 1:
                raise ShapeError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.padding < 0:
            raise ShapeError(f"padding must be >= 0, got {self.padding}")

    def out_extent(self, extent: int, kernel: int) -> int:
        out = (extent + 2 * self.padding - kernel) // self.stride + 1
        if out < 1:
            raise ShapeError(
                f"kernel {kernel} (stride {self.stride}, padding {self.padding}) "
                f"does not fit input extent {extent}"
            )
        return out

    def out_shape(self, h: int, w: int) -> tuple[int, int]:
        return self.out_extent(h, self.kernel_h), self.out_extent(w, self.kernel_w)


def _check_conv_shapes(x: Tensor, kernels: Tensor, bias: Tensor | None, geom: ConvGeometry):
    if x.ndim != 3 or x.shape[0] != geom.in_channels:
        raise ShapeError(
            f"input must be [{geom.in_channels},H,W], got {tuple(x.shape)}"
        )
    want = (geom.out_channels, geom.in_channels, geom.kernel_h, geom.kernel_w)
    if tuple(kernels.shape) != want:
        raise ShapeError(f"kernels must be {want}, got {tuple(kernels.shape)}")
    if bias is not None and tuple(bias.shape) != (geom.out_channels,):
        raise ShapeError(
            f"bias must be [{geom.out_channels}], got {tuple(bias.shape)}"
        )


def conv2d_forward(x: Tensor, kernels: Tensor, bias: Tensor | None, geom: ConvGeometry) -> Tensor:
    """Cross-correlate x [C,H,W] with kernels [O,C,kh,kw]; zero padding outside."""
    x, kernels = _f32(x), _f32(kernels)
    _check_conv_shapes(x, kernels, bias, geom)
    c, h, w = x.shape
    oh, ow = geom.out_shape(h, w)
    p, s = geom.padding, geom.stride
    xp = np.pad(x, ((0, 0), (p, p), (p, p))) if p else x
    out = np.zeros((geom.out_channels, oh * ow), dtype=np.float32)
    # One [O,C] x [C,oh*ow] product per kernel tap: fixed reduction order per
    # output element regardless of internal BLAS threading.
    for i in range(geom.kernel_h):
        for j in range(geom.kernel_w):
            patch = xp[:, i : i + s * oh : s, j : j + s * ow : s].reshape(c, -1)
            out += kernels[:, :, i, j] @ patch
    if bias is not None:
        out += _f32(bias)[:, None]
    return out.reshape(geom.out_channels, oh, ow)


def conv2d_backward(x: Tensor, kernels: Tensor, grad_out: Tensor, geom: ConvGeometry) -> Tensor:
    """Gradient of <conv2d_forward(x), grad_out> w.r.t. x (bias drops out)."""
    x, kernels, grad_out = _f32(x), _f32(kernels), _f32(grad_out)
    _check_conv_shapes(x, kernels, None, geom)
    c, h, w = x.shape
    oh, ow = geom.out_shape(h, w)
    if tuple(grad_out.shape) != (geom.out_channels, oh, ow):
        raise ShapeError(
            f"grad_out must be [{geom.out_channels},{oh},{ow}], got {tuple(grad_out.shape)}"
        )
    p, s = geom.padding, geom.stride
    gpad = np.zeros((c, h + 2 * p, w + 2 * p), dtype=np.float32)
    g = grad_out.reshape(geom.out_channels, -1)
    for i in range(geom.kernel_h):
        for j in range(geom.kernel_w):
            contrib = kernels[:, :, i, j].T @ g
            # Strided slice positions are disjoint for a fixed tap, so += is safe.
            gpad[:, i : i + s * oh : s, j : j + s * ow : s] += contrib.reshape(c, oh, ow)
    return np.ascontiguousarray(gpad[:, p : p + h, p : p + w]) if p else gpad


def relu_forward(x: Tensor) -> Tensor:
    """Elementwise max(x, 0)."""
    return np.maximum(_f32(x), np.float32(0.0))


def relu_backward(x: Tensor, grad_out: Tensor) -> Tensor:
    """Pass grad_out where x > 0, zero elsewhere (subgradient 0 at the kink)."""
    x, grad_out = _f32(x), _f32(grad_out)
    if x.shape != grad_out.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != input shape {x.shape}")
    return grad_out * (x > 0)


@dataclass(frozen=True)
class PoolRecord:
    """Argmax bookkeeping from one maxpool2x2_forward call.

    window_argmax holds, per 2x2 window, the winner's flat index 0..3 in
    window row-major order, which equals the lowest flat index of the input
    tensor on ties (np.argmax returns the first maximum).
    """

    window_argmax: np.ndarray  # [C, H', W'] uint8
    input_shape: tuple[int, int, int]
    pad: tuple[int, int]  # (-inf rows, cols) appended for odd extents


def maxpool2x2_forward(x: Tensor, pad_odd: bool = False) -> tuple[Tensor, PoolRecord]:
    """Non-overlapping 2x2 window maximum; odd extents rejected unless pad_odd."""
    x = _f32(x)
    if x.ndim != 3:
        raise ShapeError(f"maxpool input must be [C,H,W], got {tuple(x.shape)}")
    c, h, w = x.shape
    pr, pc = h % 2, w % 2
    if (pr or pc) and not pad_odd:
        raise ShapeError(
            f"maxpool2x2 needs even extents, got {h}x{w} (pass pad_odd=True to pad)"
        )
    if pr or pc:
        x = np.pad(x, ((0, 0), (0, pr), (0, pc)), constant_values=-np.inf)
    h2, w2 = (h + pr) // 2, (w + pc) // 2
    win = x.reshape(c, h2, 2, w2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h2, w2, 4)
    idx = win.argmax(axis=3)
    out = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]
    return out, PoolRecord(idx.astype(np.uint8), (c, h, w), (pr, pc))


def maxpool2x2_backward(record: PoolRecord, grad_out: Tensor) -> Tensor:
    """Route each grad_out element to its recorded argmax position, zeros elsewhere."""
    grad_out = _f32(grad_out)
    c, h, w = record.input_shape
    pr, pc = record.pad
    h2, w2 = (h + pr) // 2, (w + pc) // 2
    if tuple(grad_out.shape) != (c, h2, w2):
        raise ShapeError(
            f"grad_out must be [{c},{h2},{w2}], got {tuple(grad_out.shape)}"
        )
    win = np.zeros((c, h2, w2, 4), dtype=np.float32)
    np.put_along_axis(win, record.window_argmax[..., None].astype(np.intp), grad_out[..., None], axis=3)
    g = win.reshape(c, h2, w2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, 2 * h2, 2 * w2)
    return np.ascontiguousarray(g[:, :h, :w])
