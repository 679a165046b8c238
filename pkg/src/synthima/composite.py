"""Composite generative models: classical filters, blending, automated patterns.

Boundary conventions (neither is prescribed by the underlying math, so both
are fixed here and covered by golden tests): filters use replicate-edge
padding, cellular automata wrap around so rows stay translation-equivariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .image_io import RgbImage


def _round_u8(arr: np.ndarray) -> np.ndarray:
    # Half-away-from-zero after clamping to [0, 255].
    return np.floor(np.clip(arr, 0.0, 255.0) + 0.5).astype(np.uint8)


@dataclass(frozen=True)
class FilterKernel:
    """A classical convolution filter plus post scale/bias."""

    name: str
    coefficients: np.ndarray  # [kh, kw]
    bias: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        object.__setattr__(self, "coefficients", c)
        if c.ndim != 2:
            raise ValueError(f"kernel {self.name!r} must be 2-D, got rank {c.ndim}")
        kh, kw = c.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"kernel {self.name!r} extents must be odd, got {kh}x{kw}")


def convolve_replicate(arr: np.ndarray, coefficients: np.ndarray) -> np.ndarray:
    """Classical convolution (kernel flipped) with replicate-edge padding.

    Works on [H,W] or [H,W,C] float data; returns float64 without any
    clamping so linearity can be exercised directly.
    """
    arr = np.asarray(arr, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    kf = np.flip(np.asarray(coefficients, dtype=np.float64), (0, 1))
    kh, kw = kf.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(arr, ((ph, ph), (pw, pw), (0, 0)), mode="edge")
    h, w = arr.shape[:2]
    out = np.zeros_like(arr)
    for i in range(kh):
        for j in range(kw):
            out += kf[i, j] * xp[i : i + h, j : j + w]
    return out[:, :, 0] if squeeze else out


def apply_filter(img: RgbImage, k: FilterKernel) -> RgbImage:
    """Filter each channel, then scale, bias, clamp and round to 8 bits."""
    out = convolve_replicate(img.pixels.astype(np.float64), k.coefficients)
    return RgbImage(_round_u8(k.scale * out + k.bias))


def blend(a: RgbImage, b: RgbImage, alpha: float) -> RgbImage:
    """alpha*a + (1-alpha)*b per channel."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(
            f"blend needs equal extents, got {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0,1], got {alpha}")
    mix = alpha * a.pixels.astype(np.float64) + (1.0 - alpha) * b.pixels.astype(np.float64)
    return RgbImage(_round_u8(mix))


def grayscale(img: RgbImage) -> np.ndarray:
    """BT.601 luma as float64 [H,W]."""
    p = img.pixels.astype(np.float64)
    return 0.299 * p[:, :, 0] + 0.587 * p[:, :, 1] + 0.114 * p[:, :, 2]


def gaussian_kernel(radius: float) -> FilterKernel:
    """Normalized Gaussian with sigma = radius; radius 0 degenerates to identity."""
    if radius < 0:
        raise ValueError(f"blur radius must be >= 0, got {radius}")
    if radius == 0:
        return FilterKernel("gaussian0", np.array([[1.0]]))
    half = max(1, int(math.ceil(3.0 * radius)))
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(ax**2) / (2.0 * radius**2))
    k = np.outer(g, g)
    return FilterKernel(f"gaussian{radius:g}", k / k.sum())


def named_kernel(name: str, radius: float = 1.0) -> FilterKernel:
    """Look up a stock kernel by name ('gaussian' takes the radius parameter)."""
    if name == "gaussian":
        return gaussian_kernel(radius)
    try:
        return STOCK_KERNELS[name]
    except KeyError:
        raise KeyError(f"unknown kernel {name!r}; known: {sorted(STOCK_KERNELS) + ['gaussian']}") from None


STOCK_KERNELS: dict[str, FilterKernel] = {
    "identity": FilterKernel("identity", np.array([[1.0]])),
    "box3": FilterKernel("box3", np.full((3, 3), 1.0 / 9.0)),
    "sharpen": FilterKernel("sharpen", np.array([[0, -1, 0], [-1, 5, -1], [0, -1, 0]], dtype=float)),
    "sobel-x": FilterKernel("sobel-x", np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float), bias=128.0),
    "sobel-y": FilterKernel("sobel-y", np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=float), bias=128.0),
    "emboss": FilterKernel("emboss", np.array([[-2, -1, 0], [-1, 1, 1], [0, 1, 2]], dtype=float)),
}


def color_dodge(base: np.ndarray, blend_layer: np.ndarray) -> np.ndarray:
    """Classic dodge: base*255/(255-blend), saturating where blend hits 255."""
    denom = 255.0 - blend_layer
    out = np.full_like(base, 255.0)
    ok = denom > 1e-9
    out[ok] = base[ok] * 255.0 / denom[ok]
    return np.clip(out, 0.0, 255.0)


def pencil_sketch(img: RgbImage, blur_radius: float) -> RgbImage:
    """Grayscale, invert, Gaussian blur, color-dodge against the grayscale."""
    if blur_radius < 0:
        raise ValueError(f"blur radius must be >= 0, got {blur_radius}")
    gray = grayscale(img)
    blurred_inverse = convolve_replicate(255.0 - gray, gaussian_kernel(blur_radius).coefficients)
    dodged = color_dodge(gray, blurred_inverse)
    return RgbImage(np.repeat(_round_u8(dodged)[:, :, None], 3, axis=2))


@dataclass(frozen=True)
class CaRule:
    """An elementary cellular automaton run description."""

    rule_number: int
    width: int
    steps: int
    seed: np.ndarray | None = None  # binary row of `width` cells; None = single center cell

    def __post_init__(self):
        if not 0 <= self.rule_number <= 255:
            raise ValueError(f"rule number must be 0..255, got {self.rule_number}")
        if self.width < 3:
            raise ValueError(f"width must be >= 3, got {self.width}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.seed is not None:
            s = np.asarray(self.seed, dtype=np.uint8)
            if s.shape != (self.width,):
                raise ValueError(f"seed must have {self.width} cells, got {s.shape}")
            if np.any(s > 1):
                raise ValueError("seed cells must be binary")
            object.__setattr__(self, "seed", s)

    def table(self) -> np.ndarray:
        # Output bit for each neighborhood value 4*left + 2*center + right.
        return np.array([(self.rule_number >> i) & 1 for i in range(8)], dtype=np.uint8)


def ca_generate(rule: CaRule) -> np.ndarray:
    """Run the automaton; returns uint8 [steps, width], row 0 is the seed."""
    table = rule.table()
    grid = np.zeros((rule.steps, rule.width), dtype=np.uint8)
    if rule.seed is None:
        grid[0, rule.width // 2] = 1
    else:
        grid[0] = rule.seed
    for t in range(rule.steps - 1):
        row = grid[t]
        # Wrap-around neighborhoods: roll +1 brings the left neighbor to i.
        idx = 4 * np.roll(row, 1) + 2 * row + np.roll(row, -1)
        grid[t + 1] = table[idx]
    return grid


def ca_to_image(grid: np.ndarray, cell_size: int = 1) -> RgbImage:
    """Render rows top-down, 0 -> white, 1 -> black, cell_size pixels per cell."""
    if cell_size < 1:
        raise ValueError(f"cell_size must be >= 1, got {cell_size}")
    shade = np.where(grid > 0, 0, 255).astype(np.uint8)
    shade = np.repeat(np.repeat(shade, cell_size, axis=0), cell_size, axis=1)
    return RgbImage(np.repeat(shade[:, :, None], 3, axis=2))


def _interference(x: np.ndarray, y: np.ndarray, params: Mapping[str, float]) -> np.ndarray:
    a = params.get("a", 0.35)
    b = params.get("b", 0.35)
    c = params.get("c", 0.1)
    return np.sin(a * x) + np.sin(b * y) + np.sin(c * (x + y))


def _rings(x: np.ndarray, y: np.ndarray, params: Mapping[str, float]) -> np.ndarray:
    a = params.get("a", 0.3)
    cx = params.get("b", 0.0)
    cy = params.get("c", 0.0)
    return np.sin(a * np.hypot(x - cx, y - cy))


FORMULAS: dict[str, Callable[[np.ndarray, np.ndarray, Mapping[str, float]], np.ndarray]] = {
    "interference": _interference,
    "rings": _rings,
}


def _palette(t: np.ndarray) -> np.ndarray:
    # Smooth periodic colormap over t in [0,1]; deterministic by construction.
    phase = 2.0 * np.pi * t
    rgb = np.stack(
        [
            0.5 + 0.5 * np.sin(phase),
            0.5 + 0.5 * np.sin(phase + 2.0 * np.pi / 3.0),
            0.5 + 0.5 * np.sin(phase + 4.0 * np.pi / 3.0),
        ],
        axis=-1,
    )
    return _round_u8(255.0 * rgb)


def math_pattern(width: int, height: int, formula_id: str, params: Mapping[str, float] | None = None) -> RgbImage:
    """Evaluate a registered pixel formula over the grid and map to a palette."""
    if formula_id not in FORMULAS:
        raise KeyError(f"unknown formula {formula_id!r}; known: {sorted(FORMULAS)}")
    if width < 1 or height < 1:
        raise ValueError(f"extents must be >= 1, got {width}x{height}")
    params = {} if params is None else dict(params)
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    v = FORMULAS[formula_id](x, y, params)
    # Each term lies in [-1,1]; map the 3-term budget onto [0,1].
    t = (np.clip(v, -3.0, 3.0) + 3.0) / 6.0
    return RgbImage(_palette(t))
