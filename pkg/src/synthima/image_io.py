"""Raster image loading/saving and conversion to the network's input space.

Formats: 8-bit PNG (via Pillow; alpha composited onto white, 16-bit depth
rejected) and binary PPM (P6, maxval 255, lossless round-trip). Saving is
atomic: the file is written to a temp name and renamed into place.

Resizing is bilinear with half-pixel centers, computed in float64 with the
lerp form ``a + t*(b - a)`` so that same-size resizes and constant images
reproduce exactly; the convention is fixed so golden tests stay stable.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .tensor import Tensor

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# Standard VGG16 input preprocessing: BGR channel order, per-channel means.
VGG_MEAN_BGR = (103.939, 116.779, 123.68)


class ImageFormatError(ValueError):
    """Unreadable or unsupported image file."""


class UnsupportedDepthError(ImageFormatError):
    """Bit depth other than 8 bits per channel."""


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB raster, pixels stored [height, width, 3] row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ImageFormatError(f"pixels must be uint8 [H,W,3], got {p.dtype} {p.shape}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ImageFormatError("image extents must be >= 1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def filled(cls, width: int, height: int, rgb=(0, 0, 0)) -> "RgbImage":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:] = np.asarray(rgb, dtype=np.uint8)
        return cls(px)


def atomic_write_bytes(path, data: bytes):
    """Write to a temp file in the target directory, then rename into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".synthima-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_png(path) -> RgbImage:
    with open(path, "rb") as fh:
        header = fh.read(26)
    # IHDR bit depth lives at byte 24; Pillow silently narrows some 16-bit
    # variants, so inspect the container directly.
    if len(header) < 25:
        raise ImageFormatError(f"{path}: truncated PNG header")
    if header[24] != 8:
        raise UnsupportedDepthError(f"{path}: {header[24]}-bit PNG not supported (8-bit only)")
    with Image.open(path) as im:
        if im.mode in ("RGBA", "LA", "PA") or (im.mode == "P" and "transparency" in im.info):
            rgba = im.convert("RGBA")
            white = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
            im = Image.alpha_composite(white, rgba).convert("RGB")
        else:
            im = im.convert("RGB")
        return RgbImage(np.asarray(im, dtype=np.uint8).copy())


def _parse_ppm_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # Skip whitespace and '#' comments between header tokens.
    n = len(data)
    while pos < n:
        if data[pos : pos + 1].isspace():
            pos += 1
        elif data[pos : pos + 1] == b"#":
            while pos < n and data[pos] != 0x0A:
                pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated PPM header")
    return data[start:pos], pos


def _load_ppm(path) -> RgbImage:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise ImageFormatError(f"{path}: not a binary PPM (P6) file")
    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _parse_ppm_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError as exc:
            raise ImageFormatError(f"{path}: bad PPM header token {token!r}") from exc
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedDepthError(f"{path}: PPM maxval {maxval} not supported (255 only)")
    pos += 1  # single whitespace byte after maxval
    body = data[pos : pos + 3 * width * height]
    if len(body) != 3 * width * height:
        raise ImageFormatError(f"{path}: PPM payload truncated")
    return RgbImage(np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3).copy())


def load_image(path) -> RgbImage:
    """Load a PNG or binary PPM (P6) file as 8-bit RGB."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic.startswith(_PNG_SIGNATURE):
        return _load_png(path)
    if magic.startswith(b"P6"):
        return _load_ppm(path)
    raise ImageFormatError(f"{path}: unrecognized format (PNG and PPM P6 supported)")


def save_image(path, img: RgbImage):
    """Save as PNG or PPM by file extension; write is atomic."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".ppm":
        header = b"P6\n%d %d\n255\n" % (img.width, img.height)
        atomic_write_bytes(path, header + img.pixels.tobytes())
    elif ext == ".png":
        import io

        buf = io.BytesIO()
        Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
        atomic_write_bytes(path, buf.getvalue())
    else:
        raise ImageFormatError(f"{path}: unsupported output extension (use .png or .ppm)")


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of [H,W,C] data, half-pixel centers, float64 result."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target extents must be >= 1, got {out_h}x{out_w}")
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[:2]

    def axis(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.intp)
        lo = np.minimum(lo, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, ty = axis(h, out_h)
    x0, x1, tx = axis(w, out_w)
    rows = arr[y0] + ty[:, None, None] * (arr[y1] - arr[y0])
    return rows[:, x0] + tx[None, :, None] * (rows[:, x1] - rows[:, x0])


@dataclass(frozen=True)
class PreprocessSpec:
    """How pixels map into the feature network's input space.

    ``mean`` is given in the *output* channel order (after any reordering);
    the VGG16 default is BGR with the published channel means. Random-weight
    toy networks use zero means and RGB order.
    """

    mean: tuple[float, float, float] = VGG_MEAN_BGR
    channel_order: str = "BGR"
    target_size: tuple[int, int] | None = (224, 224)  # (height, width)
    size_multiple: int = 1  # 32 for the five-pool VGG16 preset

    def __post_init__(self):
        if self.channel_order not in ("RGB", "BGR"):
            raise ValueError(f"channel_order must be RGB or BGR, got {self.channel_order!r}")
        if not all(np.isfinite(self.mean)):
            raise ValueError(f"means must be finite, got {self.mean}")
        if self.target_size is not None:
            th, tw = self.target_size
            if th < 1 or tw < 1:
                raise ValueError(f"target extents must be >= 1, got {self.target_size}")
            m = self.size_multiple
            if m > 1 and (th % m or tw % m):
                raise ValueError(f"target extents must be multiples of {m}, got {self.target_size}")


def vgg16_preprocess(size: tuple[int, int] = (224, 224)) -> PreprocessSpec:
    """Standard VGG16 preprocessing; extents must divide by all five pools."""
    return PreprocessSpec(mean=VGG_MEAN_BGR, channel_order="BGR", target_size=size, size_multiple=32)


def toy_preprocess(size: tuple[int, int] | None = None) -> PreprocessSpec:
    """Zero-mean RGB spec for seeded random-weight networks."""
    return PreprocessSpec(mean=(0.0, 0.0, 0.0), channel_order="RGB", target_size=size)


def preprocess(img: RgbImage, spec: PreprocessSpec) -> Tensor:
    """Resize, reorder channels, subtract means; returns float32 [3,H,W]."""
    arr = img.pixels.astype(np.float64)
    if spec.target_size is not None and spec.target_size != (img.height, img.width):
        arr = resize_bilinear(arr, *spec.target_size)
    if spec.channel_order == "BGR":
        arr = arr[:, :, ::-1]
    arr = arr - np.asarray(spec.mean, dtype=np.float64)
    return np.ascontiguousarray(arr.transpose(2, 0, 1), dtype=np.float32)


def deprocess(t: Tensor, spec: PreprocessSpec) -> RgbImage:
    """Invert preprocess: add means, restore RGB order, clamp, round."""
    if t.ndim != 3 or t.shape[0] != 3:
        raise ValueError(f"expected [3,H,W] tensor, got {tuple(t.shape)}")
    arr = t.astype(np.float64).transpose(1, 2, 0) + np.asarray(spec.mean, dtype=np.float64)
    if spec.channel_order == "BGR":
        arr = arr[:, :, ::-1]
    arr = np.clip(arr, 0.0, 255.0)
    # Half-away-from-zero; values are non-negative after the clamp.
    return RgbImage(np.floor(arr + 0.5).astype(np.uint8))


def preprocessed_bounds(spec: PreprocessSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel (low, high) of the valid preprocessed pixel range."""
    mean = np.asarray(spec.mean, dtype=np.float32)
    return -mean, 255.0 - mean
