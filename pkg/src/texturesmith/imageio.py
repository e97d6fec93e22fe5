"""Image loading and saving: binary PPM (P6) as the bit-exact canonical format,
PNG via Pillow for convenience. Pixels map to [0, 1] floats as value / 255."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .errors import FormatError


def _ppm_tokens(data: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    """Read whitespace-separated header tokens, skipping # comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        if pos == start:
            raise FormatError("PPM header ended before all fields were read")
        tokens.append(data[start:pos])
    return tokens, pos


def decode_ppm(data: bytes) -> np.ndarray:
    """Parse binary P6 bytes into a (3, h, w) float32 array in [0, 1]."""
    if data[:2] != b"P6":
        raise FormatError(f"not a binary PPM (P6) stream: starts with {data[:2]!r}")
    tokens, pos = _ppm_tokens(data, 3, 2)
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"non-numeric PPM header fields: {tokens}") from None
    if w < 1 or h < 1:
        raise FormatError(f"PPM dimensions must be positive, got {w}x{h}")
    if maxval != 255:
        raise FormatError(f"only maxval 255 PPMs are supported, got {maxval}")
    pos += 1  # single whitespace byte separates header and raster
    raster = data[pos:pos + 3 * w * h]
    if len(raster) < 3 * w * h:
        raise FormatError(
            f"PPM raster truncated: need {3 * w * h} bytes, found {len(raster)}"
        )
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3)
    return (pixels.astype(np.float32) / np.float32(255.0)).transpose(2, 0, 1)


def encode_ppm(image: np.ndarray) -> bytes:
    """Encode a (3, h, w) float image as binary P6, rounding to nearest 8-bit value."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise FormatError(f"PPM images need 3 channels, got shape {image.shape}")
    _, h, w = image.shape
    pixels = _to_uint8(image).transpose(1, 2, 0)
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def _to_uint8(values: np.ndarray) -> np.ndarray:
    scaled = np.rint(np.clip(np.asarray(values, dtype=np.float32), 0.0, 1.0) * 255.0)
    return scaled.astype(np.uint8)


def load_image(path, channel_means=None) -> np.ndarray:
    """Load a PPM or PNG file as a (3, h, w) float32 array in [0, 1].

    channel_means, when given, is subtracted per channel after the [0, 1]
    mapping, for pretrained weights that expect mean-centered input.
    """
    suffix = os.path.splitext(str(path))[1].lower()
    if suffix == ".ppm":
        with open(path, "rb") as fh:
            image = decode_ppm(fh.read())
    elif suffix == ".png":
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
        image = (rgb.astype(np.float32) / np.float32(255.0)).transpose(2, 0, 1)
    else:
        raise FormatError(f"unsupported image format '{suffix}' (use .ppm or .png): {path}")
    if channel_means is not None:
        means = np.asarray(channel_means, dtype=np.float32)
        if means.shape != (image.shape[0],):
            raise FormatError(
                f"channel_means needs {image.shape[0]} entries, got shape {means.shape}"
            )
        image = image - means[:, None, None]
    return image


def save_image(image: np.ndarray, path) -> None:
    suffix = os.path.splitext(str(path))[1].lower()
    if suffix == ".ppm":
        with open(path, "wb") as fh:
            fh.write(encode_ppm(image))
        return
    if suffix == ".png":
        if image.ndim != 3 or image.shape[0] != 3:
            raise FormatError(f"PNG images need 3 channels, got shape {image.shape}")
        Image.fromarray(_to_uint8(image).transpose(1, 2, 0), mode="RGB").save(path)
        return
    raise FormatError(f"unsupported image format '{suffix}' (use .ppm or .png): {path}")


def save_mask(mask: np.ndarray, path) -> None:
    """Write a [0, 1] mask as an 8-bit grayscale image (255 = member)."""
    if mask.ndim != 2:
        raise FormatError(f"masks must be 2-d, got shape {mask.shape}")
    gray = _to_uint8(mask)
    suffix = os.path.splitext(str(path))[1].lower()
    if suffix == ".png":
        Image.fromarray(gray, mode="L").save(path)
        return
    if suffix == ".ppm":
        with open(path, "wb") as fh:
            fh.write(encode_ppm(np.stack([mask, mask, mask])))
        return
    raise FormatError(f"unsupported mask format '{suffix}' (use .ppm or .png): {path}")


def load_binary_mask(path) -> np.ndarray:
    """Load an image file as a binary (h, w) mask: gray level > 0.5 is member."""
    image = load_image(path)
    gray = np.asarray(image, dtype=np.float64).mean(axis=0)
    return (gray > 0.5).astype(np.float64)
