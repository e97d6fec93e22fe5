"""Dense-CRF mean-field segmentation over unary potentials.

Fields are numpy arrays: unary energies and marginals have shape
(height, width, n_labels); masks are (height, width). Message passing is exact
O(N^2) summation over all pixel pairs, which keeps desk-scale grids tractable
and lets tests compare against a brute-force oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._binary import Reader, pack_f32_array, pack_u32
from .errors import (
    BadMagicError,
    FormatError,
    ShapeError,
    TruncatedStreamError,
    UnsupportedVersionError,
)

UNARY_MAGIC = b"UNRY"
UNARY_VERSION = 1


@dataclass(frozen=True)
class PairwiseParams:
    """Two-kernel Gaussian pairwise potential: appearance + smoothness."""

    w_appearance: float
    theta_alpha: float  # spatial stddev of the appearance kernel, pixels
    theta_beta: float  # color stddev, [0, 1] intensity units
    w_smooth: float
    theta_gamma: float  # spatial stddev of the smoothness kernel, pixels

    def __post_init__(self):
        if self.w_appearance < 0 or self.w_smooth < 0:
            raise ShapeError("kernel weights must be >= 0")
        if min(self.theta_alpha, self.theta_beta, self.theta_gamma) <= 0:
            raise ShapeError("kernel stddevs must be > 0")


def color_model_unary(image: np.ndarray, fg_seeds, bg_seeds, sigma: float) -> np.ndarray:
    """Two-label unary energies from one mean color per seed set.

    Energy for label l at pixel p is ||color(p) - mean_l||^2 / (2 sigma^2);
    label 0 is background, label 1 foreground.
    """
    if image.ndim != 3:
        raise ShapeError(f"image must be (channels, h, w), got shape {image.shape}")
    if sigma <= 0:
        raise ShapeError(f"sigma must be > 0, got {sigma}")
    _, h, w = image.shape
    fg_seeds = list(fg_seeds)
    bg_seeds = list(bg_seeds)
    if not fg_seeds or not bg_seeds:
        raise ShapeError("both seed lists must be non-empty")
    for r, c in fg_seeds + bg_seeds:
        if not (0 <= r < h and 0 <= c < w):
            raise ShapeError(f"seed ({r}, {c}) is outside the {h}x{w} image")
    img = np.asarray(image, dtype=np.float64)
    means = []
    for seeds in (bg_seeds, fg_seeds):  # label order: 0=background, 1=foreground
        colors = np.stack([img[:, r, c] for r, c in seeds])
        means.append(colors.mean(axis=0))
    u = np.empty((h, w, 2), dtype=np.float64)
    for label, mean in enumerate(means):
        diff = img - mean[:, None, None]
        u[:, :, label] = (diff * diff).sum(axis=0) / (2.0 * sigma * sigma)
    return u


def save_unary(unary: np.ndarray) -> bytes:
    """UNRY format: magic, u32 version, u32 h, u32 w, u32 n_labels, then f32
    energies in row-major pixel order with labels innermost. Little-endian."""
    h, w, n_labels = unary.shape
    out = bytearray()
    out += UNARY_MAGIC
    out += pack_u32(UNARY_VERSION)
    out += pack_u32(h)
    out += pack_u32(w)
    out += pack_u32(n_labels)
    out += pack_f32_array(unary)
    return bytes(out)


def load_unary(data: bytes) -> np.ndarray:
    r = Reader(data)
    magic = r.take(4)
    if magic != UNARY_MAGIC:
        raise BadMagicError(f"expected magic {UNARY_MAGIC!r}, got {magic!r}")
    version = r.u32()
    if version != UNARY_VERSION:
        raise UnsupportedVersionError(f"unsupported unary version {version}")
    h = r.u32()
    w = r.u32()
    n_labels = r.u32()
    if n_labels < 2:
        raise FormatError(f"unary field needs >= 2 labels, got {n_labels}")
    if h < 1 or w < 1:
        raise FormatError(f"unary field has empty dimensions {h}x{w}")
    count = h * w * n_labels
    if 4 * count > r.remaining:
        raise TruncatedStreamError(f"declared {count} floats exceed stream length")
    values = r.f32_array(count).astype(np.float64).reshape(h, w, n_labels)
    if not r.exhausted:
        raise FormatError(f"{r.remaining} trailing bytes after the declared energies")
    if not np.all(np.isfinite(values)):
        raise FormatError("unary energies must be finite")
    return values


def _softmax_last(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def meanfield_init(unary: np.ndarray) -> np.ndarray:
    """Initial marginals: per-pixel softmax of the negated unary energies."""
    return _softmax_last(-np.asarray(unary, dtype=np.float64))


def pairwise_kernel(image: np.ndarray, params: PairwiseParams) -> np.ndarray:
    """Dense (N, N) kernel matrix with zero diagonal.

    k(i, j) = w_app * exp(-|p_i-p_j|^2 / 2 theta_alpha^2 - |I_i-I_j|^2 / 2 theta_beta^2)
            + w_smooth * exp(-|p_i-p_j|^2 / 2 theta_gamma^2)
    """
    c, h, w = image.shape
    n = h * w
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    pos = np.stack([rr.ravel(), cc.ravel()], axis=1)
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
    colors = np.asarray(image, dtype=np.float64).reshape(c, n).T
    c2 = ((colors[:, None, :] - colors[None, :, :]) ** 2).sum(axis=2)
    k = params.w_appearance * np.exp(
        -d2 / (2.0 * params.theta_alpha ** 2) - c2 / (2.0 * params.theta_beta ** 2))
    k += params.w_smooth * np.exp(-d2 / (2.0 * params.theta_gamma ** 2))
    np.fill_diagonal(k, 0.0)
    return k


def meanfield_step(q: np.ndarray, unary: np.ndarray, image: np.ndarray,
                   params: PairwiseParams) -> np.ndarray:
    """One synchronous mean-field update.

    With Potts compatibility (1 for differing labels) the message reduces to
    message(i, l) = sum_{j != i} k(i, j) * (1 - Q_j(l)); the new marginals are
    Q'_i proportional to exp(-U_i - message_i), normalized per pixel.
    """
    if q.shape != unary.shape:
        raise ShapeError(f"marginals shape {q.shape} != unary shape {unary.shape}")
    if image.ndim != 3 or image.shape[1:] != unary.shape[:2]:
        raise ShapeError(
            f"image shape {image.shape} does not cover a {unary.shape[0]}x{unary.shape[1]} grid"
        )
    h, w, n_labels = unary.shape
    n = h * w
    k = pairwise_kernel(image, params)
    messages = k @ (1.0 - np.asarray(q, dtype=np.float64).reshape(n, n_labels))
    logits = -(np.asarray(unary, dtype=np.float64).reshape(n, n_labels) + messages)
    return _softmax_last(logits).reshape(h, w, n_labels)


def run_crf(unary: np.ndarray, image: np.ndarray, params: PairwiseParams,
            iterations: int) -> tuple[list[np.ndarray], np.ndarray]:
    """Mean-field inference followed by per-pixel argmax labeling.

    Returns one binary mask per label (ties break to the lower label index)
    plus the final marginals.
    """
    if iterations < 0:
        raise ShapeError(f"iterations must be >= 0, got {iterations}")
    q = meanfield_init(unary)
    for _ in range(iterations):
        q = meanfield_step(q, unary, image, params)
    labels = np.argmax(q, axis=-1)
    return extract_region_masks(labels, unary.shape[2]), q


def extract_region_masks(label_map: np.ndarray, n_labels: int) -> list[np.ndarray]:
    """One binary (H, W) mask per label; masks sum to 1 at every pixel."""
    label_map = np.asarray(label_map)
    return [(label_map == l).astype(np.float64) for l in range(n_labels)]
