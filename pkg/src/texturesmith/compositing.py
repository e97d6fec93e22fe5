"""Per-region synthesis and feathered-mask compositing into the final image."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeError
from .network import NetworkSpec
from .synthesis import LossSample, SynthesisConfig, synthesize
from .texture import GramSet, style_descriptor


@dataclass(frozen=True)
class FeatherParams:
    radius: int = 2

    def __post_init__(self):
        if self.radius < 0:
            raise ShapeError(f"feather radius must be >= 0, got {self.radius}")


@dataclass(eq=False)
class RegionStyle:
    """A region mask bound to its style source.

    Either a precomputed descriptor, or a style image (optionally with its own
    mask, in which case the descriptor is computed on the mask's bounding-box
    crop).
    """

    mask: np.ndarray  # binary (H, W)
    descriptor: GramSet | None = None
    style_image: np.ndarray | None = None
    style_mask: np.ndarray | None = None
    overrides: dict = field(default_factory=dict)  # SynthesisConfig field overrides


@dataclass(eq=False)
class RegionSynthesisResult:
    image: np.ndarray
    traces: list[list[LossSample]]
    region_images: list[np.ndarray]
    soft_masks: list[np.ndarray]


def _require_binary(mask: np.ndarray, what: str) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise ShapeError(f"{what} must be 2-d, got shape {mask.shape}")
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise ShapeError(f"{what} must be binary (0/1 values)")
    return mask


def feather_mask(mask: np.ndarray, params: FeatherParams) -> np.ndarray:
    """Box-blur a binary mask with window (2r+1)^2 and edge-replication padding."""
    mask = _require_binary(mask, "feather input mask")
    r = params.radius
    if r == 0:
        return mask.copy()
    h, w = mask.shape
    if r > min(h, w) // 2:
        raise ShapeError(f"feather radius {r} out of bounds for a {h}x{w} mask")
    padded = np.pad(mask, r, mode="edge")
    acc = np.zeros((h, w), dtype=np.float64)
    for i in range(2 * r + 1):
        for j in range(2 * r + 1):
            acc += padded[i:i + h, j:j + w]
    return np.clip(acc / float((2 * r + 1) ** 2), 0.0, 1.0)


def normalize_soft_masks(masks: list[np.ndarray]) -> list[np.ndarray]:
    """Divide each pixel's memberships by their sum so the masks sum to 1."""
    if not masks:
        raise ShapeError("at least one mask is required")
    stack = np.stack([np.asarray(m, dtype=np.float64) for m in masks])
    sums = stack.sum(axis=0)
    if np.any(sums <= 0):
        bad = np.argwhere(sums <= 0)[0]
        raise ShapeError(f"mask memberships sum to zero at pixel ({bad[0]}, {bad[1]})")
    normalized = stack / sums
    return [normalized[i] for i in range(len(masks))]


def composite(region_images: list[np.ndarray], soft_masks: list[np.ndarray]) -> np.ndarray:
    """Per-pixel convex combination: output = sum_r mask_r * image_r."""
    if len(region_images) != len(soft_masks):
        raise ShapeError(
            f"{len(region_images)} region images but {len(soft_masks)} masks"
        )
    if not region_images:
        raise ShapeError("at least one region is required")
    shape = region_images[0].shape
    hw = shape[1:]
    out = np.zeros(shape, dtype=np.float64)
    for img, mask in zip(region_images, soft_masks):
        if img.shape != shape:
            raise ShapeError(f"region image shape {img.shape} != {shape}")
        if mask.shape != hw:
            raise ShapeError(f"mask shape {mask.shape} != image plane {hw}")
        out += np.asarray(mask, dtype=np.float64)[None, :, :] * np.asarray(
            img, dtype=np.float64)
    return out.astype(np.float32)


def style_crop(style_image: np.ndarray, style_mask: np.ndarray) -> np.ndarray:
    """Crop a style image to the bounding box of its mask's positive pixels."""
    mask = np.asarray(style_mask, dtype=np.float64)
    if mask.shape != style_image.shape[1:]:
        raise ShapeError(
            f"style mask shape {mask.shape} != style image plane {style_image.shape[1:]}"
        )
    rows = np.flatnonzero(mask.max(axis=1) > 0.5)
    cols = np.flatnonzero(mask.max(axis=0) > 0.5)
    if rows.size == 0 or cols.size == 0:
        raise ShapeError("style mask selects no pixels")
    return np.ascontiguousarray(
        style_image[:, rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1])


def region_descriptor(entry: RegionStyle, net: NetworkSpec,
                      cfg: SynthesisConfig) -> GramSet:
    if entry.descriptor is not None:
        return entry.descriptor
    if entry.style_image is None:
        raise ShapeError("region entry carries neither a descriptor nor a style image")
    style = entry.style_image
    if entry.style_mask is not None:
        style = style_crop(style, entry.style_mask)
    return style_descriptor(net, style, cfg.layer_indices, cfg.layer_weights)


def per_region_synthesize(content: np.ndarray, regions: list[RegionStyle],
                          net: NetworkSpec, cfg: SynthesisConfig,
                          feather: FeatherParams) -> RegionSynthesisResult:
    """Synthesize the full content image once per region, then blend.

    Masking happens only at composite time: each synthesis runs over the whole
    image so the Gram statistics stay unmodified, and the feathered, normalized
    masks blend the per-region results.
    """
    if not regions:
        raise ShapeError("at least one region is required")
    hw = content.shape[1:]
    binary = []
    for i, entry in enumerate(regions):
        mask = _require_binary(entry.mask, f"region {i} mask")
        if mask.shape != hw:
            raise ShapeError(f"region {i} mask shape {mask.shape} != content plane {hw}")
        binary.append(mask)
    sums = np.stack(binary).sum(axis=0)
    if not np.all(sums == 1.0):
        raise ShapeError("region masks must partition the image (binary sum 1 per pixel)")
    region_images = []
    traces = []
    for entry in regions:
        region_cfg = replace(cfg, **entry.overrides) if entry.overrides else cfg
        target = region_descriptor(entry, net, region_cfg)
        image, trace = synthesize(content, target, net, region_cfg)
        region_images.append(image)
        traces.append(trace)
    feathered = [feather_mask(m, feather) for m in binary]
    soft = normalize_soft_masks(feathered)
    final = composite(region_images, soft)
    return RegionSynthesisResult(
        image=final,
        traces=traces,
        region_images=region_images,
        soft_masks=soft,
    )
