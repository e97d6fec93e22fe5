"""End-to-end orchestration: segment, match styles per region, synthesize, composite."""

from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass, field

import numpy as np

from ._binary import pack_f32_array, pack_u32
from .compositing import FeatherParams, RegionStyle, per_region_synthesize
from .config import DEFAULT_SEED_SIGMA, PipelineConfig
from .errors import ConfigError, FormatError, PipelineError, ShapeError
from .imageio import load_binary_mask, load_image, save_image, save_mask
from .network import NetworkSpec, save_weights, load_weights, seeded_test_network
from .segmentation import PairwiseParams, color_model_unary, load_unary, run_crf
from .synthesis import InitMode, SynthesisConfig, write_trace_csv
from .texture import GramSet, default_style_layers, parse_gram_set, serialize_gram_set, style_descriptor

CACHE_ENV_VAR = "TEXTURESMITH_CACHE_DIR"


@dataclass(eq=False)
class RunReport:
    timings_ms: dict[str, float] = field(default_factory=dict)
    region_losses: list[float] = field(default_factory=list)
    mask_pixel_counts: list[int] = field(default_factory=list)
    cache_hits: list[bool] = field(default_factory=list)
    config_echo: str = ""
    output_paths: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "timings_ms": dict(self.timings_ms),
            "region_losses": list(self.region_losses),
            "mask_pixel_counts": list(self.mask_pixel_counts),
            "cache_hits": list(self.cache_hits),
            "output_paths": list(self.output_paths),
            "config": self.config_echo,
        }


def descriptor_cache_key(style_image: np.ndarray, net: NetworkSpec,
                         layer_indices, layer_weights) -> str:
    """Content address: style tensor bytes + serialized weights + layer list."""
    h = hashlib.sha256()
    style = np.ascontiguousarray(style_image, dtype="<f4")
    for dim in style.shape:
        h.update(pack_u32(dim))
    h.update(style.tobytes())
    h.update(save_weights(net))
    h.update(pack_u32(len(tuple(layer_indices))))
    for i in layer_indices:
        h.update(pack_u32(int(i)))
    h.update(pack_f32_array(np.asarray(layer_weights, dtype=np.float64)))
    return h.hexdigest()


def cache_descriptor(style_image: np.ndarray, net: NetworkSpec, layer_indices,
                     layer_weights, cache_dir) -> tuple[GramSet, bool]:
    """Disk-backed style descriptor; returns (gram set, cache hit flag).

    Results round-trip through the TXSG serialization on a miss too, so the
    values are identical whether or not the cache was already populated.
    Corrupt cache entries are recomputed and overwritten.
    """
    key = descriptor_cache_key(style_image, net, layer_indices, layer_weights)
    path = os.path.join(str(cache_dir), key + ".txsg")
    if os.path.exists(path):
        try:
            with open(path, "rb") as fh:
                return parse_gram_set(fh.read()), True
        except FormatError:
            pass
    gram_set = style_descriptor(net, style_image, layer_indices, layer_weights)
    blob = serialize_gram_set(gram_set)
    os.makedirs(str(cache_dir), exist_ok=True)
    tmp_path = path + ".tmp"
    with open(tmp_path, "wb") as fh:
        fh.write(blob)
    os.replace(tmp_path, path)
    return parse_gram_set(blob), False


class _Stage:
    """Times a stage and rewraps its errors with the stage name."""

    def __init__(self, report: RunReport, name: str):
        self.report = report
        self.name = name

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.report.timings_ms[self.name] = (time.perf_counter() - self._start) * 1e3
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


def _resolve(base_dir: str | None, path: str) -> str:
    if base_dir is None or os.path.isabs(path):
        return path
    return os.path.join(base_dir, path)


def _labeled_path(template: str, label: int, n_regions: int, key: str) -> str:
    if "{label}" in template:
        return template.replace("{label}", str(label))
    if n_regions == 1:
        return template
    raise ConfigError(f"{key} needs a {{label}} placeholder for {n_regions} regions")


def _region_image_path(out_image: str, label: int) -> str:
    stem, suffix = os.path.splitext(out_image)
    return f"{stem}.region{label}{suffix}"


def _build_network(cfg: PipelineConfig, input_dir: str | None) -> NetworkSpec:
    if cfg.weights is not None:
        with open(_resolve(input_dir, cfg.weights), "rb") as fh:
            return load_weights(fh.read())
    return seeded_test_network(cfg.test_net_seed, cfg.test_net_depth, cfg.test_net_channels)


def _segmentation_masks(cfg: PipelineConfig, content: np.ndarray,
                        input_dir: str | None) -> list[np.ndarray]:
    n_styles = len(cfg.styles)
    if cfg.mask is not None:
        mask = load_binary_mask(_resolve(input_dir, cfg.mask))
        if mask.shape != content.shape[1:]:
            raise ShapeError(
                f"external mask shape {mask.shape} != content plane {content.shape[1:]}"
            )
        if n_styles == 1:
            return [mask]  # partition check later demands an all-ones mask
        if n_styles == 2:
            return [1.0 - mask, mask]
        raise ConfigError(
            f"external-mask segmentation supports 1 or 2 styles, got {n_styles}"
        )
    if cfg.unary is not None:
        with open(_resolve(input_dir, cfg.unary), "rb") as fh:
            unary = load_unary(fh.read())
        if unary.shape[:2] != content.shape[1:]:
            raise ShapeError(
                f"unary grid {unary.shape[:2]} != content plane {content.shape[1:]}"
            )
    else:
        unary = color_model_unary(content, cfg.fg_seeds, cfg.bg_seeds, DEFAULT_SEED_SIGMA)
    params = PairwiseParams(
        w_appearance=cfg.crf_w_app,
        theta_alpha=cfg.crf_theta_alpha,
        theta_beta=cfg.crf_theta_beta,
        w_smooth=cfg.crf_w_smooth,
        theta_gamma=cfg.crf_theta_gamma,
    )
    masks, _ = run_crf(unary, content, params, cfg.crf_iters)
    return masks


def _check_styles_cover(cfg: PipelineConfig, n_regions: int) -> None:
    expected = set(range(n_regions))
    if set(cfg.styles) != expected:
        raise ConfigError(
            f"segmentation produced {n_regions} regions; config must define exactly "
            f"style.0 .. style.{n_regions - 1}, got {sorted(cfg.styles)}"
        )


def run_pipeline(cfg: PipelineConfig, input_dir: str | None = None,
                 out_dir: str | None = None, rng_seed: int = 0,
                 cache_dir: str | None = None) -> RunReport:
    """Run segment -> per-region style match -> synthesize -> composite.

    Relative input paths resolve against input_dir, outputs against out_dir
    (falling back to input_dir). Every failure is rewrapped with its stage
    name, and any outputs already written are removed.
    """
    from .config import emit_config

    report = RunReport(config_echo=emit_config(cfg))
    if out_dir is None:
        out_dir = input_dir
    if cache_dir is None:
        cache_dir = os.environ.get(CACHE_ENV_VAR)
    if cache_dir is None:
        cache_dir = os.path.join(
            os.path.dirname(os.path.abspath(_resolve(out_dir, cfg.out_image))),
            ".texturesmith-cache",
        )
    written: list[str] = []
    try:
        with _Stage(report, "load-inputs"):
            content = load_image(_resolve(input_dir, cfg.content))
            styles = {label: load_image(_resolve(input_dir, path))
                      for label, path in sorted(cfg.styles.items())}
            style_masks = {label: load_binary_mask(_resolve(input_dir, path))
                           for label, path in sorted(cfg.style_masks.items())}

        with _Stage(report, "network"):
            net = _build_network(cfg, input_dir)
            if net.input_channels != content.shape[0]:
                raise ShapeError(
                    f"network expects {net.input_channels} channels, content has "
                    f"{content.shape[0]}"
                )

        with _Stage(report, "segmentation"):
            masks = _segmentation_masks(cfg, content, input_dir)
            _check_styles_cover(cfg, len(masks))
            report.mask_pixel_counts = [int(m.sum()) for m in masks]

        with _Stage(report, "style-descriptors"):
            layer_indices = (tuple(cfg.synth_layers) if cfg.synth_layers is not None
                             else tuple(default_style_layers(net)))
            synth_cfg = SynthesisConfig(
                layer_indices=layer_indices,
                layer_weights=cfg.synth_weights,
                init_mode=(InitMode.CONTENT_IMAGE if cfg.synth_init == "content"
                           else InitMode.WHITE_NOISE),
                step_size=cfg.synth_step,
                max_iterations=cfg.synth_max_iters,
                convergence_tol=cfg.synth_tol,
                rng_seed=rng_seed,
            )
            regions = []
            for label in range(len(masks)):
                style = styles[label]
                if label in style_masks:
                    from .compositing import style_crop
                    style = style_crop(style, style_masks[label])
                descriptor, hit = cache_descriptor(
                    style, net, synth_cfg.layer_indices, synth_cfg.layer_weights,
                    cache_dir)
                report.cache_hits.append(hit)
                regions.append(RegionStyle(mask=masks[label], descriptor=descriptor))

        with _Stage(report, "synthesis"):
            result = per_region_synthesize(
                content, regions, net, synth_cfg, FeatherParams(cfg.feather_radius))
            report.region_losses = [trace[-1].total for trace in result.traces]

        with _Stage(report, "write-outputs"):
            out_image = _resolve(out_dir, cfg.out_image)
            _write_tracked(written, save_image, result.image, out_image)
            for label, region_image in enumerate(result.region_images):
                _write_tracked(written, save_image, region_image,
                               _region_image_path(out_image, label))
            if cfg.out_masks is not None:
                for label, mask in enumerate(masks):
                    path = _resolve(out_dir, _labeled_path(
                        cfg.out_masks, label, len(masks), "out.masks"))
                    _write_tracked(written, save_mask, mask, path)
            if cfg.out_trace is not None:
                for label, trace in enumerate(result.traces):
                    path = _resolve(out_dir, _labeled_path(
                        cfg.out_trace, label, len(masks), "out.trace"))
                    _write_tracked(written, write_trace_csv, trace, path)
            report.output_paths = list(written)
    except PipelineError:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise
    return report


def _write_tracked(written: list[str], writer, payload, path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    writer(payload, path)
    written.append(path)
