"""Flat key = value pipeline configuration.

Format: one `key = value` per line; `#` starts a comment; blank lines are
ignored. Keys:

    content                      content image path (required)
    style.<label>                style image path per region label (>= 1 required)
    style_mask.<label>           optional style-side mask image per label
    weights                      TXSW weights file  } exactly one
    test_net.seed/.depth/.channels   seeded test net } network source
    unary                        UNRY unary file      }
    seeds.fg / seeds.bg          "r,c; r,c; ..." seed pixels } exactly one
    mask                         external binary mask image  } segmentation source
    crf.w_app crf.theta_alpha crf.theta_beta crf.w_smooth crf.theta_gamma crf.iters
    synth.layers                 csv of style layer indices (default: post-relu layers)
    synth.weights                csv of layer weights (default: uniform)
    synth.init                   content | noise
    synth.step synth.max_iters synth.tol
    feather.radius
    out.image                    final image path (required)
    out.masks                    mask path template containing {label}
    out.trace                    loss CSV path template containing {label}
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConfigError

_INT_RE = re.compile(r"^[+-]?\d+$")

CRF_DEFAULTS = {
    "crf.w_app": 3.0,
    "crf.theta_alpha": 8.0,
    "crf.theta_beta": 0.1,
    "crf.w_smooth": 1.0,
    "crf.theta_gamma": 3.0,
}
DEFAULT_CRF_ITERS = 5
DEFAULT_SEED_SIGMA = 0.1  # color-model stddev; not a config key
DEFAULT_SYNTH_STEP = 0.02
DEFAULT_SYNTH_MAX_ITERS = 500
DEFAULT_SYNTH_TOL = 1e-6
DEFAULT_FEATHER_RADIUS = 2


@dataclass(eq=True)
class PipelineConfig:
    content: str
    styles: dict[int, str]
    out_image: str
    style_masks: dict[int, str] = field(default_factory=dict)
    weights: str | None = None
    test_net_seed: int | None = None
    test_net_depth: int | None = None
    test_net_channels: int | None = None
    unary: str | None = None
    fg_seeds: tuple[tuple[int, int], ...] | None = None
    bg_seeds: tuple[tuple[int, int], ...] | None = None
    mask: str | None = None
    crf_w_app: float = CRF_DEFAULTS["crf.w_app"]
    crf_theta_alpha: float = CRF_DEFAULTS["crf.theta_alpha"]
    crf_theta_beta: float = CRF_DEFAULTS["crf.theta_beta"]
    crf_w_smooth: float = CRF_DEFAULTS["crf.w_smooth"]
    crf_theta_gamma: float = CRF_DEFAULTS["crf.theta_gamma"]
    crf_iters: int = DEFAULT_CRF_ITERS
    synth_layers: tuple[int, ...] | None = None
    synth_weights: tuple[float, ...] | None = None
    synth_init: str = "content"
    synth_step: float = DEFAULT_SYNTH_STEP
    synth_max_iters: int = DEFAULT_SYNTH_MAX_ITERS
    synth_tol: float = DEFAULT_SYNTH_TOL
    feather_radius: int = DEFAULT_FEATHER_RADIUS
    out_masks: str | None = None
    out_trace: str | None = None

    @property
    def uses_test_net(self) -> bool:
        return self.test_net_seed is not None


def _parse_int(raw: str, key: str, line_no: int) -> int:
    if not _INT_RE.match(raw):
        raise ConfigError(f"line {line_no}: key '{key}' expects an integer, got '{raw}'")
    return int(raw)


def _parse_float(raw: str, key: str, line_no: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(
            f"line {line_no}: key '{key}' expects a number, got '{raw}'") from None


def _parse_seed_list(raw: str, key: str, line_no: int) -> tuple[tuple[int, int], ...]:
    seeds = []
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            continue
        pieces = [p.strip() for p in part.split(",")]
        if len(pieces) != 2 or not all(_INT_RE.match(p) for p in pieces):
            raise ConfigError(
                f"line {line_no}: key '{key}' expects 'row,col; row,col; ...', got '{part}'"
            )
        seeds.append((int(pieces[0]), int(pieces[1])))
    if not seeds:
        raise ConfigError(f"line {line_no}: key '{key}' lists no seed pixels")
    return tuple(seeds)


def _parse_int_csv(raw: str, key: str, line_no: int) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts or not all(_INT_RE.match(p) for p in parts):
        raise ConfigError(
            f"line {line_no}: key '{key}' expects comma-separated integers, got '{raw}'"
        )
    return tuple(int(p) for p in parts)


def _parse_float_csv(raw: str, key: str, line_no: int) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(
            f"line {line_no}: key '{key}' expects comma-separated numbers, got '{raw}'"
        ) from None


_SCALAR_KEYS = {
    "content", "weights", "unary", "mask",
    "test_net.seed", "test_net.depth", "test_net.channels",
    "seeds.fg", "seeds.bg",
    "crf.w_app", "crf.theta_alpha", "crf.theta_beta", "crf.w_smooth",
    "crf.theta_gamma", "crf.iters",
    "synth.layers", "synth.weights", "synth.init", "synth.step",
    "synth.max_iters", "synth.tol",
    "feather.radius",
    "out.image", "out.masks", "out.trace",
}
_LABELED_PREFIXES = ("style.", "style_mask.")


def _split_lines(text: str) -> list[tuple[int, str, str]]:
    """Yield (line_no, key, value) triples; report syntax errors with line numbers."""
    triples = []
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got '{raw_line.strip()}'")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {line_no}: empty key")
        triples.append((line_no, key, value))
    return triples


def _labeled_key(key: str, line_no: int) -> tuple[str, int] | None:
    for prefix in _LABELED_PREFIXES:
        if key.startswith(prefix):
            suffix = key[len(prefix):]
            if not _INT_RE.match(suffix) or int(suffix) < 0:
                raise ConfigError(
                    f"line {line_no}: key '{key}' needs a non-negative integer label"
                )
            return prefix, int(suffix)
    return None


def parse_config(text: str) -> PipelineConfig:
    """Parse config text; unknown keys, duplicates, and missing keys are errors."""
    raw: dict[str, tuple[int, str]] = {}
    styles: dict[int, str] = {}
    style_masks: dict[int, str] = {}
    unknown: list[str] = []
    for line_no, key, value in _split_lines(text):
        labeled = _labeled_key(key, line_no)
        if labeled is not None:
            prefix, label = labeled
            bucket = styles if prefix == "style." else style_masks
            if label in bucket:
                raise ConfigError(f"line {line_no}: duplicate key '{key}'")
            if not value:
                raise ConfigError(f"line {line_no}: key '{key}' has an empty value")
            bucket[label] = value
            continue
        if key not in _SCALAR_KEYS:
            unknown.append(f"'{key}' (line {line_no})")
            continue
        if key in raw:
            raise ConfigError(f"line {line_no}: duplicate key '{key}'")
        raw[key] = (line_no, value)
    if unknown:
        raise ConfigError("unknown keys: " + ", ".join(unknown))

    missing = [k for k in ("content", "out.image") if k not in raw]
    if not styles:
        missing.append("style.<label>")
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))

    def get_str(key: str) -> str | None:
        if key not in raw:
            return None
        line_no, value = raw[key]
        if not value:
            raise ConfigError(f"line {line_no}: key '{key}' has an empty value")
        return value

    def get_int(key: str, default: int | None) -> int | None:
        if key not in raw:
            return default
        line_no, value = raw[key]
        return _parse_int(value, key, line_no)

    def get_float(key: str, default: float) -> float:
        if key not in raw:
            return default
        line_no, value = raw[key]
        return _parse_float(value, key, line_no)

    test_net_keys = [k for k in ("test_net.seed", "test_net.depth", "test_net.channels")
                     if k in raw]
    if test_net_keys and len(test_net_keys) != 3:
        raise ConfigError(
            "test_net needs all of test_net.seed, test_net.depth, test_net.channels"
        )
    net_sources = int("weights" in raw) + int(bool(test_net_keys))
    if net_sources != 1:
        raise ConfigError(
            "exactly one network source is required: 'weights' or the test_net.* keys"
        )

    seed_keys = [k for k in ("seeds.fg", "seeds.bg") if k in raw]
    if seed_keys and len(seed_keys) != 2:
        raise ConfigError("seed segmentation needs both seeds.fg and seeds.bg")
    seg_sources = int("unary" in raw) + int(bool(seed_keys)) + int("mask" in raw)
    if seg_sources != 1:
        raise ConfigError(
            "exactly one segmentation source is required: 'unary', 'seeds.fg'+'seeds.bg', "
            "or 'mask'"
        )

    synth_init = "content"
    if "synth.init" in raw:
        line_no, value = raw["synth.init"]
        if value not in ("content", "noise"):
            raise ConfigError(
                f"line {line_no}: synth.init must be 'content' or 'noise', got '{value}'"
            )
        synth_init = value

    synth_layers = None
    if "synth.layers" in raw:
        line_no, value = raw["synth.layers"]
        synth_layers = _parse_int_csv(value, "synth.layers", line_no)
    synth_weights = None
    if "synth.weights" in raw:
        line_no, value = raw["synth.weights"]
        synth_weights = _parse_float_csv(value, "synth.weights", line_no)

    fg_seeds = bg_seeds = None
    if seed_keys:
        line_no, value = raw["seeds.fg"]
        fg_seeds = _parse_seed_list(value, "seeds.fg", line_no)
        line_no, value = raw["seeds.bg"]
        bg_seeds = _parse_seed_list(value, "seeds.bg", line_no)

    for label in style_masks:
        if label not in styles:
            raise ConfigError(f"style_mask.{label} has no matching style.{label}")

    return PipelineConfig(
        content=get_str("content"),
        styles=styles,
        style_masks=style_masks,
        out_image=get_str("out.image"),
        weights=get_str("weights"),
        test_net_seed=get_int("test_net.seed", None),
        test_net_depth=get_int("test_net.depth", None),
        test_net_channels=get_int("test_net.channels", None),
        unary=get_str("unary"),
        fg_seeds=fg_seeds,
        bg_seeds=bg_seeds,
        mask=get_str("mask"),
        crf_w_app=get_float("crf.w_app", CRF_DEFAULTS["crf.w_app"]),
        crf_theta_alpha=get_float("crf.theta_alpha", CRF_DEFAULTS["crf.theta_alpha"]),
        crf_theta_beta=get_float("crf.theta_beta", CRF_DEFAULTS["crf.theta_beta"]),
        crf_w_smooth=get_float("crf.w_smooth", CRF_DEFAULTS["crf.w_smooth"]),
        crf_theta_gamma=get_float("crf.theta_gamma", CRF_DEFAULTS["crf.theta_gamma"]),
        crf_iters=get_int("crf.iters", DEFAULT_CRF_ITERS),
        synth_layers=synth_layers,
        synth_weights=synth_weights,
        synth_init=synth_init,
        synth_step=get_float("synth.step", DEFAULT_SYNTH_STEP),
        synth_max_iters=get_int("synth.max_iters", DEFAULT_SYNTH_MAX_ITERS),
        synth_tol=get_float("synth.tol", DEFAULT_SYNTH_TOL),
        feather_radius=get_int("feather.radius", DEFAULT_FEATHER_RADIUS),
        out_masks=get_str("out.masks"),
        out_trace=get_str("out.trace"),
    )


def emit_config(cfg: PipelineConfig) -> str:
    """Write a config back out as key = value text; parse(emit(cfg)) == cfg."""
    lines = [f"content = {cfg.content}"]
    for label in sorted(cfg.styles):
        lines.append(f"style.{label} = {cfg.styles[label]}")
    for label in sorted(cfg.style_masks):
        lines.append(f"style_mask.{label} = {cfg.style_masks[label]}")
    if cfg.weights is not None:
        lines.append(f"weights = {cfg.weights}")
    if cfg.test_net_seed is not None:
        lines.append(f"test_net.seed = {cfg.test_net_seed}")
        lines.append(f"test_net.depth = {cfg.test_net_depth}")
        lines.append(f"test_net.channels = {cfg.test_net_channels}")
    if cfg.unary is not None:
        lines.append(f"unary = {cfg.unary}")
    if cfg.fg_seeds is not None:
        lines.append("seeds.fg = " + "; ".join(f"{r},{c}" for r, c in cfg.fg_seeds))
        lines.append("seeds.bg = " + "; ".join(f"{r},{c}" for r, c in cfg.bg_seeds))
    if cfg.mask is not None:
        lines.append(f"mask = {cfg.mask}")
    lines.append(f"crf.w_app = {cfg.crf_w_app!r}")
    lines.append(f"crf.theta_alpha = {cfg.crf_theta_alpha!r}")
    lines.append(f"crf.theta_beta = {cfg.crf_theta_beta!r}")
    lines.append(f"crf.w_smooth = {cfg.crf_w_smooth!r}")
    lines.append(f"crf.theta_gamma = {cfg.crf_theta_gamma!r}")
    lines.append(f"crf.iters = {cfg.crf_iters}")
    if cfg.synth_layers is not None:
        lines.append("synth.layers = " + ",".join(str(i) for i in cfg.synth_layers))
    if cfg.synth_weights is not None:
        lines.append("synth.weights = " + ",".join(repr(w) for w in cfg.synth_weights))
    lines.append(f"synth.init = {cfg.synth_init}")
    lines.append(f"synth.step = {cfg.synth_step!r}")
    lines.append(f"synth.max_iters = {cfg.synth_max_iters}")
    lines.append(f"synth.tol = {cfg.synth_tol!r}")
    lines.append(f"feather.radius = {cfg.feather_radius}")
    lines.append(f"out.image = {cfg.out_image}")
    if cfg.out_masks is not None:
        lines.append(f"out.masks = {cfg.out_masks}")
    if cfg.out_trace is not None:
        lines.append(f"out.trace = {cfg.out_trace}")
    return "\n".join(lines) + "\n"
