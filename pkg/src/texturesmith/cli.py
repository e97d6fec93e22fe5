"""Command-line entry points: run, segment, gram.

Exit codes: 0 success, 1 config error, 2 I/O or format error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import parse_config
from .errors import ConfigError, FormatError, NumericalError, PipelineError, TextureSmithError
from .imageio import load_image, save_mask
from .network import load_weights
from .pipeline import _labeled_path, _resolve, _segmentation_masks, run_pipeline
from .texture import serialize_gram_set, style_descriptor

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="texturesmith")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full pipeline: segment, synthesize, composite")
    run.add_argument("--config", required=True)
    run.add_argument("--out-dir", default=None)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--verbose", action="store_true")

    segment = sub.add_parser("segment", help="stop after writing segmentation masks")
    segment.add_argument("--config", required=True)

    gram = sub.add_parser("gram", help="compute and store a style descriptor")
    gram.add_argument("--style", required=True)
    gram.add_argument("--weights", required=True)
    gram.add_argument("--layers", required=True, help="comma-separated layer indices")
    gram.add_argument("--out", required=True)
    return parser


def _load_config(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read()), os.path.dirname(os.path.abspath(path))


def _cmd_run(args) -> int:
    cfg, cfg_dir = _load_config(args.config)
    report = run_pipeline(cfg, input_dir=cfg_dir, out_dir=args.out_dir,
                          rng_seed=args.seed)
    if args.verbose:
        print(json.dumps(report.as_dict(), indent=2))
    else:
        losses = ", ".join(f"{v:.6g}" for v in report.region_losses)
        print(f"wrote {report.output_paths[0]} (region losses: {losses})")
    return EXIT_OK


def _cmd_segment(args) -> int:
    cfg, cfg_dir = _load_config(args.config)
    if cfg.out_masks is None:
        raise ConfigError("segment requires out.masks in the config")
    content = load_image(_resolve(cfg_dir, cfg.content))
    masks = _segmentation_masks(cfg, content, cfg_dir)
    for label, mask in enumerate(masks):
        path = _resolve(cfg_dir, _labeled_path(cfg.out_masks, label, len(masks),
                                               "out.masks"))
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        save_mask(mask, path)
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_gram(args) -> int:
    try:
        layers = [int(p) for p in args.layers.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"--layers expects comma-separated integers, got '{args.layers}'")
    if not layers:
        raise ConfigError("--layers lists no layer indices")
    style = load_image(args.style)
    with open(args.weights, "rb") as fh:
        net = load_weights(fh.read())
    weights = [1.0 / len(layers)] * len(layers)
    descriptor = style_descriptor(net, style, layers, weights)
    with open(args.out, "wb") as fh:
        fh.write(serialize_gram_set(descriptor))
    print(f"wrote {args.out}")
    return EXIT_OK


def _exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PipelineError):
        return _exit_code_for(exc.cause)
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, (FormatError, OSError)):
        return EXIT_IO
    return EXIT_CONFIG


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "segment": _cmd_segment, "gram": _cmd_gram}
    try:
        return handlers[args.command](args)
    except (TextureSmithError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
