"""Gradient-descent synthesis of an image matching a target Gram descriptor.

Each iteration evaluates the weighted Gram losses, backpropagates the analytic
gradient to the pixels, and takes a backtracking step: the trial step is halved
while the trial loss exceeds the current loss (up to 20 halvings), which keeps
the loss trace non-increasing in practice without hand-tuned rates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError
from .network import NetworkSpec, network_backward, network_forward
from .texture import (
    GramSet,
    flatten_features,
    gram,
    layer_loss,
    layer_loss_gradient,
    total_loss,
)

FIXED_POINT_LOSS = 1e-10
MAX_HALVINGS = 20


class InitMode(enum.Enum):
    CONTENT_IMAGE = "content"
    WHITE_NOISE = "noise"


@dataclass(frozen=True)
class SynthesisConfig:
    layer_indices: tuple
    layer_weights: tuple | None = None  # None -> uniform 1/L
    init_mode: InitMode = InitMode.CONTENT_IMAGE
    step_size: float = 0.02
    max_iterations: int = 500
    convergence_tol: float = 1e-6
    clamp_lo: float = 0.0
    clamp_hi: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_indices", tuple(int(i) for i in self.layer_indices))
        if not self.layer_indices:
            raise ShapeError("at least one style layer is required")
        if self.layer_weights is None:
            uniform = 1.0 / len(self.layer_indices)
            object.__setattr__(self, "layer_weights",
                               tuple(uniform for _ in self.layer_indices))
        else:
            object.__setattr__(self, "layer_weights",
                               tuple(float(w) for w in self.layer_weights))
        if len(self.layer_weights) != len(self.layer_indices):
            raise ShapeError(
                f"{len(self.layer_indices)} layers but {len(self.layer_weights)} weights"
            )
        if any(w < 0 for w in self.layer_weights):
            raise ShapeError("layer weights must be >= 0")
        # step_size 0 is permitted so the bare step primitive can be exercised
        # as an identity; synthesize then stalls and stops on the tolerance.
        if self.step_size < 0:
            raise ShapeError(f"step_size must be >= 0, got {self.step_size}")
        if self.max_iterations < 1:
            raise ShapeError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.convergence_tol < 0:
            raise ShapeError(f"convergence_tol must be >= 0, got {self.convergence_tol}")
        if not self.clamp_lo < self.clamp_hi:
            raise ShapeError(f"clamp range [{self.clamp_lo}, {self.clamp_hi}] is empty")


@dataclass(frozen=True)
class LossSample:
    iteration: int
    total: float
    per_layer: tuple[float, ...]


def init_image(mode: InitMode, content: np.ndarray, seed: int,
               clamp_lo: float = 0.0, clamp_hi: float = 1.0) -> np.ndarray:
    """Copy of the content image, or seeded i.i.d. uniform noise of the same shape."""
    if content is None:
        raise ShapeError("an image is required to define the synthesis shape")
    if mode == InitMode.CONTENT_IMAGE:
        return np.array(content, dtype=np.float32, copy=True)
    rng = np.random.default_rng(seed)
    noise = rng.uniform(clamp_lo, clamp_hi, size=content.shape)
    return noise.astype(np.float32)


def _evaluate(y: np.ndarray, target: GramSet, net: NetworkSpec,
              want_gradient: bool):
    """Loss (and optionally the pixel gradient) of y against the target descriptor.

    Losses normalize with y's own layer sizes, so the analytic gradient stays
    the exact derivative of the evaluated loss even if the style image had a
    different spatial size.
    """
    # overflow surfaces as a NumericalError in the caller, not a warning
    with np.errstate(over="ignore", invalid="ignore"):
        trace = network_forward(net, y)
        per_layer = []
        injected = {}
        for e in target.entries:
            if not 0 <= e.layer_index < len(net.layers):
                raise ShapeError(
                    f"descriptor layer {e.layer_index} out of range [0, {len(net.layers)})"
                )
            f = flatten_features(trace.outputs[e.layer_index])
            if f.shape[0] != e.n_filters:
                raise ShapeError(
                    f"descriptor at layer {e.layer_index} has {e.n_filters} filters, "
                    f"network produces {f.shape[0]}"
                )
            g = gram(f)
            per_layer.append(layer_loss(g, e.gram, f.shape[0], f.shape[1]))
            if want_gradient:
                grad_f = e.weight * layer_loss_gradient(f, g, e.gram)
                injected[e.layer_index] = grad_f.reshape(
                    trace.outputs[e.layer_index].shape).astype(np.float32)
        total = total_loss(per_layer, [e.weight for e in target.entries])
        if not want_gradient:
            return total, per_layer, None
        return total, per_layer, network_backward(net, trace, injected)


def _apply_step(y: np.ndarray, grad: np.ndarray, step: float,
                cfg: SynthesisConfig) -> np.ndarray:
    return np.clip(y - step * grad, cfg.clamp_lo, cfg.clamp_hi)


def synthesis_step(y: np.ndarray, target: GramSet, net: NetworkSpec,
                   cfg: SynthesisConfig) -> tuple[np.ndarray, float]:
    """One plain descent step; returns the clamped update and the pre-step loss."""
    total, _, grad = _evaluate(y, target, net, want_gradient=True)
    return _apply_step(y, grad, cfg.step_size, cfg), total


def synthesize(content: np.ndarray, target: GramSet, net: NetworkSpec,
               cfg: SynthesisConfig) -> tuple[np.ndarray, list[LossSample]]:
    """Iterate backtracking descent steps until convergence or max_iterations.

    Stops early at a fixed point (loss <= 1e-10) or when the loss change drops
    below convergence_tol relative to the previous loss. Returns the final
    image and the full per-iteration loss trace.
    """
    if tuple(cfg.layer_indices) != target.layer_indices:
        raise ShapeError(
            f"config selects layers {tuple(cfg.layer_indices)} but the descriptor "
            f"carries {target.layer_indices}"
        )
    y = init_image(cfg.init_mode, content, cfg.rng_seed, cfg.clamp_lo, cfg.clamp_hi)
    rows: list[LossSample] = []
    prev_total = None
    for it in range(cfg.max_iterations):
        total, per_layer, grad = _evaluate(y, target, net, want_gradient=True)
        if not math.isfinite(total):
            raise NumericalError(f"loss became non-finite at iteration {it}")
        rows.append(LossSample(iteration=it, total=total, per_layer=tuple(per_layer)))
        if total <= FIXED_POINT_LOSS:
            break
        if prev_total is not None and abs(total - prev_total) <= (
                cfg.convergence_tol * max(1.0, prev_total)):
            break
        step = cfg.step_size
        y_try = _apply_step(y, grad, step, cfg)
        try_total = _evaluate(y_try, target, net, want_gradient=False)[0]
        halvings = 0
        while (not math.isfinite(try_total) or try_total > total) and halvings < MAX_HALVINGS:
            step *= 0.5
            halvings += 1
            y_try = _apply_step(y, grad, step, cfg)
            try_total = _evaluate(y_try, target, net, want_gradient=False)[0]
        y = y_try
        prev_total = total
    return y, rows


def format_trace_csv(trace: list[LossSample]) -> str:
    """CSV with header iter,total,E_l0,... and 9 significant digits per value."""
    if trace:
        n_layers = len(trace[0].per_layer)
    else:
        n_layers = 0
    header = "iter,total" + "".join(f",E_l{i}" for i in range(n_layers))
    lines = [header]
    for row in trace:
        cells = [str(row.iteration), f"{row.total:.9g}"]
        cells.extend(f"{v:.9g}" for v in row.per_layer)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_trace_csv(trace: list[LossSample], path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_trace_csv(trace))
