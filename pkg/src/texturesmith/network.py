"""Minimal convolutional network with hand-written forward and backward passes.

Images and activations are float32 arrays of shape (channels, height, width).
Weights are fixed during synthesis, so the backward pass propagates input
gradients only; weight gradients are never computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from ._binary import Reader, pack_f32_array, pack_u32
from .errors import (
    BadMagicError,
    ChannelChainError,
    FormatError,
    ShapeError,
    TruncatedStreamError,
    UnsupportedVersionError,
)

WEIGHTS_MAGIC = b"TXSW"
WEIGHTS_VERSION = 1


class LayerKind(IntEnum):
    CONV = 0
    RELU = 1
    AVGPOOL = 2


@dataclass(eq=False)
class LayerSpec:
    kind: LayerKind
    out_channels: int = 0
    in_channels: int = 0
    kernel_h: int = 0
    kernel_w: int = 0
    stride: int = 1
    padding: int = 0
    weights: np.ndarray | None = None  # (out, in, kh, kw) float32
    bias: np.ndarray | None = None  # (out,) float32
    window: int = 0  # avgpool only

    @classmethod
    def conv(cls, weights, bias, stride: int = 1, padding: int = 0) -> "LayerSpec":
        weights = np.ascontiguousarray(weights, dtype=np.float32)
        bias = np.ascontiguousarray(bias, dtype=np.float32)
        if weights.ndim != 4:
            raise ShapeError(f"conv weights must be 4-d (out, in, kh, kw), got {weights.shape}")
        out_c, in_c, kh, kw = weights.shape
        if bias.shape != (out_c,):
            raise ShapeError(f"conv bias must have shape ({out_c},), got {bias.shape}")
        if stride < 1 or padding < 0:
            raise ShapeError(f"conv needs stride >= 1 and padding >= 0, got {stride}, {padding}")
        if min(out_c, in_c, kh, kw) < 1:
            raise ShapeError(f"conv dimensions must be positive, got {weights.shape}")
        return cls(
            kind=LayerKind.CONV,
            out_channels=out_c,
            in_channels=in_c,
            kernel_h=kh,
            kernel_w=kw,
            stride=stride,
            padding=padding,
            weights=weights,
            bias=bias,
        )

    @classmethod
    def relu(cls) -> "LayerSpec":
        return cls(kind=LayerKind.RELU)

    @classmethod
    def avgpool(cls, window: int, stride: int) -> "LayerSpec":
        if window < 1 or stride < 1:
            raise ShapeError(f"avgpool needs window, stride >= 1, got {window}, {stride}")
        return cls(kind=LayerKind.AVGPOOL, window=window, stride=stride)


@dataclass(eq=False)
class NetworkSpec:
    """Ordered layer list; conv channel counts must chain from input_channels."""

    layers: list[LayerSpec]
    input_channels: int

    def __post_init__(self):
        carried = self.input_channels
        for i, layer in enumerate(self.layers):
            if layer.kind == LayerKind.CONV:
                if layer.in_channels != carried:
                    raise ChannelChainError(
                        f"layer {i}: conv expects {layer.in_channels} input channels, "
                        f"chain carries {carried}"
                    )
                carried = layer.out_channels


@dataclass(eq=False)
class ActivationTrace:
    """Per-layer outputs of network_forward, plus the input the pass started from."""

    input: np.ndarray
    outputs: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.outputs)


def _conv_out_dims(h: int, w: int, layer: LayerSpec) -> tuple[int, int]:
    ho = (h + 2 * layer.padding - layer.kernel_h) // layer.stride + 1
    wo = (w + 2 * layer.padding - layer.kernel_w) // layer.stride + 1
    return ho, wo


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if pad > 0:
        xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        xp[:, pad:pad + h, pad:pad + w] = x
    else:
        xp = x
    cols = np.empty((c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(c * kh * kw, ho * wo)


def _col2im(cols: np.ndarray, c: int, h: int, w: int, kh: int, kw: int,
            stride: int, pad: int, ho: int, wo: int) -> np.ndarray:
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols = cols.reshape(c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, i, j]
    if pad > 0:
        return np.ascontiguousarray(xp[:, pad:pad + h, pad:pad + w])
    return xp


def _layer_name(layer_index: int | None) -> str:
    return "conv" if layer_index is None else f"conv at layer {layer_index}"


def conv2d_forward(x: np.ndarray, layer: LayerSpec, layer_index: int | None = None) -> np.ndarray:
    """2-d convolution with zero padding; output = bias + sum(weights * receptive field)."""
    if layer.kind != LayerKind.CONV:
        raise ShapeError(f"{_layer_name(layer_index)}: layer is not a conv")
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != layer.in_channels:
        raise ShapeError(
            f"{_layer_name(layer_index)}: expected {layer.in_channels} input channels, "
            f"got shape {x.shape}"
        )
    h, w = x.shape[1], x.shape[2]
    ho, wo = _conv_out_dims(h, w, layer)
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"{_layer_name(layer_index)}: kernel {layer.kernel_h}x{layer.kernel_w} with "
            f"stride {layer.stride}, pad {layer.padding} does not fit input {h}x{w}"
        )
    cols = _im2col(x, layer.kernel_h, layer.kernel_w, layer.stride, layer.padding)
    w2 = layer.weights.reshape(layer.out_channels, -1)
    out = w2 @ cols + layer.bias[:, None]
    return out.reshape(layer.out_channels, ho, wo)


def conv2d_backward_input(grad_out: np.ndarray, layer: LayerSpec, input_hw: tuple[int, int],
                          layer_index: int | None = None) -> np.ndarray:
    """Adjoint of conv2d_forward with respect to the input (weights stay fixed).

    input_hw is the spatial size of the forward input; with stride > 1 it is
    not recoverable from the output shape alone.
    """
    if layer.kind != LayerKind.CONV:
        raise ShapeError(f"{_layer_name(layer_index)}: layer is not a conv")
    grad_out = np.ascontiguousarray(grad_out, dtype=np.float32)
    h, w = input_hw
    ho, wo = _conv_out_dims(h, w, layer)
    if grad_out.shape != (layer.out_channels, ho, wo):
        raise ShapeError(
            f"{_layer_name(layer_index)}: gradient shape {grad_out.shape} does not match "
            f"forward output ({layer.out_channels}, {ho}, {wo})"
        )
    w2 = layer.weights.reshape(layer.out_channels, -1)
    cols_grad = w2.T @ grad_out.reshape(layer.out_channels, -1)
    return _col2im(cols_grad, layer.in_channels, h, w, layer.kernel_h, layer.kernel_w,
                   layer.stride, layer.padding, ho, wo)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, np.float32(0.0))


def relu_backward(grad_out: np.ndarray, forward_input: np.ndarray) -> np.ndarray:
    """Pass the gradient only where the forward input was strictly positive."""
    if grad_out.shape != forward_input.shape:
        raise ShapeError(
            f"relu gradient shape {grad_out.shape} != forward input shape {forward_input.shape}"
        )
    return np.where(forward_input > 0, grad_out, np.float32(0.0)).astype(np.float32, copy=False)


def avgpool_forward(x: np.ndarray, window: int, stride: int,
                    layer_index: int | None = None) -> np.ndarray:
    if window < 1 or stride < 1:
        raise ShapeError(f"avgpool needs window, stride >= 1, got {window}, {stride}")
    x = np.ascontiguousarray(x, dtype=np.float32)
    c, h, w = x.shape
    if window > h or window > w:
        raise ShapeError(
            f"avgpool window {window} larger than input {h}x{w}"
            + ("" if layer_index is None else f" at layer {layer_index}")
        )
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    acc = np.zeros((c, ho, wo), dtype=np.float32)
    for i in range(window):
        for j in range(window):
            acc += x[:, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return acc / np.float32(window * window)


def avgpool_backward(grad_out: np.ndarray, input_hw: tuple[int, int], window: int,
                     stride: int) -> np.ndarray:
    """Adjoint of avgpool_forward: spread grad_out / window^2 over each window."""
    grad_out = np.ascontiguousarray(grad_out, dtype=np.float32)
    c, ho, wo = grad_out.shape
    h, w = input_hw
    if window > h or window > w:
        raise ShapeError(f"avgpool window {window} larger than input {h}x{w}")
    if ho != (h - window) // stride + 1 or wo != (w - window) // stride + 1:
        raise ShapeError(
            f"avgpool gradient shape {grad_out.shape} does not match input {h}x{w}"
        )
    g = np.zeros((c, h, w), dtype=np.float32)
    spread = grad_out / np.float32(window * window)
    for i in range(window):
        for j in range(window):
            g[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += spread
    return g


def network_forward(net: NetworkSpec, image: np.ndarray) -> ActivationTrace:
    """Run every layer in order, retaining each output for the backward sweep."""
    image = np.ascontiguousarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[0] != net.input_channels:
        raise ShapeError(
            f"network expects {net.input_channels} input channels, got shape {image.shape}"
        )
    trace = ActivationTrace(input=image)
    x = image
    for i, layer in enumerate(net.layers):
        if layer.kind == LayerKind.CONV:
            x = conv2d_forward(x, layer, layer_index=i)
        elif layer.kind == LayerKind.RELU:
            x = relu_forward(x)
        else:
            x = avgpool_forward(x, layer.window, layer.stride, layer_index=i)
        trace.outputs.append(x)
    return trace


def network_backward(net: NetworkSpec, trace: ActivationTrace,
                     injected_grads: dict[int, np.ndarray]) -> np.ndarray:
    """Reverse sweep to pixel gradients, accumulating injected per-layer gradients.

    injected_grads maps layer index -> d(objective)/d(that layer's output);
    the return value is d(objective)/d(input image).
    """
    n = len(net.layers)
    if len(trace.outputs) != n:
        raise ShapeError(f"trace has {len(trace.outputs)} outputs for {n} layers")
    for idx, g in injected_grads.items():
        if not 0 <= idx < n:
            raise ShapeError(f"injected gradient at layer {idx} is out of range [0, {n})")
        if g.shape != trace.outputs[idx].shape:
            raise ShapeError(
                f"injected gradient at layer {idx} has shape {g.shape}, "
                f"activation has {trace.outputs[idx].shape}"
            )
    if n == 0:
        return np.zeros_like(trace.input)
    g = np.zeros_like(trace.outputs[-1])
    for i in range(n - 1, -1, -1):
        if i in injected_grads:
            g = g + np.ascontiguousarray(injected_grads[i], dtype=np.float32)
        layer = net.layers[i]
        x_in = trace.input if i == 0 else trace.outputs[i - 1]
        if layer.kind == LayerKind.CONV:
            g = conv2d_backward_input(g, layer, x_in.shape[1:], layer_index=i)
        elif layer.kind == LayerKind.RELU:
            g = relu_backward(g, x_in)
        else:
            g = avgpool_backward(g, x_in.shape[1:], layer.window, layer.stride)
    return g


def save_weights(net: NetworkSpec) -> bytes:
    """Serialize a NetworkSpec into the TXSW little-endian weights format."""
    out = bytearray()
    out += WEIGHTS_MAGIC
    out += pack_u32(WEIGHTS_VERSION)
    out += pack_u32(len(net.layers))
    for layer in net.layers:
        out.append(int(layer.kind))
        if layer.kind == LayerKind.CONV:
            for v in (layer.out_channels, layer.in_channels, layer.kernel_h,
                      layer.kernel_w, layer.stride, layer.padding):
                out += pack_u32(v)
            out += pack_f32_array(layer.weights)
            out += pack_f32_array(layer.bias)
        elif layer.kind == LayerKind.AVGPOOL:
            out += pack_u32(layer.window)
            out += pack_u32(layer.stride)
    return bytes(out)


def load_weights(data: bytes) -> NetworkSpec:
    """Parse the TXSW weights format; rejects malformed or inconsistent streams.

    The format carries no explicit input channel count: it is taken from the
    first conv layer (0 if the network has none).
    """
    r = Reader(data)
    magic = r.take(4)
    if magic != WEIGHTS_MAGIC:
        raise BadMagicError(f"expected magic {WEIGHTS_MAGIC!r}, got {magic!r}")
    version = r.u32()
    if version != WEIGHTS_VERSION:
        raise UnsupportedVersionError(f"unsupported weights version {version}")
    layer_count = r.u32()
    layers: list[LayerSpec] = []
    for i in range(layer_count):
        kind = r.u8()
        if kind == LayerKind.CONV:
            out_c, in_c, kh, kw, stride, pad = (r.u32() for _ in range(6))
            if min(out_c, in_c, kh, kw, stride) < 1:
                raise FormatError(f"layer {i}: conv geometry must be positive")
            n_weights = out_c * in_c * kh * kw
            if 4 * (n_weights + out_c) > r.remaining:
                raise TruncatedStreamError(
                    f"layer {i}: declared {n_weights + out_c} floats exceed stream length"
                )
            weights = r.f32_array(n_weights).reshape(out_c, in_c, kh, kw)
            bias = r.f32_array(out_c)
            layers.append(LayerSpec.conv(weights, bias, stride=stride, padding=pad))
        elif kind == LayerKind.RELU:
            layers.append(LayerSpec.relu())
        elif kind == LayerKind.AVGPOOL:
            window = r.u32()
            stride = r.u32()
            if window < 1 or stride < 1:
                raise FormatError(f"layer {i}: avgpool geometry must be positive")
            layers.append(LayerSpec.avgpool(window, stride))
        else:
            raise FormatError(f"layer {i}: unknown layer kind {kind}")
    if not r.exhausted:
        raise FormatError(f"{r.remaining} trailing bytes after the declared layers")
    input_channels = 0
    for layer in layers:
        if layer.kind == LayerKind.CONV:
            input_channels = layer.in_channels
            break
    return NetworkSpec(layers=layers, input_channels=input_channels)


def seeded_test_network(seed: int, depth: int, channels: int,
                        input_channels: int = 3) -> NetworkSpec:
    """Deterministic conv/relu stack for desk-scale testing without pretrained weights.

    depth conv layers (3x3, stride 1, pad 1) each followed by a relu; weights
    are uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), biases zero.
    """
    if depth < 1:
        raise ShapeError(f"depth must be >= 1, got {depth}")
    if channels < 1 or input_channels < 1:
        raise ShapeError(f"channel counts must be >= 1, got {channels}, {input_channels}")
    rng = np.random.default_rng(seed)
    layers: list[LayerSpec] = []
    in_c = input_channels
    for _ in range(depth):
        fan_in = in_c * 9
        fan_out = channels * 9
        a = math.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-a, a, size=(channels, in_c, 3, 3)).astype(np.float32)
        bias = np.zeros(channels, dtype=np.float32)
        layers.append(LayerSpec.conv(weights, bias, stride=1, padding=1))
        layers.append(LayerSpec.relu())
        in_c = channels
    return NetworkSpec(layers=layers, input_channels=input_channels)
