"""Gram-matrix texture statistics: descriptors, matching losses, and their gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._binary import Reader, pack_f32, pack_f32_array, pack_u32
from .errors import BadMagicError, FormatError, ShapeError
from .network import LayerKind, NetworkSpec, network_forward

GRAMSET_MAGIC = b"TXSG"


def flatten_features(activation: np.ndarray) -> np.ndarray:
    """Reshape a (channels, h, w) activation into the (n_filters, n_positions) matrix."""
    c, h, w = activation.shape
    return activation.reshape(c, h * w)


def gram(features: np.ndarray) -> np.ndarray:
    """G = F F^T with G_ij = sum_k F_ik F_jk, accumulated in float64.

    The upper triangle is mirrored into the lower one so each unordered pair
    holds a single inner-product value and symmetry is bitwise.
    """
    f = np.asarray(features, dtype=np.float64)
    g = f @ f.T
    iu = np.triu_indices(g.shape[0], k=1)
    g[(iu[1], iu[0])] = g[iu]
    return g


def layer_loss(g: np.ndarray, q: np.ndarray, n_filters: int, n_positions: int) -> float:
    """Normalized squared distance between two Gram matrices of one layer.

    E = 1 / (4 N^2 M^2) * sum_ij (G_ij - Q_ij)^2
    """
    if g.shape != (n_filters, n_filters) or q.shape != (n_filters, n_filters):
        raise ShapeError(
            f"gram matrices must both be ({n_filters}, {n_filters}), "
            f"got {g.shape} and {q.shape}"
        )
    diff = np.asarray(g, dtype=np.float64) - np.asarray(q, dtype=np.float64)
    denom = 4.0 * (float(n_filters) ** 2) * (float(n_positions) ** 2)
    return float(np.sum(diff * diff) / denom)


def total_loss(layer_losses, weights) -> float:
    """Weighted sum of per-layer losses, accumulated in float64."""
    if len(layer_losses) != len(weights):
        raise ShapeError(f"{len(layer_losses)} layer losses but {len(weights)} weights")
    return float(np.dot(np.asarray(layer_losses, dtype=np.float64),
                        np.asarray(weights, dtype=np.float64)))


def layer_loss_gradient(features: np.ndarray, g: np.ndarray, q: np.ndarray) -> np.ndarray:
    """d(layer_loss)/dF = (1 / (N^2 M^2)) (G - Q) F, an (N, M) matrix.

    The positive-activation gate belongs to the relu adjoint in the network
    sweep; descriptors attach to post-relu activations where F >= 0 already.
    """
    f = np.asarray(features, dtype=np.float64)
    n, m = f.shape
    if g.shape != (n, n) or q.shape != (n, n):
        raise ShapeError(f"gram matrices must be ({n}, {n}), got {g.shape} and {q.shape}")
    scale = (float(n) ** 2) * (float(m) ** 2)
    return ((np.asarray(g, dtype=np.float64) - np.asarray(q, dtype=np.float64)) @ f) / scale


@dataclass(eq=False)
class GramEntry:
    layer_index: int
    gram: np.ndarray  # (N, N) float64
    weight: float
    n_filters: int
    n_positions: int


@dataclass(eq=False)
class GramSet:
    """Per-layer Gram matrices with their weights; spatially agnostic texture statistics."""

    entries: list[GramEntry]

    def __post_init__(self):
        last = -1
        for e in self.entries:
            if e.layer_index <= last:
                raise ShapeError("gram set layer indices must be strictly increasing")
            if e.weight < 0:
                raise ShapeError(f"layer weight must be >= 0, got {e.weight}")
            if e.gram.shape != (e.n_filters, e.n_filters):
                raise ShapeError(
                    f"gram at layer {e.layer_index} has shape {e.gram.shape}, "
                    f"expected ({e.n_filters}, {e.n_filters})"
                )
            last = e.layer_index

    @property
    def layer_indices(self) -> tuple[int, ...]:
        return tuple(e.layer_index for e in self.entries)

    @property
    def layer_weights(self) -> tuple[float, ...]:
        return tuple(e.weight for e in self.entries)


def style_descriptor(net: NetworkSpec, image: np.ndarray, layer_indices,
                     layer_weights) -> GramSet:
    """Forward the image and collect the weighted Gram matrix at each selected layer."""
    indices = [int(i) for i in layer_indices]
    weights = [float(w) for w in layer_weights]
    if len(indices) != len(weights):
        raise ShapeError(f"{len(indices)} layer indices but {len(weights)} weights")
    if not indices:
        raise ShapeError("at least one style layer is required")
    for i in indices:
        if not 0 <= i < len(net.layers):
            raise ShapeError(f"style layer index {i} out of range [0, {len(net.layers)})")
    trace = network_forward(net, image)
    entries = []
    for i, w in zip(indices, weights):
        f = flatten_features(trace.outputs[i])
        entries.append(GramEntry(
            layer_index=i,
            gram=gram(f),
            weight=w,
            n_filters=f.shape[0],
            n_positions=f.shape[1],
        ))
    return GramSet(entries=entries)


def default_style_layers(net: NetworkSpec) -> list[int]:
    """Default descriptor attachment points.

    Pool-free networks (the seeded test nets) use every post-relu layer; pooled
    VGG-shaped networks use the relu after the first conv of each pool-delimited
    block.
    """
    has_pool = any(l.kind == LayerKind.AVGPOOL for l in net.layers)
    if not has_pool:
        return [i for i, l in enumerate(net.layers) if l.kind == LayerKind.RELU]
    picks = []
    block_done = False
    for i, layer in enumerate(net.layers):
        if layer.kind == LayerKind.AVGPOOL:
            block_done = False
        elif layer.kind == LayerKind.RELU and not block_done:
            picks.append(i)
            block_done = True
    return picks


def serialize_gram_set(gram_set: GramSet) -> bytes:
    """TXSG format: magic, u32 count, then per entry u32 layer, f32 weight,
    u32 N, u32 M, f32 gram values row-major. Little-endian throughout."""
    out = bytearray()
    out += GRAMSET_MAGIC
    out += pack_u32(len(gram_set.entries))
    for e in gram_set.entries:
        out += pack_u32(e.layer_index)
        out += pack_f32(e.weight)
        out += pack_u32(e.n_filters)
        out += pack_u32(e.n_positions)
        out += pack_f32_array(e.gram)
    return bytes(out)


def parse_gram_set(data: bytes) -> GramSet:
    r = Reader(data)
    magic = r.take(4)
    if magic != GRAMSET_MAGIC:
        raise BadMagicError(f"expected magic {GRAMSET_MAGIC!r}, got {magic!r}")
    count = r.u32()
    entries = []
    for _ in range(count):
        layer_index = r.u32()
        weight = r.f32()
        n = r.u32()
        m = r.u32()
        values = r.f32_array(n * n).astype(np.float64).reshape(n, n)
        entries.append(GramEntry(
            layer_index=layer_index,
            gram=values,
            weight=weight,
            n_filters=n,
            n_positions=m,
        ))
    if not r.exhausted:
        raise FormatError(f"{r.remaining} trailing bytes after the declared entries")
    return GramSet(entries=entries)
