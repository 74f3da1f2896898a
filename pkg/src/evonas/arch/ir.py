"""Layer-level intermediate representation and analytic cost counting.

The IR is an ordered layer list over an implicit "current tensor": Conv, Pool
and Dense transform it, while three zero-cost markers express the non-linear
wiring that block and graph encodings need once flattened into a list:

* ``Ref(src)``    -- re-point the current tensor at the output of layer ``src``
                     (``src == -1`` is the network input),
* ``Skip(src)``   -- element-wise sum of layer ``src``'s output into the
                     current tensor (identity skip),
* ``Concat(src)`` -- channel-wise concatenation of layer ``src``'s output with
                     the current tensor.

Spatial conventions: convolutions are same-padded (``ceil(h / stride)``),
pooling windows floor-divide (``h // stride``). FLOPs are counted as
multiply-accumulates, not 2x MACs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import DecodeError, InvariantViolation
from .genotype import BlockKind, CellGraphPayload, FixedBinaryPayload, Genotype, Scheme

DEFAULT_STAGE_CHANNELS = 64
DEFAULT_CELL_CHANNELS = 32


@dataclass(frozen=True)
class Conv:
    kernel: int
    c_in: int
    c_out: int
    stride: int = 1
    bias: bool = True


@dataclass(frozen=True)
class Pool:
    kind: str  # "max" | "mean"
    kernel: int
    stride: int


@dataclass(frozen=True)
class Dense:
    n_in: int
    n_out: int
    bias: bool = True


@dataclass(frozen=True)
class Ref:
    src: int


@dataclass(frozen=True)
class Skip:
    src: int


@dataclass(frozen=True)
class Concat:
    src: int


LayerSpec = Conv | Pool | Dense | Ref | Skip | Concat

Shape = tuple[int, ...]  # (c, h, w) before flattening, (n,) after a Dense


@dataclass(frozen=True)
class ArchIR:
    """Shape-consistent network description; immutable once built."""

    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]


def check_shapes(ir: ArchIR) -> list[Shape]:
    """Propagate shapes through the layer list, returning each layer's output shape.

    This is the independent consistency pass: it re-derives every shape from
    the input and raises InvariantViolation on any mismatch, negative
    dimension, or dangling reference.
    """
    c, h, w = ir.input_shape
    if c <= 0 or h <= 0 or w <= 0:
        raise InvariantViolation(f"non-positive input shape {ir.input_shape}")
    shapes: list[Shape] = []
    cur: Shape = (c, h, w)

    def resolve(src: int, at: int) -> Shape:
        if src == -1:
            return (c, h, w)
        if not 0 <= src < at:
            raise InvariantViolation(f"layer {at} references out-of-range layer {src}")
        return shapes[src]

    for idx, layer in enumerate(ir.layers):
        if isinstance(layer, Conv):
            if len(cur) != 3 or cur[0] != layer.c_in:
                raise InvariantViolation(f"conv at {idx} expects {layer.c_in} channels, has {cur}")
            oh = -(-cur[1] // layer.stride)
            ow = -(-cur[2] // layer.stride)
            cur = (layer.c_out, oh, ow)
        elif isinstance(layer, Pool):
            if len(cur) != 3:
                raise InvariantViolation(f"pool at {idx} after flattening")
            oh, ow = cur[1] // layer.stride, cur[2] // layer.stride
            if oh < 1 or ow < 1:
                raise InvariantViolation(f"pool at {idx} collapses {cur[1]}x{cur[2]} below 1x1")
            cur = (cur[0], oh, ow)
        elif isinstance(layer, Dense):
            flat = math.prod(cur)
            if layer.n_in != flat:
                raise InvariantViolation(f"dense at {idx} expects {layer.n_in} inputs, has {flat}")
            cur = (layer.n_out,)
        elif isinstance(layer, Ref):
            cur = resolve(layer.src, idx)
        elif isinstance(layer, Skip):
            other = resolve(layer.src, idx)
            if other != cur:
                raise InvariantViolation(f"skip at {idx} sums shapes {other} and {cur}")
        elif isinstance(layer, Concat):
            other = resolve(layer.src, idx)
            if len(cur) != 3 or len(other) != 3 or other[1:] != cur[1:]:
                raise InvariantViolation(f"concat at {idx} joins shapes {other} and {cur}")
            cur = (cur[0] + other[0], cur[1], cur[2])
        else:  # pragma: no cover - exhaustive over LayerSpec
            raise InvariantViolation(f"unknown layer kind {layer!r}")
        if any(d <= 0 for d in cur):
            raise InvariantViolation(f"layer {idx} produced non-positive shape {cur}")
        shapes.append(cur)
    return shapes


def param_count(ir: ArchIR) -> int:
    """Trainable parameter count: k*k*c_in*c_out (+bias) per conv, n_in*n_out (+bias) per dense."""
    total = 0
    for layer in ir.layers:
        if isinstance(layer, Conv):
            total += layer.kernel * layer.kernel * layer.c_in * layer.c_out
            if layer.bias:
                total += layer.c_out
        elif isinstance(layer, Dense):
            total += layer.n_in * layer.n_out
            if layer.bias:
                total += layer.n_out
    return total


def flop_count(ir: ArchIR) -> int:
    """Multiply-accumulate count; pooling and wiring markers contribute zero."""
    shapes = check_shapes(ir)
    total = 0
    for layer, shape in zip(ir.layers, shapes):
        if isinstance(layer, Conv):
            _, oh, ow = shape
            total += layer.kernel * layer.kernel * layer.c_in * layer.c_out * oh * ow
        elif isinstance(layer, Dense):
            total += layer.n_in * layer.n_out
    return total


class _Builder:
    """Tracks the current tensor while appending layers; raises DecodeError on collapse."""

    def __init__(self, input_shape: tuple[int, int, int]):
        self.input_shape = input_shape
        self.layers: list[LayerSpec] = []
        self.shapes: list[Shape] = []
        self.cur: Shape = input_shape
        self.cur_idx = -1  # layer index producing the current tensor; -1 = input

    def shape_of(self, idx: int) -> Shape:
        return self.input_shape if idx == -1 else self.shapes[idx]

    def _push(self, layer: LayerSpec, shape: Shape) -> int:
        self.layers.append(layer)
        self.shapes.append(shape)
        self.cur, self.cur_idx = shape, len(self.layers) - 1
        return self.cur_idx

    def ref(self, src: int) -> None:
        if src != self.cur_idx:
            self._push(Ref(src), self.shape_of(src))

    def conv(self, kernel: int, c_out: int, stride: int = 1) -> int:
        c, h, w = self.cur
        return self._push(
            Conv(kernel, c, c_out, stride), (c_out, -(-h // stride), -(-w // stride))
        )

    def pool(self, kind: str, kernel: int, stride: int) -> int:
        c, h, w = self.cur
        oh, ow = h // stride, w // stride
        if oh < 1 or ow < 1:
            raise DecodeError(f"pooling collapses spatial size {h}x{w} below 1x1")
        return self._push(Pool(kind, kernel, stride), (c, oh, ow))

    def skip(self, src: int) -> int:
        if self.shape_of(src) != self.cur:
            raise DecodeError(f"skip joins incompatible shapes {self.shape_of(src)} vs {self.cur}")
        return self._push(Skip(src), self.cur)

    def concat(self, src: int) -> int:
        oc, oh, ow = self.shape_of(src)
        c, h, w = self.cur
        if (oh, ow) != (h, w):
            raise DecodeError("concat joins tensors with different spatial sizes")
        return self._push(Concat(src), (c + oc, h, w))

    def merge_sum(self, sources: list[int]) -> None:
        """Point the current tensor at the element-wise sum of the given outputs."""
        self.ref(sources[0])
        for src in sources[1:]:
            self.skip(src)

    def head(self, classes: int) -> None:
        n_in = math.prod(self.cur)
        self._push(Dense(n_in, classes), (classes,))

    def build(self) -> ArchIR:
        return ArchIR(self.input_shape, tuple(self.layers))


def _decode_fixed_binary(
    payload: FixedBinaryPayload,
    b: _Builder,
    stage_channels: tuple[int, ...] | None,
) -> None:
    channels = stage_channels or (DEFAULT_STAGE_CHANNELS,)
    for s, (k, bits) in enumerate(zip(payload.stage_sizes, payload.stage_bits())):
        ch = channels[s] if s < len(channels) else channels[-1]
        # edge (i, j) present iff the bit for pair (i, j), i < j, is set
        pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
        edges = {pair for pair, bit in zip(pairs, bits) if bit == "1"}
        stage_input = b.cur_idx
        node_out: list[int] = []
        for j in range(k):
            feeders = [node_out[i] for i in range(j) if (i, j) in edges]
            b.merge_sum(feeders or [stage_input])
            node_out.append(b.conv(3, ch))
        consumed = {i for (i, j) in edges}
        sinks = [node_out[i] for i in range(k) if i not in consumed]
        b.merge_sum(sinks)
        if s < len(payload.stage_sizes) - 1:
            b.pool("max", 2, 2)


def _decode_blocks(genes, b: _Builder) -> None:
    for gene in genes:
        if gene.kind is BlockKind.POOL:
            b.pool(gene.pool_type.value, 2, 2)
        elif gene.kind is BlockKind.RES_UNIT:
            for _ in range(gene.amount):
                first = b.conv(3, gene.out_channels)
                b.conv(3, gene.out_channels)
                b.skip(first)
        else:  # dense unit: conv output concatenated with the unit input
            for _ in range(gene.amount):
                unit_input = b.cur_idx
                b.conv(3, gene.out_channels)
                b.concat(unit_input)


def _decode_cell_graph(payload: CellGraphPayload, b: _Builder, cell_channels: int) -> None:
    b.conv(3, cell_channels)  # stem: every node then sees cell_channels
    stem = b.cur_idx
    node_out: list[int] = []
    for j, op in enumerate(payload.ops):
        feeders = [node_out[i] for i in payload.predecessors(j)]
        b.merge_sum(feeders or [stem])
        if op == "conv3":
            node_out.append(b.conv(3, cell_channels))
        elif op == "conv5":
            node_out.append(b.conv(5, cell_channels))
        elif op == "maxpool":
            node_out.append(b.pool("max", 3, 1))
        else:  # identity: the node's output is its merged input
            node_out.append(b.cur_idx)
    b.ref(node_out[payload.output_node])


def decode(
    g: Genotype,
    input_shape: tuple[int, int, int],
    head_classes: int,
    *,
    stage_channels: tuple[int, ...] | None = None,
    cell_channels: int = DEFAULT_CELL_CHANNELS,
) -> ArchIR:
    """Expand a genotype into a shape-consistent IR ending in Dense(., head_classes).

    Raises DecodeError when the architecture collapses the spatial size below
    1x1; channel configuration for the fixed-binary and cell-graph schemes is
    supplied by the encoding space (defaults shown above).
    """
    if head_classes <= 0:
        raise InvariantViolation("head_classes must be positive")
    if any(d <= 0 for d in input_shape):
        raise InvariantViolation(f"non-positive input shape {input_shape}")
    b = _Builder(input_shape)
    if g.scheme is Scheme.FIXED_BINARY:
        _decode_fixed_binary(g.payload, b, stage_channels)  # type: ignore[arg-type]
    elif g.scheme is Scheme.VARIABLE_BLOCKS:
        _decode_blocks(g.blocks, b)
    else:
        _decode_cell_graph(g.payload, b, cell_channels)  # type: ignore[arg-type]
    b.head(head_classes)
    return b.build()
