"""Locate regular 3x3 convolution layers in a decoded model and pull their
weights into a flat filter matrix with per-layer metadata.

Inclusion rule: op_type "Conv" (any group count, so depthwise convs are in),
kernel shape equal to the requested one, weight present as a rank-4
initializer laid out (c_out, c_in/groups, kH, kW). ConvTranspose and friends
never contribute filters.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CycleDetected,
    ShapeMismatch,
    UnsupportedDtype,
    WeightNotInitializer,
)
from .onnx_proto import FLOAT_DTYPES, ModelGraph, TensorData, parse_model

__all__ = [
    "LayerRecord",
    "ModelMeta",
    "parse_model",
    "compute_conv_depths",
    "extract_filters",
    "census",
    "ingest_model",
]

logger = logging.getLogger("filterscope.ingest")

DEFAULT_KERNEL = (3, 3)


@dataclass
class LayerRecord:
    """Metadata for one extracted convolution layer.

    ``filter_start``/``filter_count`` index into the owning filter matrix;
    ``layer_index`` is the node's position in the source graph.
    """

    model_id: int
    layer_index: int
    conv_depth: int
    conv_depth_norm: float
    c_in: int
    c_out: int
    groups: int
    filter_start: int
    filter_count: int


@dataclass
class ModelMeta:
    """Per-model metadata: identity tags plus graph censuses."""

    model_id: int
    name: str
    task: str = ""
    visual_category: str = ""
    training_dataset: str = ""
    producer: str = ""
    op_set: int = 0
    depth: int = 0
    total_filters: int = 0
    op_census: dict[str, int] = field(default_factory=dict)
    filter_shape_census: dict[tuple[int, int], int] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def _producer_map(graph: ModelGraph) -> dict[str, int]:
    producers: dict[str, int] = {}
    for idx, node in enumerate(graph.nodes):
        for out in node.outputs:
            if out:
                producers[out] = idx
    return producers


def _topo_order(graph: ModelGraph) -> list[int]:
    """Deterministic topological order (Kahn's algorithm, min node index first)."""
    producers = _producer_map(graph)
    n = len(graph.nodes)
    indegree = [0] * n
    dependents: list[list[int]] = [[] for _ in range(n)]
    for idx, node in enumerate(graph.nodes):
        for name in node.inputs:
            src = producers.get(name)
            if name and src is not None and src != idx:
                indegree[idx] += 1
                dependents[src].append(idx)

    ready = [i for i in range(n) if indegree[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        idx = heapq.heappop(ready)
        order.append(idx)
        for dep in dependents[idx]:
            indegree[dep] -= 1
            if indegree[dep] == 0:
                heapq.heappush(ready, dep)
    if len(order) != n:
        raise CycleDetected("node graph contains a cycle")
    return order


def compute_conv_depths(graph: ModelGraph) -> dict[int, int]:
    """Count Conv layers strictly below each node (longest-path semantics).

    Returns a node_index -> depth map for every node: for a Conv node the
    value is the maximum number of Conv nodes on any directed path from a
    graph input up to (excluding) the node itself; other nodes carry the
    running value so it propagates through them unchanged.

    Raises:
        CycleDetected: the graph is not a DAG.
    """
    producers = _producer_map(graph)
    depths: dict[int, int] = {}
    carry: dict[int, int] = {}
    for idx in _topo_order(graph):
        node = graph.nodes[idx]
        incoming = 0
        for name in node.inputs:
            src = producers.get(name)
            if name and src is not None and src != idx:
                incoming = max(incoming, carry[src])
        depths[idx] = incoming
        carry[idx] = incoming + (1 if node.op_type == "Conv" else 0)
    return depths


def _node_depth(graph: ModelGraph) -> int:
    """Longest node chain in the graph (total hierarchical depth)."""
    producers = _producer_map(graph)
    level: dict[int, int] = {}
    best = 0
    for idx in _topo_order(graph):
        node = graph.nodes[idx]
        incoming = 0
        for name in node.inputs:
            src = producers.get(name)
            if name and src is not None and src != idx:
                incoming = max(incoming, level[src])
        level[idx] = incoming + 1
        best = max(best, level[idx])
    return best


def _conv_weight(graph: ModelGraph, node_index: int) -> TensorData | None:
    node = graph.nodes[node_index]
    if len(node.inputs) < 2:
        return None
    return graph.initializers.get(node.inputs[1])


def _kernel_shape(node_attrs: dict, weight: TensorData | None) -> tuple[int, ...] | None:
    """Kernel shape from the attribute, falling back to weight trailing dims."""
    ks = node_attrs.get("kernel_shape")
    if isinstance(ks, list) and ks and all(isinstance(v, int) for v in ks):
        return tuple(ks)
    if weight is not None and len(weight.shape) >= 3:
        return tuple(weight.shape[2:])
    return None


def census(
    graph: ModelGraph, kernel: tuple[int, int] = DEFAULT_KERNEL
) -> tuple[dict[str, int], dict[tuple[int, int], int], int]:
    """Count ops and convolution filters per kernel shape.

    Returns (op_census, filter_shape_census, total_filters) where
    total_filters covers only Conv layers matching ``kernel`` (the layers
    extraction would include).
    """
    op_census: dict[str, int] = {}
    shape_census: dict[tuple[int, int], int] = {}
    total = 0
    for idx, node in enumerate(graph.nodes):
        op_census[node.op_type] = op_census.get(node.op_type, 0) + 1
        if node.op_type != "Conv":
            continue
        weight = _conv_weight(graph, idx)
        ks = _kernel_shape(node.attributes, weight)
        if ks is None or len(ks) != 2 or weight is None or len(weight.shape) != 4:
            continue
        count = int(weight.shape[0]) * int(weight.shape[1])
        key = (int(ks[0]), int(ks[1]))
        shape_census[key] = shape_census.get(key, 0) + count
        if key == tuple(kernel):
            total += count
    return op_census, shape_census, total


def _decode_weight(weight: TensorData, node_name: str) -> np.ndarray:
    if weight.dtype not in FLOAT_DTYPES:
        raise UnsupportedDtype(
            f"conv {node_name!r}: weight dtype {weight.dtype} not supported"
        )
    dt = np.dtype(weight.dtype).newbyteorder("<")
    expected = int(np.prod(weight.shape)) * dt.itemsize
    if len(weight.raw) != expected:
        raise ShapeMismatch(
            f"conv {node_name!r}: payload is {len(weight.raw)} bytes, "
            f"shape implies {expected}"
        )
    values = np.frombuffer(weight.raw, dtype=dt).reshape(weight.shape)
    return values.astype(np.float32)


def extract_filters(
    graph: ModelGraph,
    model_id: int = 0,
    kernel: tuple[int, int] = DEFAULT_KERNEL,
) -> tuple[np.ndarray, list[LayerRecord]]:
    """Pull every matching Conv layer's kernels into an (n, kH*kW) float32 matrix.

    Each (output channel, input channel) spatial slice becomes one row,
    flattened row-major. Layers appear in deterministic topological order and
    own contiguous row ranges. float16/float64 weights are converted to
    float32; float32 passes through bit-exact.

    Raises:
        WeightNotInitializer: an included layer's weight is a dynamic tensor.
        ShapeMismatch: a weight tensor is not rank 4 or its payload is short.
        UnsupportedDtype: integer/bfloat16 weights (out of scope).
    """
    depths = compute_conv_depths(graph)
    order = _topo_order(graph)

    conv_depths = {
        idx: depths[idx]
        for idx, node in enumerate(graph.nodes)
        if node.op_type == "Conv"
    }
    max_depth = max(conv_depths.values(), default=0)

    blocks: list[np.ndarray] = []
    layers: list[LayerRecord] = []
    start = 0
    for idx in order:
        node = graph.nodes[idx]
        if node.op_type != "Conv":
            continue
        weight = _conv_weight(graph, idx)
        ks = _kernel_shape(node.attributes, weight)
        if ks is None:
            raise WeightNotInitializer(
                f"conv {node.name!r}: weight is not an initializer and no "
                "kernel_shape attribute is present"
            )
        if tuple(ks) != tuple(kernel):
            continue
        if weight is None:
            raise WeightNotInitializer(
                f"conv {node.name!r}: weight is not an initializer"
            )
        if len(weight.shape) != 4:
            raise ShapeMismatch(
                f"conv {node.name!r}: weight rank {len(weight.shape)} != 4"
            )
        values = _decode_weight(weight, node.name)
        c_out, c_in_pg = int(weight.shape[0]), int(weight.shape[1])
        groups = node.attributes.get("group")
        groups = int(groups) if isinstance(groups, int) and groups >= 1 else 1
        count = c_out * c_in_pg
        blocks.append(values.reshape(count, -1))
        depth = conv_depths[idx]
        layers.append(
            LayerRecord(
                model_id=model_id,
                layer_index=idx,
                conv_depth=depth,
                conv_depth_norm=depth / max_depth if max_depth > 0 else 0.0,
                c_in=c_in_pg * groups,
                c_out=c_out,
                groups=groups,
                filter_start=start,
                filter_count=count,
            )
        )
        start += count

    width = int(kernel[0]) * int(kernel[1])
    if blocks:
        filters = np.concatenate(blocks, axis=0)
    else:
        filters = np.empty((0, width), dtype=np.float32)
    return filters, layers


def ingest_model(
    data: bytes,
    model_id: int = 0,
    name: str = "",
    task: str = "",
    visual_category: str = "",
    training_dataset: str = "",
    kernel: tuple[int, int] = DEFAULT_KERNEL,
) -> tuple[np.ndarray, list[LayerRecord], ModelMeta]:
    """Parse model bytes and run the full extraction + census pipeline."""
    graph = parse_model(data)
    op_census, shape_census, total = census(graph, kernel)
    filters, layers = extract_filters(graph, model_id=model_id, kernel=kernel)
    meta = ModelMeta(
        model_id=model_id,
        name=name,
        task=task,
        visual_category=visual_category,
        training_dataset=training_dataset,
        producer=graph.producer,
        op_set=graph.opset,
        depth=_node_depth(graph),
        total_filters=total,
        op_census=op_census,
        filter_shape_census=shape_census,
    )
    if total != len(filters):
        logger.warning(
            "census total %d != extracted rows %d", total, len(filters)
        )
    return filters, layers, meta
