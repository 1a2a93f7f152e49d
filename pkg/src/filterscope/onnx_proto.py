"""Minimal ONNX model reader built on a hand-rolled protobuf wire decoder.

Decodes just enough of the ONNX ModelProto schema to recover the node graph,
attributes, and initializer payloads as raw little-endian bytes. No protobuf
or onnx runtime dependency; opsets >= 7 are handled (the fields used here are
stable across opsets).

Subgraph-carrying attributes (If/Loop bodies) are noted but not descended
into; the node itself still appears in the graph.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

from .errors import ExternalDataUnsupported, MalformedProtobuf, MissingGraph

logger = logging.getLogger("filterscope.onnx")

# protobuf wire types
_VARINT = 0
_FIXED64 = 1
_LEN = 2
_FIXED32 = 5

# ONNX TensorProto.DataType values we can materialize as raw bytes
_DTYPE_NAMES = {
    1: "float32",
    2: "uint8",
    3: "int8",
    4: "uint16",
    5: "int16",
    6: "int32",
    7: "int64",
    9: "bool",
    10: "float16",
    11: "float64",
    12: "uint32",
    13: "uint64",
    16: "bfloat16",
}

FLOAT_DTYPES = ("float16", "float32", "float64")


class SubgraphAttr:
    """Placeholder for a GraphProto attribute value (not decoded)."""

    def __repr__(self) -> str:  # pragma: no cover
        return "SubgraphAttr()"


SKIPPED_SUBGRAPH = SubgraphAttr()


@dataclass
class TensorData:
    """One initializer: dtype name, shape, and raw little-endian payload."""

    dtype: str
    shape: tuple[int, ...]
    raw: bytes


@dataclass
class GraphNode:
    """One graph node with decoded attributes."""

    op_type: str
    inputs: list[str]
    outputs: list[str]
    attributes: dict[str, object] = field(default_factory=dict)
    name: str = ""


@dataclass
class ModelGraph:
    """Decoded model: ordered nodes, initializers, boundary tensors."""

    nodes: list[GraphNode] = field(default_factory=list)
    initializers: dict[str, TensorData] = field(default_factory=dict)
    graph_inputs: list[str] = field(default_factory=list)
    graph_outputs: list[str] = field(default_factory=list)
    opset: int = 0
    producer: str = ""


# --- wire primitives ---------------------------------------------------------

def _read_varint(buf: memoryview, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    end = len(buf)
    while True:
        if pos >= end:
            raise MalformedProtobuf("truncated varint")
        byte = buf[pos]
        result |= (byte & 0x7F) << shift
        pos += 1
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift >= 70:
            raise MalformedProtobuf("varint longer than 10 bytes")


def _as_int64(value: int) -> int:
    value &= (1 << 64) - 1
    return value - (1 << 64) if value >= (1 << 63) else value


def _iter_fields(buf: memoryview):
    """Yield (field_number, wire_type, payload) triples of one message.

    Payload is an int for varint/fixed widths and a memoryview for
    length-delimited fields.
    """
    pos = 0
    end = len(buf)
    while pos < end:
        tag, pos = _read_varint(buf, pos)
        field_no = tag >> 3
        wire = tag & 7
        if field_no == 0:
            raise MalformedProtobuf("field number 0")
        if wire == _VARINT:
            value, pos = _read_varint(buf, pos)
            yield field_no, wire, value
        elif wire == _FIXED64:
            if pos + 8 > end:
                raise MalformedProtobuf("truncated fixed64")
            yield field_no, wire, int.from_bytes(buf[pos:pos + 8], "little")
            pos += 8
        elif wire == _FIXED32:
            if pos + 4 > end:
                raise MalformedProtobuf("truncated fixed32")
            yield field_no, wire, int.from_bytes(buf[pos:pos + 4], "little")
            pos += 4
        elif wire == _LEN:
            size, pos = _read_varint(buf, pos)
            if pos + size > end:
                raise MalformedProtobuf("length-delimited field overruns buffer")
            yield field_no, wire, buf[pos:pos + size]
            pos += size
        else:
            raise MalformedProtobuf(f"unsupported wire type {wire}")


def _expect_len(wire: int, payload) -> memoryview:
    if wire != _LEN:
        raise MalformedProtobuf("expected length-delimited field")
    return payload


def _utf8(view: memoryview) -> str:
    return bytes(view).decode("utf-8", errors="replace")


def _packed_scalars(payload, wire: int, fmt: str, width: int) -> list:
    """Decode a repeated scalar field, packed or not."""
    if wire == _LEN:
        data = bytes(payload)
        if len(data) % width:
            raise MalformedProtobuf("packed field size not a multiple of element width")
        return list(struct.unpack(f"<{len(data) // width}{fmt}", data))
    return [struct.unpack(fmt, int(payload).to_bytes(width, "little"))[0]]


# --- message decoders --------------------------------------------------------

def _parse_tensor(buf: memoryview) -> tuple[str, TensorData]:
    dims: list[int] = []
    data_type = 0
    raw: bytes | None = None
    name = ""
    float_data: list[float] = []
    double_data: list[float] = []
    int32_data: list[int] = []
    int64_data: list[int] = []
    uint64_data: list[int] = []
    external = False

    for field_no, wire, payload in _iter_fields(buf):
        if field_no == 1:  # dims
            if wire == _LEN:
                pos = 0
                while pos < len(payload):
                    v, pos = _read_varint(payload, pos)
                    dims.append(_as_int64(v))
            else:
                dims.append(_as_int64(payload))
        elif field_no == 2 and wire == _VARINT:
            data_type = payload
        elif field_no == 4:  # float_data
            float_data.extend(_packed_scalars(payload, wire, "f", 4))
        elif field_no == 5:  # int32_data (also carries float16 payloads)
            if wire == _LEN:
                pos = 0
                while pos < len(payload):
                    v, pos = _read_varint(payload, pos)
                    int32_data.append(_as_int64(v))
            else:
                int32_data.append(_as_int64(payload))
        elif field_no == 7:  # int64_data
            if wire == _LEN:
                pos = 0
                while pos < len(payload):
                    v, pos = _read_varint(payload, pos)
                    int64_data.append(_as_int64(v))
            else:
                int64_data.append(_as_int64(payload))
        elif field_no == 8:
            name = _utf8(_expect_len(wire, payload))
        elif field_no == 9:
            raw = bytes(_expect_len(wire, payload))
        elif field_no == 10:  # double_data
            double_data.extend(_packed_scalars(payload, wire, "d", 8))
        elif field_no == 11:  # uint64_data
            if wire == _LEN:
                pos = 0
                while pos < len(payload):
                    v, pos = _read_varint(payload, pos)
                    uint64_data.append(v)
            else:
                uint64_data.append(payload)
        elif field_no == 13:  # external_data
            external = True
        elif field_no == 14 and wire == _VARINT and payload == 1:  # EXTERNAL
            external = True

    if external:
        raise ExternalDataUnsupported(
            f"initializer {name!r} uses external data; embed all tensors"
        )

    dtype = _DTYPE_NAMES.get(data_type, f"dtype_{data_type}")
    if raw is None:
        if float_data:
            raw = struct.pack(f"<{len(float_data)}f", *float_data)
        elif double_data:
            raw = struct.pack(f"<{len(double_data)}d", *double_data)
        elif int64_data:
            raw = struct.pack(f"<{len(int64_data)}q", *int64_data)
        elif int32_data and dtype == "float16":
            raw = struct.pack(f"<{len(int32_data)}H", *(v & 0xFFFF for v in int32_data))
        elif int32_data:
            raw = struct.pack(f"<{len(int32_data)}i", *int32_data)
        elif uint64_data:
            raw = struct.pack(f"<{len(uint64_data)}Q", *uint64_data)
        else:
            raw = b""
    return name, TensorData(dtype=dtype, shape=tuple(dims), raw=raw)


def _parse_attribute(buf: memoryview) -> tuple[str, object]:
    name = ""
    attr_type = 0
    f_val: float | None = None
    i_val: int | None = None
    s_val: str | None = None
    t_val: TensorData | None = None
    floats: list[float] = []
    ints: list[int] = []
    strings: list[str] = []
    has_graph = False

    for field_no, wire, payload in _iter_fields(buf):
        if field_no == 1:
            name = _utf8(_expect_len(wire, payload))
        elif field_no == 2:
            f_val = _packed_scalars(payload, wire, "f", 4)[0] if wire != _FIXED32 \
                else struct.unpack("<f", int(payload).to_bytes(4, "little"))[0]
        elif field_no == 3 and wire == _VARINT:
            i_val = _as_int64(payload)
        elif field_no == 4:
            s_val = _utf8(_expect_len(wire, payload))
        elif field_no == 5:
            _, t_val = _parse_tensor(_expect_len(wire, payload))
        elif field_no in (6, 11):  # g / graphs
            has_graph = True
        elif field_no == 7:
            floats.extend(_packed_scalars(payload, wire, "f", 4))
        elif field_no == 8:
            if wire == _LEN:
                pos = 0
                while pos < len(payload):
                    v, pos = _read_varint(payload, pos)
                    ints.append(_as_int64(v))
            else:
                ints.append(_as_int64(payload))
        elif field_no == 9:
            strings.append(_utf8(_expect_len(wire, payload)))
        elif field_no == 20 and wire == _VARINT:
            attr_type = payload

    by_type: dict[int, object] = {
        1: f_val, 2: i_val, 3: s_val, 4: t_val,
        6: floats, 7: ints, 8: strings,
    }
    if has_graph:
        return name, SKIPPED_SUBGRAPH
    if attr_type in by_type and by_type[attr_type] is not None:
        return name, by_type[attr_type]
    # type field absent: best-effort by which payload showed up
    for candidate in (i_val, f_val, s_val, t_val):
        if candidate is not None:
            return name, candidate
    if ints:
        return name, ints
    if floats:
        return name, floats
    if strings:
        return name, strings
    return name, None


def _parse_node(buf: memoryview) -> GraphNode:
    node = GraphNode(op_type="", inputs=[], outputs=[])
    for field_no, wire, payload in _iter_fields(buf):
        if field_no == 1:
            node.inputs.append(_utf8(_expect_len(wire, payload)))
        elif field_no == 2:
            node.outputs.append(_utf8(_expect_len(wire, payload)))
        elif field_no == 3:
            node.name = _utf8(_expect_len(wire, payload))
        elif field_no == 4:
            node.op_type = _utf8(_expect_len(wire, payload))
        elif field_no == 5:
            key, value = _parse_attribute(_expect_len(wire, payload))
            node.attributes[key] = value
    return node


def _value_info_name(buf: memoryview) -> str:
    for field_no, wire, payload in _iter_fields(buf):
        if field_no == 1:
            return _utf8(_expect_len(wire, payload))
    return ""


def _parse_graph(buf: memoryview, graph: ModelGraph) -> None:
    for field_no, wire, payload in _iter_fields(buf):
        if field_no == 1:
            graph.nodes.append(_parse_node(_expect_len(wire, payload)))
        elif field_no == 5:
            name, tensor = _parse_tensor(_expect_len(wire, payload))
            graph.initializers[name] = tensor
        elif field_no == 11:
            graph.graph_inputs.append(_value_info_name(_expect_len(wire, payload)))
        elif field_no == 12:
            graph.graph_outputs.append(_value_info_name(_expect_len(wire, payload)))


def _parse_opset(buf: memoryview) -> tuple[str, int]:
    domain = ""
    version = 0
    for field_no, wire, payload in _iter_fields(buf):
        if field_no == 1:
            domain = _utf8(_expect_len(wire, payload))
        elif field_no == 2 and wire == _VARINT:
            version = _as_int64(payload)
    return domain, version


def parse_model(data: bytes) -> ModelGraph:
    """Decode a protobuf-encoded ONNX ModelProto into a :class:`ModelGraph`.

    All initializers must be embedded in the file; tensors flagged as
    external raise :class:`ExternalDataUnsupported`.

    Raises:
        MalformedProtobuf: the bytes do not decode as a protobuf message.
        MissingGraph: the model has no graph field.
    """
    graph = ModelGraph()
    saw_graph = False
    try:
        for field_no, wire, payload in _iter_fields(memoryview(data)):
            if field_no == 7:
                _parse_graph(_expect_len(wire, payload), graph)
                saw_graph = True
            elif field_no == 2:
                graph.producer = _utf8(_expect_len(wire, payload))
            elif field_no == 8:
                domain, version = _parse_opset(_expect_len(wire, payload))
                if domain in ("", "ai.onnx"):
                    graph.opset = version
    except MalformedProtobuf:
        raise
    except (ExternalDataUnsupported, MissingGraph):
        raise
    except Exception as exc:  # defensive: any decode slip is a malformed input
        raise MalformedProtobuf(str(exc)) from exc

    if not saw_graph:
        raise MissingGraph("model proto has no graph")
    if any(isinstance(v, SubgraphAttr) for node in graph.nodes
           for v in node.attributes.values()):
        logger.warning("model contains subgraph attributes (If/Loop); bodies skipped")
    return graph
