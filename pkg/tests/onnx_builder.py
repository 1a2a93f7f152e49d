"""Hand-rolled ONNX ModelProto encoder for test fixtures.

Writes just the protobuf fields the toolkit reads: graph nodes with
attributes, embedded initializers, graph inputs/outputs, opset, producer.
Keeps tests free of any onnx/protobuf dependency and makes every byte of a
fixture explicit.
"""

from __future__ import annotations

import struct

import numpy as np

DTYPE_CODES = {"float32": 1, "float16": 10, "float64": 11, "int64": 7, "int32": 6}


def varint(value: int) -> bytes:
    value &= (1 << 64) - 1
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def tag(field_no: int, wire: int) -> bytes:
    return varint((field_no << 3) | wire)


def len_field(field_no: int, payload: bytes) -> bytes:
    return tag(field_no, 2) + varint(len(payload)) + payload


def str_field(field_no: int, value: str) -> bytes:
    return len_field(field_no, value.encode("utf-8"))


def int_field(field_no: int, value: int) -> bytes:
    return tag(field_no, 0) + varint(value)


def tensor(
    name: str,
    array: np.ndarray | None = None,
    *,
    dims: tuple[int, ...] | None = None,
    dtype: str = "float32",
    typed_floats: bool = False,
    external: bool = False,
) -> bytes:
    """Encode a TensorProto. Default path stores raw little-endian bytes.

    With ``typed_floats`` the payload goes into the packed float_data /
    double_data field instead of raw_data.
    """
    if array is not None:
        array = np.asarray(array, dtype=dtype)
        dims = array.shape
    assert dims is not None
    out = bytearray()
    for d in dims:
        out += int_field(1, d)
    out += int_field(2, DTYPE_CODES[dtype])
    if external:
        entry = str_field(1, "location") + str_field(2, "weights.bin")
        out += len_field(13, entry)
        out += int_field(14, 1)  # data_location = EXTERNAL
    elif typed_floats:
        flat = array.reshape(-1)
        if dtype == "float32":
            out += len_field(4, struct.pack(f"<{flat.size}f", *flat.tolist()))
        elif dtype == "float64":
            out += len_field(10, struct.pack(f"<{flat.size}d", *flat.tolist()))
        elif dtype == "float16":
            packed = b"".join(varint(int(v)) for v in flat.view(np.uint16).tolist())
            out += len_field(5, packed)
        else:
            raise ValueError(dtype)
    elif array is not None:
        raw = array.astype(np.dtype(dtype).newbyteorder("<")).tobytes(order="C")
        out += len_field(9, raw)
    out += str_field(8, name)
    return bytes(out)


def attr_int(name: str, value: int) -> bytes:
    return str_field(1, name) + int_field(3, value) + int_field(20, 2)


def attr_ints(name: str, values: list[int]) -> bytes:
    out = str_field(1, name)
    for v in values:
        out += int_field(8, v)
    return out + int_field(20, 7)


def attr_graph(name: str) -> bytes:
    return str_field(1, name) + len_field(6, b"") + int_field(20, 5)


def node(
    op_type: str,
    inputs: list[str],
    outputs: list[str],
    attrs: list[bytes] = (),
    name: str = "",
) -> bytes:
    out = bytearray()
    for i in inputs:
        out += str_field(1, i)
    for o in outputs:
        out += str_field(2, o)
    if name:
        out += str_field(3, name)
    out += str_field(4, op_type)
    for a in attrs:
        out += len_field(5, a)
    return bytes(out)


def value_info(name: str) -> bytes:
    return str_field(1, name)


def graph(
    nodes: list[bytes],
    initializers: list[bytes] = (),
    inputs: list[str] = (),
    outputs: list[str] = (),
) -> bytes:
    out = bytearray()
    for n in nodes:
        out += len_field(1, n)
    out += str_field(2, "g")
    for t in initializers:
        out += len_field(5, t)
    for i in inputs:
        out += len_field(11, value_info(i))
    for o in outputs:
        out += len_field(12, value_info(o))
    return bytes(out)


def model(graph_bytes: bytes, opset: int = 13, producer: str = "fixture") -> bytes:
    out = bytearray()
    out += int_field(1, 8)  # ir_version
    out += str_field(2, producer)
    out += len_field(7, graph_bytes)
    out += len_field(8, str_field(1, "") + int_field(2, opset))
    return bytes(out)


# --- ready-made fixture models ------------------------------------------------


def conv_node(
    name: str,
    inp: str,
    out: str,
    weight: str,
    kernel: tuple[int, int] | None = (3, 3),
    groups: int | None = None,
) -> bytes:
    attrs = []
    if kernel is not None:
        attrs.append(attr_ints("kernel_shape", list(kernel)))
    if groups is not None:
        attrs.append(attr_int("group", groups))
    return node("Conv", [inp, weight], [out], attrs, name=name)


def patterned(c_out: int, c_in: int, kh: int = 3, kw: int = 3, base: float = 0.0):
    """Deterministic weight tensor with distinct entries."""
    size = c_out * c_in * kh * kw
    return (np.arange(size, dtype=np.float32) * 0.125 + base).reshape(
        c_out, c_in, kh, kw
    )


def chain_model():
    """Conv -> Relu -> Conv -> Conv; expected conv depths 0, 1, 2."""
    w0 = patterned(2, 1, base=1.0)
    w1 = patterned(2, 2, base=-3.0)
    w2 = patterned(1, 2, base=5.0)
    g = graph(
        nodes=[
            conv_node("c0", "x", "t0", "w0"),
            node("Relu", ["t0"], ["t1"]),
            conv_node("c1", "t1", "t2", "w1"),
            conv_node("c2", "t2", "y", "w2"),
        ],
        initializers=[tensor("w0", w0), tensor("w1", w1), tensor("w2", w2)],
        inputs=["x"],
        outputs=["y"],
    )
    expected = np.concatenate(
        [w.reshape(-1, 9) for w in (w0, w1, w2)], axis=0
    )
    return model(g), expected, {"c0": 0, "c1": 1, "c2": 2}


def diamond_model():
    """input -> (ConvA | ConvB) -> Add -> ConvC; ConvC depth = 1."""
    wa = patterned(1, 1, base=0.5)
    wb = patterned(1, 1, base=-0.5)
    wc = patterned(2, 1, base=2.0)
    g = graph(
        nodes=[
            conv_node("a", "x", "ta", "wa"),
            conv_node("b", "x", "tb", "wb"),
            node("Add", ["ta", "tb"], ["ts"]),
            conv_node("c", "ts", "y", "wc"),
        ],
        initializers=[tensor("wa", wa), tensor("wb", wb), tensor("wc", wc)],
        inputs=["x"],
        outputs=["y"],
    )
    expected = np.concatenate([w.reshape(-1, 9) for w in (wa, wb, wc)], axis=0)
    return model(g), expected, {"a": 0, "b": 0, "c": 1}


def depthwise_model():
    """Depthwise conv: c_out=4, groups=4, weight (4, 1, 3, 3) -> 4 filters."""
    w = patterned(4, 1, base=-1.0)
    g = graph(
        nodes=[conv_node("dw", "x", "y", "w", groups=4)],
        initializers=[tensor("w", w)],
        inputs=["x"],
        outputs=["y"],
    )
    return model(g), w.reshape(4, 9)


def mixed_kernel_model():
    """One 3x3 conv and one 5x5 conv; only the 3x3 layer is extracted."""
    w3 = patterned(2, 2, base=0.25)
    w5 = patterned(1, 2, kh=5, kw=5, base=0.0)
    g = graph(
        nodes=[
            conv_node("k3", "x", "t", "w3"),
            conv_node("k5", "t", "y", "w5", kernel=(5, 5)),
        ],
        initializers=[tensor("w3", w3), tensor("w5", w5)],
        inputs=["x"],
        outputs=["y"],
    )
    return model(g), w3.reshape(4, 9)


def transpose_model():
    """Conv followed by ConvTranspose; the transpose contributes nothing."""
    w = patterned(2, 1, base=0.75)
    wt = patterned(2, 2, base=-2.0)
    g = graph(
        nodes=[
            conv_node("c", "x", "t", "w"),
            node(
                "ConvTranspose",
                ["t", "wt"],
                ["y"],
                [attr_ints("kernel_shape", [3, 3])],
            ),
        ],
        initializers=[tensor("w", w), tensor("wt", wt)],
        inputs=["x"],
        outputs=["y"],
    )
    return model(g), w.reshape(2, 9)


def single_conv_model(weight: np.ndarray | None = None, dtype: str = "float32",
                      typed_floats: bool = False, with_kernel_attr: bool = True):
    """One conv layer; weight defaults to a known 1x1x3x3 pattern."""
    if weight is None:
        weight = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
    w = tensor("w", weight.astype(dtype), dtype=dtype, typed_floats=typed_floats)
    g = graph(
        nodes=[
            conv_node("only", "x", "y", "w",
                      kernel=(3, 3) if with_kernel_attr else None)
        ],
        initializers=[w],
        inputs=["x"],
        outputs=["y"],
    )
    return model(g), weight
