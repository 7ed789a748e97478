"""Reader for the ONNX model serialization (protobuf wire format).

Decodes just the message subset a feed-forward inference graph needs: model
and graph structure, nodes with attributes, tensor initializers, and typed
value infos. No protobuf library is required; the wire format is three
primitive shapes (varints, 32/64-bit fixed words, and length-delimited
bytes), and field numbers here follow the published ONNX schema.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError


class WireFormatError(DataError):
    pass


# ONNX TensorProto.DataType values.
DT_FLOAT = 1
DT_UINT8 = 2
DT_INT8 = 3
DT_INT32 = 6
DT_INT64 = 7
DT_STRING = 8
DT_BOOL = 9
DT_DOUBLE = 11

NUMPY_DTYPES = {
    DT_FLOAT: np.dtype("<f4"),
    DT_UINT8: np.dtype("u1"),
    DT_INT8: np.dtype("i1"),
    DT_INT32: np.dtype("<i4"),
    DT_INT64: np.dtype("<i8"),
    DT_BOOL: np.dtype("?"),
    DT_DOUBLE: np.dtype("<f8"),
}

# AttributeProto.AttributeType values.
ATTR_FLOAT = 1
ATTR_INT = 2
ATTR_STRING = 3
ATTR_TENSOR = 4
ATTR_GRAPH = 5
ATTR_FLOATS = 6
ATTR_INTS = 7
ATTR_STRINGS = 8

_WIRE_VARINT = 0
_WIRE_FIXED64 = 1
_WIRE_LEN = 2
_WIRE_FIXED32 = 5


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise WireFormatError("truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise WireFormatError("varint longer than 10 bytes")


def _signed64(value: int) -> int:
    return value - (1 << 64) if value >= (1 << 63) else value


def _fields(buf: bytes):
    """Yield (field_number, wire_type, value) over a message's bytes.

    Varint fields yield ints, fixed fields raw 4/8 bytes, length-delimited
    fields a memoryview slice.
    """
    pos = 0
    view = memoryview(buf)
    while pos < len(buf):
        tag, pos = _read_varint(buf, pos)
        number, wire = tag >> 3, tag & 0x7
        if wire == _WIRE_VARINT:
            value, pos = _read_varint(buf, pos)
        elif wire == _WIRE_FIXED64:
            value = view[pos : pos + 8]
            pos += 8
        elif wire == _WIRE_LEN:
            length, pos = _read_varint(buf, pos)
            if pos + length > len(buf):
                raise WireFormatError(f"field {number}: length {length} overruns buffer")
            value = view[pos : pos + length]
            pos += length
        elif wire == _WIRE_FIXED32:
            value = view[pos : pos + 4]
            pos += 4
        else:
            raise WireFormatError(f"unsupported wire type {wire} for field {number}")
        yield number, wire, value


def _packed_varints(value, wire: int, signed: bool = True) -> list[int]:
    """Repeated int64 fields arrive packed (one blob) or as single varints."""
    if wire == _WIRE_VARINT:
        return [_signed64(value) if signed else value]
    out = []
    buf = bytes(value)
    pos = 0
    while pos < len(buf):
        item, pos = _read_varint(buf, pos)
        out.append(_signed64(item) if signed else item)
    return out


def _f32(value, wire: int) -> float:
    if wire != _WIRE_FIXED32:
        raise WireFormatError("expected a fixed32 float field")
    return struct.unpack("<f", bytes(value))[0]


def _packed_f32(value, wire: int) -> list[float]:
    if wire == _WIRE_FIXED32:
        return [struct.unpack("<f", bytes(value))[0]]
    data = bytes(value)
    return list(struct.unpack(f"<{len(data) // 4}f", data))


def _packed_f64(value, wire: int) -> list[float]:
    if wire == _WIRE_FIXED64:
        return [struct.unpack("<d", bytes(value))[0]]
    data = bytes(value)
    return list(struct.unpack(f"<{len(data) // 8}d", data))


def _text(value) -> str:
    return bytes(value).decode("utf-8")


@dataclass
class TensorProto:
    name: str = ""
    data_type: int = 0
    dims: list[int] = field(default_factory=list)
    raw_data: bytes = b""
    float_data: list[float] = field(default_factory=list)
    int32_data: list[int] = field(default_factory=list)
    int64_data: list[int] = field(default_factory=list)
    double_data: list[float] = field(default_factory=list)


@dataclass
class AttributeProto:
    name: str = ""
    type: int = 0
    f: float = 0.0
    i: int = 0
    s: bytes = b""
    t: TensorProto | None = None
    floats: list[float] = field(default_factory=list)
    ints: list[int] = field(default_factory=list)
    strings: list[bytes] = field(default_factory=list)


@dataclass
class ValueInfoProto:
    name: str = ""
    elem_type: int = 0
    shape: list[int | str | None] = field(default_factory=list)


@dataclass
class NodeProto:
    op_type: str = ""
    name: str = ""
    domain: str = ""
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    attributes: dict[str, AttributeProto] = field(default_factory=dict)


@dataclass
class GraphProto:
    name: str = ""
    nodes: list[NodeProto] = field(default_factory=list)
    initializers: list[TensorProto] = field(default_factory=list)
    inputs: list[ValueInfoProto] = field(default_factory=list)
    outputs: list[ValueInfoProto] = field(default_factory=list)


@dataclass
class ModelProto:
    ir_version: int = 0
    producer_name: str = ""
    producer_version: str = ""
    model_version: int = 0
    doc_string: str = ""
    opset_imports: dict[str, int] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)
    graph: GraphProto | None = None


def _parse_tensor(buf) -> TensorProto:
    t = TensorProto()
    for number, wire, value in _fields(bytes(buf)):
        if number == 1:
            t.dims.extend(_packed_varints(value, wire))
        elif number == 2:
            t.data_type = value
        elif number == 4:
            t.float_data.extend(_packed_f32(value, wire))
        elif number == 5:
            t.int32_data.extend(_packed_varints(value, wire))
        elif number == 7:
            t.int64_data.extend(_packed_varints(value, wire))
        elif number == 8:
            t.name = _text(value)
        elif number == 9:
            t.raw_data = bytes(value)
        elif number == 10:
            t.double_data.extend(_packed_f64(value, wire))
    return t


def tensor_to_numpy(t: TensorProto) -> np.ndarray:
    if t.data_type not in NUMPY_DTYPES:
        raise WireFormatError(f"tensor {t.name!r}: unsupported data type {t.data_type}")
    dtype = NUMPY_DTYPES[t.data_type]
    shape = tuple(t.dims)
    if t.raw_data:
        arr = np.frombuffer(t.raw_data, dtype=dtype)
    elif t.float_data:
        arr = np.asarray(t.float_data, dtype=dtype)
    elif t.int64_data:
        arr = np.asarray(t.int64_data, dtype=dtype)
    elif t.int32_data:
        arr = np.asarray(t.int32_data, dtype=dtype)
    elif t.double_data:
        arr = np.asarray(t.double_data, dtype=dtype)
    else:
        arr = np.zeros(int(np.prod(shape)) if shape else 0, dtype=dtype)
    expected = int(np.prod(shape)) if shape else arr.size
    if arr.size != expected:
        raise WireFormatError(
            f"tensor {t.name!r}: {arr.size} elements do not fill shape {shape}"
        )
    return arr.reshape(shape).copy()


def _parse_attribute(buf) -> AttributeProto:
    a = AttributeProto()
    for number, wire, value in _fields(bytes(buf)):
        if number == 1:
            a.name = _text(value)
        elif number == 2:
            a.f = _f32(value, wire)
        elif number == 3:
            a.i = _signed64(value)
        elif number == 4:
            a.s = bytes(value)
        elif number == 5:
            a.t = _parse_tensor(value)
        elif number == 7:
            a.floats.extend(_packed_f32(value, wire))
        elif number == 8:
            a.ints.extend(_packed_varints(value, wire))
        elif number == 9:
            a.strings.append(bytes(value))
        elif number == 20:
            a.type = value
    return a


def _parse_dimension(buf) -> int | str | None:
    dim: int | str | None = None
    for number, wire, value in _fields(bytes(buf)):
        if number == 1:
            dim = _signed64(value)
        elif number == 2:
            dim = _text(value)
    return dim


def _parse_value_info(buf) -> ValueInfoProto:
    vi = ValueInfoProto()
    for number, wire, value in _fields(bytes(buf)):
        if number == 1:
            vi.name = _text(value)
        elif number == 2:
            for tnum, _, tval in _fields(bytes(value)):
                if tnum != 1:  # TypeProto.tensor_type
                    continue
                for fnum, _, fval in _fields(bytes(tval)):
                    if fnum == 1:
                        vi.elem_type = fval
                    elif fnum == 2:
                        for snum, _, sval in _fields(bytes(fval)):
                            if snum == 1:
                                vi.shape.append(_parse_dimension(sval))
    return vi


def _parse_node(buf) -> NodeProto:
    n = NodeProto()
    for number, wire, value in _fields(bytes(buf)):
        if number == 1:
            n.inputs.append(_text(value))
        elif number == 2:
            n.outputs.append(_text(value))
        elif number == 3:
            n.name = _text(value)
        elif number == 4:
            n.op_type = _text(value)
        elif number == 5:
            attr = _parse_attribute(value)
            n.attributes[attr.name] = attr
        elif number == 7:
            n.domain = _text(value)
    return n


def _parse_graph(buf) -> GraphProto:
    g = GraphProto()
    for number, wire, value in _fields(bytes(buf)):
        if number == 1:
            g.nodes.append(_parse_node(value))
        elif number == 2:
            g.name = _text(value)
        elif number == 5:
            g.initializers.append(_parse_tensor(value))
        elif number == 11:
            g.inputs.append(_parse_value_info(value))
        elif number == 12:
            g.outputs.append(_parse_value_info(value))
    return g


def _parse_string_entry(buf) -> tuple[str, str]:
    key = value_text = ""
    for number, wire, value in _fields(bytes(buf)):
        if number == 1:
            key = _text(value)
        elif number == 2:
            value_text = _text(value)
    return key, value_text


def parse_model(data: bytes) -> ModelProto:
    m = ModelProto()
    for number, wire, value in _fields(data):
        if number == 1:
            m.ir_version = value
        elif number == 2:
            m.producer_name = _text(value)
        elif number == 3:
            m.producer_version = _text(value)
        elif number == 5:
            m.model_version = value
        elif number == 6:
            m.doc_string = _text(value)
        elif number == 7:
            m.graph = _parse_graph(value)
        elif number == 8:
            domain = ""
            version = 0
            for onum, _, oval in _fields(bytes(value)):
                if onum == 1:
                    domain = _text(oval)
                elif onum == 2:
                    version = oval
            m.opset_imports[domain] = version
        elif number == 14:
            key, entry = _parse_string_entry(value)
            m.metadata[key] = entry
    if m.graph is None:
        raise WireFormatError("model has no graph")
    return m


def load_model(path) -> ModelProto:
    with open(path, "rb") as fh:
        return parse_model(fh.read())
