"""Minimal ONNX protobuf writer.

Serializes model/graph/node/tensor messages directly in protobuf wire format
(field numbers from the public onnx.proto schema), so exporting does not
depend on a converter library. Only the message subset an inference graph
needs is supported: float32/int64 tensors carried as little-endian raw bytes,
scalar and list attributes, and static value-info shapes with an optional
symbolic batch dimension.
"""

from __future__ import annotations

import struct

import numpy as np

# TensorProto.DataType values.
DT_FLOAT = 1
DT_INT64 = 7

_NP_TO_DT = {
    np.dtype(np.float32): DT_FLOAT,
    np.dtype(np.int64): DT_INT64,
}

# AttributeProto.AttributeType values.
_ATTR_FLOAT = 1
_ATTR_INT = 2
_ATTR_STRING = 3
_ATTR_TENSOR = 4
_ATTR_FLOATS = 6
_ATTR_INTS = 7

_MASK64 = (1 << 64) - 1


def _varint(value: int) -> bytes:
    value &= _MASK64  # negative int64 values encode as 10-byte two's complement
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _tag(field: int, wire_type: int) -> bytes:
    return _varint(field << 3 | wire_type)


def _int_field(field: int, value: int) -> bytes:
    return _tag(field, 0) + _varint(value)


def _bytes_field(field: int, payload: bytes) -> bytes:
    return _tag(field, 2) + _varint(len(payload)) + payload


def _str_field(field: int, text: str) -> bytes:
    return _bytes_field(field, text.encode("utf-8"))


def _float_field(field: int, value: float) -> bytes:
    return _tag(field, 5) + struct.pack("<f", value)


def tensor(name: str, array: np.ndarray) -> bytes:
    """TensorProto with the payload in raw_data (little-endian)."""
    arr = np.asarray(array)  # asarray keeps 0-d rank; tobytes() copies C-order
    if arr.dtype not in _NP_TO_DT:
        raise TypeError(f"unsupported tensor dtype {arr.dtype} for {name!r}")
    out = b"".join(_int_field(1, int(d)) for d in arr.shape)
    out += _int_field(2, _NP_TO_DT[arr.dtype])
    out += _str_field(8, name)
    out += _bytes_field(9, arr.tobytes())
    return out


def attribute(name: str, value) -> bytes:
    """AttributeProto; the python type selects the attribute type."""
    out = _str_field(1, name)
    if isinstance(value, bool):
        raise TypeError(f"attribute {name!r}: pass ints, not bools")
    if isinstance(value, int):
        out += _int_field(3, value) + _int_field(20, _ATTR_INT)
    elif isinstance(value, float):
        out += _float_field(2, value) + _int_field(20, _ATTR_FLOAT)
    elif isinstance(value, str):
        out += _bytes_field(4, value.encode("utf-8")) + _int_field(20, _ATTR_STRING)
    elif isinstance(value, np.ndarray):
        out += _bytes_field(5, tensor("", value)) + _int_field(20, _ATTR_TENSOR)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, int) for v in value):
        out += b"".join(_int_field(8, v) for v in value) + _int_field(20, _ATTR_INTS)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, float) for v in value):
        out += b"".join(_float_field(7, v) for v in value) + _int_field(20, _ATTR_FLOATS)
    else:
        raise TypeError(f"attribute {name!r}: unsupported value {value!r}")
    return out


def node(
    op_type: str,
    inputs: list[str],
    outputs: list[str],
    name: str = "",
    attributes: dict | None = None,
) -> bytes:
    """NodeProto."""
    out = b"".join(_str_field(1, i) for i in inputs)
    out += b"".join(_str_field(2, o) for o in outputs)
    if name:
        out += _str_field(3, name)
    out += _str_field(4, op_type)
    for attr_name, value in (attributes or {}).items():
        out += _bytes_field(5, attribute(attr_name, value))
    return out


def value_info(name: str, elem_type: int, dims: list[int | str]) -> bytes:
    """ValueInfoProto; string dims become symbolic dim_param entries."""
    shape = b""
    for d in dims:
        if isinstance(d, str):
            dim = _str_field(2, d)
        else:
            dim = _int_field(1, int(d))
        shape += _bytes_field(1, dim)
    tensor_type = _int_field(1, elem_type) + _bytes_field(2, shape)
    type_proto = _bytes_field(1, tensor_type)
    return _str_field(1, name) + _bytes_field(2, type_proto)


def graph(
    name: str,
    nodes: list[bytes],
    initializers: list[bytes],
    inputs: list[bytes],
    outputs: list[bytes],
) -> bytes:
    """GraphProto from already-encoded parts."""
    out = b"".join(_bytes_field(1, n) for n in nodes)
    out += _str_field(2, name)
    out += b"".join(_bytes_field(5, t) for t in initializers)
    out += b"".join(_bytes_field(11, vi) for vi in inputs)
    out += b"".join(_bytes_field(12, vi) for vi in outputs)
    return out


def model(
    graph_bytes: bytes,
    opset: int,
    ir_version: int,
    producer_name: str,
    producer_version: str = "",
    doc_string: str = "",
    metadata: dict[str, str] | None = None,
) -> bytes:
    """ModelProto with a single default-domain opset import."""
    out = _int_field(1, ir_version)
    out += _str_field(2, producer_name)
    if producer_version:
        out += _str_field(3, producer_version)
    if doc_string:
        out += _str_field(6, doc_string)
    out += _bytes_field(7, graph_bytes)
    out += _bytes_field(8, _int_field(2, opset))
    for key, value in (metadata or {}).items():
        out += _bytes_field(14, _str_field(1, key) + _str_field(2, value))
    return out
