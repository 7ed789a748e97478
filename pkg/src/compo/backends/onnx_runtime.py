"""Numpy executor for feed-forward ONNX graphs.

Covers the operator subset that transformer text/image encoders and small
convolutional classifiers compile to. Nodes run in stored order (graphs are
serialized topologically sorted); every kernel is a pure function, so
repeated runs are bitwise identical.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DataError, NumericalError
from .onnx_format import (
    ATTR_FLOAT,
    ATTR_FLOATS,
    ATTR_INT,
    ATTR_INTS,
    ATTR_STRING,
    ATTR_TENSOR,
    NUMPY_DTYPES,
    ModelProto,
    NodeProto,
    tensor_to_numpy,
)


class UnsupportedOp(DataError):
    pass


class GraphExecutionError(DataError):
    pass


def _attr_value(attr):
    if attr.type == ATTR_FLOAT:
        return attr.f
    if attr.type == ATTR_INT:
        return attr.i
    if attr.type == ATTR_STRING:
        return attr.s.decode("utf-8")
    if attr.type == ATTR_TENSOR:
        return tensor_to_numpy(attr.t)
    if attr.type == ATTR_FLOATS:
        return list(attr.floats)
    if attr.type == ATTR_INTS:
        return list(attr.ints)
    raise UnsupportedOp(f"attribute {attr.name!r} has unsupported type {attr.type}")


def _attrs(node: NodeProto) -> dict:
    return {name: _attr_value(attr) for name, attr in node.attributes.items()}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _pad_nchw(x: np.ndarray, pads, value=0.0) -> np.ndarray:
    # ONNX spatial pads: [top, left, bottom, right] for 2D.
    top, left, bottom, right = pads
    if not any(pads):
        return x
    return np.pad(
        x,
        ((0, 0), (0, 0), (top, bottom), (left, right)),
        mode="constant",
        constant_values=value,
    )


def _windows(x: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    # (N, C, H, W) -> (N, C, OH, OW, kh, kw) strided view, no copy.
    view = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    return view[:, :, ::sh, ::sw]


def _conv(x, w, b, attrs):
    strides = attrs.get("strides", [1, 1])
    pads = attrs.get("pads", [0, 0, 0, 0])
    dilations = attrs.get("dilations", [1, 1])
    group = attrs.get("group", 1)
    if list(dilations) != [1, 1]:
        raise UnsupportedOp("Conv with dilation != 1 is not supported")
    if attrs.get("auto_pad", "NOTSET") not in ("NOTSET", ""):
        raise UnsupportedOp("Conv auto_pad is not supported; use explicit pads")
    xp = _pad_nchw(x, pads)
    kh, kw = w.shape[2], w.shape[3]
    win = _windows(xp, kh, kw, strides[0], strides[1])
    if group == 1:
        out = np.einsum("nchwkl,mckl->nmhw", win, w, optimize=True)
    else:
        n, c = x.shape[0], x.shape[1]
        cg = c // group
        mg = w.shape[0] // group
        parts = []
        for g in range(group):
            parts.append(
                np.einsum(
                    "nchwkl,mckl->nmhw",
                    win[:, g * cg : (g + 1) * cg],
                    w[g * mg : (g + 1) * mg],
                    optimize=True,
                )
            )
        out = np.concatenate(parts, axis=1)
    if b is not None:
        out = out + b.reshape(1, -1, 1, 1)
    return out.astype(x.dtype, copy=False)


def _maxpool(x, attrs):
    kh, kw = attrs["kernel_shape"]
    strides = attrs.get("strides", [1, 1])
    pads = attrs.get("pads", [0, 0, 0, 0])
    if attrs.get("ceil_mode", 0):
        raise UnsupportedOp("MaxPool ceil_mode is not supported")
    xp = _pad_nchw(x, pads, value=-np.inf)
    win = _windows(xp, kh, kw, strides[0], strides[1])
    return win.max(axis=(4, 5)).astype(x.dtype, copy=False)


def _avgpool(x, attrs):
    kh, kw = attrs["kernel_shape"]
    strides = attrs.get("strides", [1, 1])
    pads = attrs.get("pads", [0, 0, 0, 0])
    if attrs.get("ceil_mode", 0) or attrs.get("count_include_pad", 0):
        raise UnsupportedOp("AveragePool ceil_mode/count_include_pad are not supported")
    if any(pads):
        raise UnsupportedOp("AveragePool with padding is not supported")
    win = _windows(x, kh, kw, strides[0], strides[1])
    return win.mean(axis=(4, 5)).astype(x.dtype, copy=False)


def _layer_norm(x, scale, bias, axis: int, epsilon: float):
    axes = tuple(range(axis if axis >= 0 else x.ndim + axis, x.ndim))
    mean = x.mean(axis=axes, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=axes, keepdims=True)
    normed = (x - mean) / np.sqrt(var + epsilon)
    out = normed * scale
    if bias is not None:
        out = out + bias
    return out.astype(x.dtype, copy=False)


def _gemm(a, b, c, attrs):
    alpha = attrs.get("alpha", 1.0)
    beta = attrs.get("beta", 1.0)
    if attrs.get("transA", 0):
        a = a.T
    if attrs.get("transB", 0):
        b = b.T
    out = alpha * (a @ b)
    if c is not None and beta != 0:
        out = out + beta * c
    return out.astype(a.dtype, copy=False)


def _reshape(data, shape, allowzero: int):
    shape = [int(s) for s in shape]
    if not allowzero:
        shape = [data.shape[i] if s == 0 else s for i, s in enumerate(shape)]
    return data.reshape(shape)


def _slice(data, starts, ends, axes=None, steps=None):
    ndim = data.ndim
    if axes is None:
        axes = list(range(len(starts)))
    if steps is None:
        steps = [1] * len(starts)
    index = [slice(None)] * ndim
    for start, end, axis, step in zip(starts, ends, axes, steps):
        axis = int(axis) % ndim
        index[axis] = slice(int(start), int(end), int(step))
    return data[tuple(index)]


def _reduce(op, data, axes, keepdims: int):
    if axes is None or len(axes) == 0:
        axes = tuple(range(data.ndim))
    else:
        axes = tuple(int(a) % data.ndim for a in axes)
    return op(data, axis=axes, keepdims=bool(keepdims)).astype(data.dtype, copy=False)


def _axes_from(node_attrs, inputs, values, position: int):
    """Reduce/Squeeze/Unsqueeze axes: attribute in older opsets, input later."""
    if "axes" in node_attrs:
        return node_attrs["axes"]
    if len(inputs) > position and inputs[position]:
        return [int(a) for a in values[inputs[position]].ravel()]
    return None


_ERF = np.vectorize(math.erf, otypes=[np.float64])


class GraphRunner:
    """Executes one parsed model graph over named input feeds."""

    def __init__(self, model: ModelProto):
        self.model = model
        self.graph = model.graph
        self.initializers = {t.name: tensor_to_numpy(t) for t in self.graph.initializers}
        self.input_infos = [vi for vi in self.graph.inputs if vi.name not in self.initializers]
        self.output_names = [vi.name for vi in self.graph.outputs]

    def run(self, feeds: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        values: dict[str, np.ndarray] = dict(self.initializers)
        for info in self.input_infos:
            if info.name not in feeds:
                raise GraphExecutionError(f"missing graph input {info.name!r}")
        values.update({k: np.asarray(v) for k, v in feeds.items()})
        for node in self.graph.nodes:
            try:
                outputs = self._run_node(node, values)
            except (UnsupportedOp, GraphExecutionError):
                raise
            except Exception as exc:
                raise GraphExecutionError(
                    f"node {node.name or node.op_type}: {exc}"
                ) from exc
            for name, out in zip(node.outputs, outputs):
                if name:
                    values[name] = out
        missing = [n for n in self.output_names if n not in values]
        if missing:
            raise GraphExecutionError(f"graph outputs never produced: {missing}")
        return {n: values[n] for n in self.output_names}

    def _run_node(self, node: NodeProto, values: dict) -> list[np.ndarray]:
        def inp(i: int, optional: bool = False):
            if i >= len(node.inputs) or not node.inputs[i]:
                if optional:
                    return None
                raise GraphExecutionError(f"{node.op_type}: missing input {i}")
            name = node.inputs[i]
            if name not in values:
                raise GraphExecutionError(f"{node.op_type}: input {name!r} not computed yet")
            return values[name]

        attrs = _attrs(node)
        op = node.op_type

        if op == "Add":
            return [inp(0) + inp(1)]
        if op == "Sub":
            return [inp(0) - inp(1)]
        if op == "Mul":
            return [inp(0) * inp(1)]
        if op == "Div":
            return [inp(0) / inp(1)]
        if op == "MatMul":
            a, b = inp(0), inp(1)
            return [(a @ b).astype(np.result_type(a.dtype, b.dtype), copy=False)]
        if op == "Gemm":
            return [_gemm(inp(0), inp(1), inp(2, optional=True), attrs)]
        if op == "Relu":
            return [np.maximum(inp(0), 0)]
        if op == "Sigmoid":
            return [_sigmoid(inp(0)).astype(inp(0).dtype, copy=False)]
        if op == "Tanh":
            return [np.tanh(inp(0))]
        if op == "Erf":
            x = inp(0)
            return [_ERF(x).astype(x.dtype, copy=False)]
        if op == "Exp":
            return [np.exp(inp(0))]
        if op == "Log":
            return [np.log(inp(0))]
        if op == "Sqrt":
            return [np.sqrt(inp(0))]
        if op == "Neg":
            return [-inp(0)]
        if op == "Abs":
            return [np.abs(inp(0))]
        if op == "Pow":
            return [np.power(inp(0), inp(1)).astype(inp(0).dtype, copy=False)]
        if op == "Softmax":
            return [_softmax(inp(0), attrs.get("axis", -1))]
        if op == "LayerNormalization":
            x = inp(0)
            out = _layer_norm(
                x, inp(1), inp(2, optional=True),
                attrs.get("axis", -1), attrs.get("epsilon", 1e-5),
            )
            return [out] + [np.empty(0, np.float32)] * (len(node.outputs) - 1)
        if op == "BatchNormalization":
            x, scale, bias, mean, var = inp(0), inp(1), inp(2), inp(3), inp(4)
            eps = attrs.get("epsilon", 1e-5)
            shape = (1, -1) + (1,) * (x.ndim - 2)
            out = (x - mean.reshape(shape)) / np.sqrt(var.reshape(shape) + eps)
            return [(out * scale.reshape(shape) + bias.reshape(shape)).astype(x.dtype, copy=False)]
        if op == "Conv":
            return [_conv(inp(0), inp(1), inp(2, optional=True), attrs)]
        if op == "MaxPool":
            return [_maxpool(inp(0), attrs)]
        if op == "AveragePool":
            return [_avgpool(inp(0), attrs)]
        if op == "GlobalAveragePool":
            x = inp(0)
            return [x.mean(axis=tuple(range(2, x.ndim)), keepdims=True).astype(x.dtype, copy=False)]
        if op == "Reshape":
            return [_reshape(inp(0), inp(1).ravel(), attrs.get("allowzero", 0))]
        if op == "Transpose":
            x = inp(0)
            perm = attrs.get("perm") or list(range(x.ndim))[::-1]
            return [np.transpose(x, perm)]
        if op == "Concat":
            parts = [inp(i) for i in range(len(node.inputs))]
            return [np.concatenate(parts, axis=attrs["axis"])]
        if op == "Split":
            x = inp(0)
            axis = attrs.get("axis", 0)
            if len(node.inputs) > 1 and node.inputs[1]:
                sizes = [int(s) for s in inp(1).ravel()]
            elif "split" in attrs:
                sizes = [int(s) for s in attrs["split"]]
            else:
                count = len(node.outputs)
                size = x.shape[axis] // count
                sizes = [size] * count
            return list(np.split(x, np.cumsum(sizes)[:-1], axis=axis))
        if op == "Gather":
            data, indices = inp(0), inp(1)
            return [np.take(data, indices.astype(np.int64), axis=attrs.get("axis", 0))]
        if op == "Shape":
            x = inp(0)
            start = attrs.get("start", 0)
            end = attrs.get("end", x.ndim)
            return [np.asarray(x.shape[start:end], dtype=np.int64)]
        if op == "Expand":
            x, shape = inp(0), [int(s) for s in inp(1).ravel()]
            target = np.broadcast_shapes(x.shape, tuple(shape))
            return [np.broadcast_to(x, target).copy()]
        if op == "Cast":
            to = attrs["to"]
            if to not in NUMPY_DTYPES:
                raise UnsupportedOp(f"Cast to data type {to} is not supported")
            return [inp(0).astype(NUMPY_DTYPES[to])]
        if op == "Slice":
            starts = [int(v) for v in inp(1).ravel()]
            ends = [int(v) for v in inp(2).ravel()]
            axes_in = inp(3, optional=True)
            steps_in = inp(4, optional=True)
            axes = None if axes_in is None else [int(v) for v in axes_in.ravel()]
            steps = None if steps_in is None else [int(v) for v in steps_in.ravel()]
            return [_slice(inp(0), starts, ends, axes, steps)]
        if op == "Squeeze":
            x = inp(0)
            axes = _axes_from(attrs, node.inputs, values, 1)
            if axes is None:
                return [np.squeeze(x)]
            return [np.squeeze(x, axis=tuple(int(a) % x.ndim for a in axes))]
        if op == "Unsqueeze":
            x = inp(0)
            axes = _axes_from(attrs, node.inputs, values, 1)
            if axes is None:
                raise GraphExecutionError("Unsqueeze requires axes")
            out = x
            for a in sorted(int(a) % (x.ndim + len(axes)) for a in axes):
                out = np.expand_dims(out, a)
            return [out]
        if op == "Flatten":
            x = inp(0)
            axis = attrs.get("axis", 1)
            if axis < 0:
                axis += x.ndim
            lead = int(np.prod(x.shape[:axis])) if axis else 1
            return [x.reshape(lead, -1)]
        if op in ("ReduceSum", "ReduceMean", "ReduceMax", "ReduceMin"):
            x = inp(0)
            axes = _axes_from(attrs, node.inputs, values, 1)
            if axes is None and attrs.get("noop_with_empty_axes", 0):
                return [x]
            fn = {
                "ReduceSum": np.sum,
                "ReduceMean": np.mean,
                "ReduceMax": np.max,
                "ReduceMin": np.min,
            }[op]
            return [_reduce(fn, x, axes, attrs.get("keepdims", 1))]
        if op == "Constant":
            if "value" in attrs:
                return [attrs["value"]]
            for key, dtype in (
                ("value_float", np.float32),
                ("value_int", np.int64),
            ):
                if key in attrs:
                    return [np.asarray(attrs[key], dtype=dtype)]
            if "value_floats" in attrs:
                return [np.asarray(attrs["value_floats"], dtype=np.float32)]
            if "value_ints" in attrs:
                return [np.asarray(attrs["value_ints"], dtype=np.int64)]
            raise UnsupportedOp("Constant node without a supported value attribute")
        if op == "ConstantOfShape":
            shape = [int(s) for s in inp(0).ravel()]
            fill = attrs.get("value")
            if fill is None:
                return [np.zeros(shape, dtype=np.float32)]
            return [np.full(shape, fill.ravel()[0], dtype=fill.dtype)]
        if op in ("Identity", "Dropout"):
            outs = [inp(0)]
            if op == "Dropout" and len(node.outputs) > 1:
                outs.append(np.ones(inp(0).shape, dtype=bool))
            return outs
        if op == "Clip":
            x = inp(0)
            lo = inp(1, optional=True)
            hi = inp(2, optional=True)
            return [np.clip(x, None if lo is None else lo, None if hi is None else hi)]
        if op == "Where":
            return [np.where(inp(0), inp(1), inp(2))]
        if op == "Equal":
            return [inp(0) == inp(1)]
        if op == "Range":
            start, limit, delta = inp(0), inp(1), inp(2)
            return [np.arange(start.item(), limit.item(), delta.item(), dtype=start.dtype)]
        raise UnsupportedOp(f"operator {op!r} is not implemented")


def check_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"graph output {name!r} contains non-finite values")
    return arr
