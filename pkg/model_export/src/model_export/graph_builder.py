"""Name-managed graph assembly on top of the wire-format writer.

The builder keeps nodes and initializers in insertion order and derives
value names deterministically from caller-supplied stems, so the same build
sequence always serializes to identical bytes.
"""

from __future__ import annotations

import numpy as np

from . import onnx_writer as writer

OPSET = 17
IR_VERSION = 8


class GraphBuilder:
    def __init__(self, name: str):
        self.name = name
        self._nodes: list[bytes] = []
        self._initializers: list[bytes] = []
        self._used: set[str] = set()

    def _fresh(self, stem: str) -> str:
        name = stem
        serial = 1
        while name in self._used:
            name = f"{stem}_{serial}"
            serial += 1
        self._used.add(name)
        return name

    def initializer(self, stem: str, array: np.ndarray) -> str:
        name = self._fresh(stem)
        self._initializers.append(writer.tensor(name, array))
        return name

    def const_i64(self, stem: str, values: list[int]) -> str:
        return self.initializer(stem, np.asarray(values, dtype=np.int64))

    def scalar_i64(self, stem: str, value: int) -> str:
        return self.initializer(stem, np.asarray(value, dtype=np.int64))

    def node(
        self,
        op_type: str,
        inputs: list[str],
        out: str | None = None,
        outputs: list[str] | None = None,
        **attributes,
    ) -> str | list[str]:
        """Append a node; returns its output name (or names when several)."""
        if outputs is None:
            outputs = [self._fresh(out or op_type.lower())]
        else:
            for name in outputs:
                self._used.add(name)
        self._nodes.append(
            writer.node(op_type, inputs, outputs, name=self._fresh(f"node/{op_type}"), attributes=attributes)
        )
        return outputs[0] if len(outputs) == 1 else outputs

    def model_bytes(
        self,
        inputs: list[tuple[str, int, list[int | str]]],
        outputs: list[tuple[str, int, list[int | str]]],
        doc_string: str = "",
        metadata: dict[str, str] | None = None,
    ) -> bytes:
        graph_bytes = writer.graph(
            self.name,
            self._nodes,
            self._initializers,
            [writer.value_info(*spec) for spec in inputs],
            [writer.value_info(*spec) for spec in outputs],
        )
        return writer.model(
            graph_bytes,
            opset=OPSET,
            ir_version=IR_VERSION,
            producer_name="model-export",
            producer_version="0.1.0",
            doc_string=doc_string,
            metadata=metadata,
        )
