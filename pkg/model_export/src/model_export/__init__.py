"""Model-bundle export tooling: reference encoders/classifier, an ONNX
wire-format writer, and bundle emission (graphs, tokenizer files,
preprocessing config, golden fixtures, hash manifest)."""

from .export import (
    BUNDLE_FILES,
    CheckpointMismatch,
    ExportError,
    export_clip,
    export_inception,
    missing_bundle_files,
)

__all__ = [
    "BUNDLE_FILES",
    "CheckpointMismatch",
    "ExportError",
    "export_clip",
    "export_inception",
    "missing_bundle_files",
]
