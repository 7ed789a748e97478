#!/usr/bin/env python3
"""Export the image classifier with named probability and feature outputs.

Usage:
    export_inception.py --out <dir> [--config test] [--seed N]
    export_inception.py --out <dir> --checkpoint ckpt.pt --checkpoint-sha256 HEX

Writes classifier.onnx (outputs "probs" and "features"), preprocess.json, and
the classifier entries of golden_fixtures.json into the bundle directory,
alongside whatever the encoder export already placed there. Released-weight
exports require a local checkpoint whose sha256 must match
--checkpoint-sha256 exactly; any mismatch aborts before anything is written.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from model_export.export import (
    CheckpointMismatch,
    ExportError,
    export_inception,
    missing_bundle_files,
)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n", 1)[0])
    parser.add_argument("--out", required=True, type=Path, help="bundle directory to write")
    parser.add_argument(
        "--config",
        choices=("test", "full"),
        default="test",
        help="model size preset (default: test)",
    )
    parser.add_argument("--seed", type=int, default=0, help="weight seed for the test config")
    parser.add_argument("--checkpoint", type=Path, help="local checkpoint to export")
    parser.add_argument("--checkpoint-sha256", help="required digest of --checkpoint")
    args = parser.parse_args(argv)

    try:
        written = export_inception(
            args.out,
            config_name=args.config,
            seed=args.seed,
            checkpoint=args.checkpoint,
            checkpoint_sha256=args.checkpoint_sha256,
        )
    except (ExportError, CheckpointMismatch, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name in written:
        print(f"wrote {args.out / name}")
    remaining = missing_bundle_files(args.out)
    if remaining:
        print(f"bundle incomplete, still missing: {', '.join(remaining)}")
    else:
        print("bundle complete")
    return 0


if __name__ == "__main__":
    sys.exit(main())
