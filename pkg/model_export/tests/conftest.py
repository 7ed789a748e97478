"""Shared fixture: a complete test-scale bundle exported once per session
through the command-line entry points, exactly as a user would run them."""

from __future__ import annotations

from pathlib import Path

import pytest

from script_runner import export_bundle


@pytest.fixture(scope="session")
def bundle_dir(tmp_path_factory) -> Path:
    return export_bundle(tmp_path_factory.mktemp("bundle"))
