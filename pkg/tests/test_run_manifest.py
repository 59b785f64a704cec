"""Tests for run manifest generation and validation."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest

from src.run_manifest import (
    build_run_manifest,
    file_sha256,
    manifest_path_for,
    validate_run_manifest,
    write_run_manifest,
)


@pytest.mark.light
def test_manifest_lists_digests_and_validates(tmp_path: Path):
    """マニフェストにハッシュとサイズが入り、検証を通ること。"""
    source = tmp_path / "in.ndjson"
    source.write_bytes(b'{"x":1}\n')
    output = tmp_path / "out.ndjson"
    output.write_bytes(b"abc\n")

    assert file_sha256(str(output)) == hashlib.sha256(b"abc\n").hexdigest()
    manifest = build_run_manifest(
        command="cluster-utxo",
        config={"decimals": 8},
        input_paths=[str(source)],
        output_paths=[str(output)],
        duration_seconds=0.12345,
        generated_at="2026-01-01T00:00:00Z",
    )
    assert manifest["duration_seconds"] == 0.123
    assert manifest["inputs"][0]["byte_size"] == 8
    assert manifest["outputs"][0]["sha256"] == hashlib.sha256(b"abc\n").hexdigest()

    path = manifest_path_for(str(output))
    assert path.endswith("out.ndjson.manifest.json")
    write_run_manifest(path, manifest)
    text = Path(path).read_text(encoding="utf-8")
    assert text.endswith("\n")
    assert json.loads(text)["command"] == "cluster-utxo"
    assert validate_run_manifest(path)["config"] == {"decimals": 8}


@pytest.mark.light
def test_validate_run_manifest_detects_modified_output(tmp_path: Path):
    """出力の改変をハッシュ不一致として検出する。"""
    output = tmp_path / "out.ndjson"
    output.write_bytes(b"abc\n")
    path = manifest_path_for(str(output), ".m.json")
    write_run_manifest(path, build_run_manifest("label", {}, [], [str(output)], 0.0))
    output.write_bytes(b"abd\n")
    with pytest.raises(RuntimeError, match="sha256 mismatch"):
        validate_run_manifest(path)
