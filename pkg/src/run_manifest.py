"""Run manifests written next to every primary output file."""

from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone

from src import __version__

DEFAULT_MANIFEST_SUFFIX = ".manifest.json"


def utc_now_iso() -> str:
    """Return current UTC timestamp in ISO8601 format with Z suffix."""
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


def file_sha256(path: str) -> str:
    """Compute SHA-256 hex digest for a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as file_obj:
        while True:
            chunk = file_obj.read(1024 * 1024)
            if not chunk:
                break
            digest.update(chunk)
    return digest.hexdigest()


def file_byte_size(path: str) -> int:
    """Return file size in bytes."""
    return os.path.getsize(path)


def manifest_path_for(output_path: str, suffix: str = DEFAULT_MANIFEST_SUFFIX) -> str:
    return output_path + suffix


def build_run_manifest(
    command: str,
    config: dict,
    input_paths: list[str],
    output_paths: list[str],
    duration_seconds: float,
    generated_at: str | None = None,
) -> dict:
    """Build the manifest payload: command, config, input/output digests, version, timing."""
    return {
        "command": command,
        "tool_version": __version__,
        "generated_at": generated_at or utc_now_iso(),
        "duration_seconds": round(duration_seconds, 3),
        "config": config,
        "inputs": [
            {"path": path, "sha256": file_sha256(path), "byte_size": file_byte_size(path)}
            for path in input_paths
        ],
        "outputs": [
            {"path": path, "sha256": file_sha256(path), "byte_size": file_byte_size(path)}
            for path in output_paths
        ],
    }


def write_run_manifest(manifest_path: str, manifest: dict) -> None:
    """Write the manifest in UTF-8 with trailing newline."""
    os.makedirs(os.path.dirname(manifest_path) or ".", exist_ok=True)
    with open(manifest_path, "w", encoding="utf-8") as file_obj:
        json.dump(manifest, file_obj, ensure_ascii=False, indent=2)
        file_obj.write("\n")


def validate_run_manifest(manifest_path: str) -> dict:
    """Re-hash every listed output and raise when the manifest no longer matches."""
    with open(manifest_path, "r", encoding="utf-8") as file_obj:
        manifest = json.load(file_obj)

    for key in ("command", "tool_version", "inputs", "outputs"):
        if key not in manifest:
            raise RuntimeError(f"{manifest_path}: missing key {key}")
    for entry in manifest["outputs"]:
        path = entry.get("path")
        if not path or not os.path.exists(path):
            raise RuntimeError(f"{manifest_path}: output not found: {path}")
        if entry.get("sha256") != file_sha256(path):
            raise RuntimeError(f"{manifest_path}: sha256 mismatch for {path}")
        if entry.get("byte_size") != file_byte_size(path):
            raise RuntimeError(f"{manifest_path}: byte_size mismatch for {path}")
    return manifest
